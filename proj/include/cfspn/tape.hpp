#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfspn::ad {

/// Thrown when a recorded primitive is evaluated outside its domain
/// (log of a nonpositive value, division by zero). Forward values are
/// checked at record time so a bad input never propagates as NaN.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Handle {
  int node = -1;
  bool valid() const { return node >= 0; }
};

/// Append-only reverse-mode differentiation record over real matrices.
/// Scalars are 1x1 matrices; binary elementwise primitives broadcast a
/// 1x1 operand against any shape. Forward values are computed eagerly as
/// operations are recorded, and backward() walks the record once in
/// reverse order, so gradients are exact and bit-reproducible for
/// identical tapes.
class Tape {
public:
  // inputs
  Handle constant(double v);
  Handle constant(const Eigen::MatrixXd& m);
  Handle param(double v);
  Handle param(const Eigen::MatrixXd& m);

  // elementwise
  Handle add(Handle a, Handle b);
  Handle sub(Handle a, Handle b);
  Handle mul(Handle a, Handle b);
  Handle div(Handle a, Handle b);
  Handle neg(Handle a);
  Handle exp(Handle a);
  Handle log(Handle a);
  Handle sin(Handle a);
  Handle cos(Handle a);
  Handle tan(Handle a);
  Handle pow(Handle a, double exponent);
  Handle abs(Handle a);
  Handle max(Handle a, Handle b);
  Handle sigmoid(Handle a);
  Handle tanh(Handle a);
  Handle softplus(Handle a);
  /// Elementwise gate: entries where gate >= 0 take `a`, others take `b`.
  /// The gate itself receives no gradient.
  Handle select(Handle gate, Handle a, Handle b);

  // structured
  Handle sum(Handle a);                         // reduce to 1x1
  Handle matvec(Handle m, Handle v);            // (r x c) * (c x 1)
  Handle softmax(Handle v);                     // column vector
  Handle slice(Handle v, int offset, int len);  // column vector window
  Handle index(Handle v, int i);                // one element, as 1x1
  /// sum_i a_i .* b_i over parallel spans; 1x1 operands broadcast.
  Handle mul_acc(std::span<const Handle> a, std::span<const Handle> b);

  // access (maps are invalidated by the next record or reset)
  Eigen::Map<const Eigen::MatrixXd> value(Handle h) const;
  Eigen::Map<const Eigen::MatrixXd> grad(Handle h) const;
  double value_scalar(Handle h) const;
  double grad_scalar(Handle h) const;

  /// Reverse sweep from a scalar loss. Gradient buffers are zeroed first.
  void backward(Handle loss);

  /// Drops every node but keeps allocated capacity for the next record.
  void reset();

  int size() const { return static_cast<int>(nodes_.size()); }

private:
  enum class Op {
    Const, Param, Add, Sub, Mul, Div, Neg, Exp, Log, Sin, Cos, Tan, Pow,
    Abs, Max, Sigmoid, Tanh, Softplus, Select, Sum, MatVec, Softmax,
    Slice, Index, MulAcc
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int c = -1;
    int offset = 0;
    int rows = 0;
    int cols = 0;
    double aux = 0.0;
    int iaux = 0;
    std::vector<int> nary; // MulAcc only: flattened (a_i, b_i) pairs
  };

  int push(Node n, int rows, int cols);
  int check(Handle h, const char* who) const;
  std::pair<int, int> broadcast_shape(int a, int b, const char* who) const;

  Eigen::Map<const Eigen::MatrixXd> val(int n) const;
  Eigen::Map<Eigen::MatrixXd> val_mut(int n);
  Eigen::Map<Eigen::MatrixXd> grd(int n);

  // accumulate g into node n's gradient, reducing over a broadcast if
  // node n is 1x1 and g is not
  void accumulate(int n, const Eigen::MatrixXd& g);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

/// Per-parameter comparison of reverse-mode gradients against central
/// finite differences of the same scalar function.
struct GradCheckReport {
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
  Eigen::VectorXd rel_error;
  double max_rel_error = 0.0;
  bool pass = false;
};

/// `f` must record a scalar loss from one scalar param handle per
/// coordinate of `point`.
GradCheckReport grad_check(
    const std::function<Handle(Tape&, std::span<const Handle>)>& f,
    const Eigen::VectorXd& point, double h, double tolerance);

} // namespace cfspn::ad

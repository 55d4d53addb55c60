#include "cfspn/tape.hpp"

#include <cmath>

namespace cfspn::ad {

namespace {

using Map = Eigen::Map<Eigen::MatrixXd>;
using CMap = Eigen::Map<const Eigen::MatrixXd>;

Eigen::MatrixXd spread(const CMap& m, int rows, int cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Eigen::MatrixXd::Constant(rows, cols, m(0, 0));
}

} // namespace

int Tape::check(Handle h, const char* who) const {
  if (!h.valid() || h.node >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument(std::string(who) + ": invalid handle");
  return h.node;
}

std::pair<int, int> Tape::broadcast_shape(int a, int b, const char* who) const {
  const Node& na = nodes_[a];
  const Node& nb = nodes_[b];
  if (na.rows == nb.rows && na.cols == nb.cols) return {na.rows, na.cols};
  if (na.rows == 1 && na.cols == 1) return {nb.rows, nb.cols};
  if (nb.rows == 1 && nb.cols == 1) return {na.rows, na.cols};
  throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

int Tape::push(Node n, int rows, int cols) {
  n.offset = static_cast<int>(values_.size());
  n.rows = rows;
  n.cols = cols;
  values_.resize(values_.size() + static_cast<std::size_t>(rows) * cols);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

CMap Tape::val(int n) const {
  const Node& nd = nodes_[n];
  return CMap(values_.data() + nd.offset, nd.rows, nd.cols);
}

Map Tape::val_mut(int n) {
  Node& nd = nodes_[n];
  return Map(values_.data() + nd.offset, nd.rows, nd.cols);
}

Map Tape::grd(int n) {
  Node& nd = nodes_[n];
  return Map(grads_.data() + nd.offset, nd.rows, nd.cols);
}

Handle Tape::constant(double v) {
  return constant(Eigen::MatrixXd::Constant(1, 1, v));
}

Handle Tape::constant(const Eigen::MatrixXd& m) {
  const int n = push({Op::Const}, static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  val_mut(n) = m;
  return {n};
}

Handle Tape::param(double v) {
  return param(Eigen::MatrixXd::Constant(1, 1, v));
}

Handle Tape::param(const Eigen::MatrixXd& m) {
  const int n = push({Op::Param}, static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  val_mut(n) = m;
  return {n};
}

#define CFSPN_BINARY(NAME, OPCODE, FORWARD)                                  \
  Handle Tape::NAME(Handle ha, Handle hb) {                                 \
    const int a = check(ha, #NAME);                                         \
    const int b = check(hb, #NAME);                                         \
    auto [r, c] = broadcast_shape(a, b, #NAME);                             \
    const int n = push({Op::OPCODE, a, b}, r, c);                           \
    const Eigen::MatrixXd va = spread(val(a), r, c);                        \
    const Eigen::MatrixXd vb = spread(val(b), r, c);                        \
    val_mut(n) = FORWARD;                                                   \
    return {n};                                                             \
  }

CFSPN_BINARY(add, Add, va + vb)
CFSPN_BINARY(sub, Sub, va - vb)
CFSPN_BINARY(mul, Mul, va.cwiseProduct(vb))
CFSPN_BINARY(max, Max, va.cwiseMax(vb))
#undef CFSPN_BINARY

Handle Tape::div(Handle ha, Handle hb) {
  const int a = check(ha, "div");
  const int b = check(hb, "div");
  auto [r, c] = broadcast_shape(a, b, "div");
  if ((val(b).array() == 0.0).any()) throw DomainError("div: division by zero");
  const int n = push({Op::Div, a, b}, r, c);
  const Eigen::MatrixXd va = spread(val(a), r, c);
  const Eigen::MatrixXd vb = spread(val(b), r, c);
  val_mut(n) = va.cwiseQuotient(vb);
  return {n};
}

#define CFSPN_UNARY(NAME, OPCODE, FORWARD)                                   \
  Handle Tape::NAME(Handle ha) {                                            \
    const int a = check(ha, #NAME);                                         \
    const Node& na = nodes_[a];                                             \
    const int n = push({Op::OPCODE, a}, na.rows, na.cols);                  \
    const CMap va = val(a);                                                 \
    val_mut(n) = FORWARD;                                                   \
    return {n};                                                             \
  }

CFSPN_UNARY(neg, Neg, -va)
CFSPN_UNARY(exp, Exp, va.array().exp())
CFSPN_UNARY(sin, Sin, va.array().sin())
CFSPN_UNARY(cos, Cos, va.array().cos())
CFSPN_UNARY(tan, Tan, va.array().tan())
CFSPN_UNARY(abs, Abs, va.array().abs())
CFSPN_UNARY(sigmoid, Sigmoid, 1.0 / (1.0 + (-va.array()).exp()))
CFSPN_UNARY(tanh, Tanh, va.array().tanh())
#undef CFSPN_UNARY

Handle Tape::log(Handle ha) {
  const int a = check(ha, "log");
  if ((val(a).array() <= 0.0).any()) throw DomainError("log: nonpositive input");
  const Node& na = nodes_[a];
  const int n = push({Op::Log, a}, na.rows, na.cols);
  val_mut(n) = val(a).array().log();
  return {n};
}

Handle Tape::pow(Handle ha, double exponent) {
  const int a = check(ha, "pow");
  const Node& na = nodes_[a];
  Node node{Op::Pow, a};
  node.aux = exponent;
  const int n = push(std::move(node), na.rows, na.cols);
  val_mut(n) = val(a).array().pow(exponent);
  return {n};
}

Handle Tape::softplus(Handle ha) {
  const int a = check(ha, "softplus");
  const Node& na = nodes_[a];
  const int n = push({Op::Softplus, a}, na.rows, na.cols);
  // log1p(exp(x)) with the large-x branch kept linear to avoid overflow
  val_mut(n) = val(a).array().unaryExpr([](double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
  });
  return {n};
}

Handle Tape::select(Handle hg, Handle ha, Handle hb) {
  const int g = check(hg, "select");
  const int a = check(ha, "select");
  const int b = check(hb, "select");
  auto [r, c] = broadcast_shape(a, b, "select");
  const Node& ng = nodes_[g];
  if (ng.rows != r || ng.cols != c) throw std::invalid_argument("select: gate shape mismatch");
  const int n = push({Op::Select, g, a, b}, r, c);
  const Eigen::MatrixXd va = spread(val(a), r, c);
  const Eigen::MatrixXd vb = spread(val(b), r, c);
  val_mut(n) = (val(g).array() >= 0.0).select(va, vb);
  return {n};
}

Handle Tape::sum(Handle ha) {
  const int a = check(ha, "sum");
  const int n = push({Op::Sum, a}, 1, 1);
  val_mut(n)(0, 0) = val(a).sum();
  return {n};
}

Handle Tape::matvec(Handle hm, Handle hv) {
  const int m = check(hm, "matvec");
  const int v = check(hv, "matvec");
  const Node& nm = nodes_[m];
  const Node& nv = nodes_[v];
  if (nv.cols != 1 || nm.cols != nv.rows) throw std::invalid_argument("matvec: shape mismatch");
  const int n = push({Op::MatVec, m, v}, nm.rows, 1);
  val_mut(n) = val(m) * val(v);
  return {n};
}

Handle Tape::softmax(Handle hv) {
  const int v = check(hv, "softmax");
  const Node& nv = nodes_[v];
  if (nv.cols != 1) throw std::invalid_argument("softmax: expects a column vector");
  const int n = push({Op::Softmax, v}, nv.rows, 1);
  const Eigen::ArrayXd x = val(v).col(0).array();
  const Eigen::ArrayXd e = (x - x.maxCoeff()).exp();
  val_mut(n).col(0) = e / e.sum();
  return {n};
}

Handle Tape::slice(Handle hv, int offset, int len) {
  const int v = check(hv, "slice");
  const Node& nv = nodes_[v];
  if (nv.cols != 1 || offset < 0 || len <= 0 || offset + len > nv.rows)
    throw std::invalid_argument("slice: window out of range");
  Node node{Op::Slice, v};
  node.iaux = offset;
  const int n = push(std::move(node), len, 1);
  val_mut(n) = val(v).block(offset, 0, len, 1);
  return {n};
}

Handle Tape::index(Handle hv, int i) {
  const int v = check(hv, "index");
  const Node& nv = nodes_[v];
  if (nv.cols != 1 || i < 0 || i >= nv.rows) throw std::invalid_argument("index: out of range");
  Node node{Op::Index, v};
  node.iaux = i;
  const int n = push(std::move(node), 1, 1);
  val_mut(n)(0, 0) = val(v)(i, 0);
  return {n};
}

Handle Tape::mul_acc(std::span<const Handle> a, std::span<const Handle> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("mul_acc: needs parallel nonempty spans");
  Node node{Op::MulAcc};
  node.nary.reserve(2 * a.size());
  int rows = 1, cols = 1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int ia = check(a[i], "mul_acc");
    const int ib = check(b[i], "mul_acc");
    auto [r, c] = broadcast_shape(ia, ib, "mul_acc");
    if (r != 1 || c != 1) {
      if ((rows != 1 || cols != 1) && (rows != r || cols != c))
        throw std::invalid_argument("mul_acc: inconsistent term shapes");
      rows = r;
      cols = c;
    }
    node.nary.push_back(ia);
    node.nary.push_back(ib);
  }
  const int n = push(std::move(node), rows, cols);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows, cols);
  const Node& nd = nodes_[n];
  for (std::size_t i = 0; i + 1 < nd.nary.size(); i += 2) {
    acc += spread(val(nd.nary[i]), rows, cols).cwiseProduct(spread(val(nd.nary[i + 1]), rows, cols));
  }
  val_mut(n) = acc;
  return {n};
}

Eigen::Map<const Eigen::MatrixXd> Tape::value(Handle h) const {
  return val(check(h, "value"));
}

Eigen::Map<const Eigen::MatrixXd> Tape::grad(Handle h) const {
  const int n = check(h, "grad");
  if (grads_.size() != values_.size())
    throw std::logic_error("grad: backward() has not run on this record");
  const Node& nd = nodes_[n];
  return CMap(grads_.data() + nd.offset, nd.rows, nd.cols);
}

double Tape::value_scalar(Handle h) const {
  const int n = check(h, "value_scalar");
  if (nodes_[n].rows != 1 || nodes_[n].cols != 1)
    throw std::invalid_argument("value_scalar: node is not 1x1");
  return values_[nodes_[n].offset];
}

double Tape::grad_scalar(Handle h) const {
  const int n = check(h, "grad_scalar");
  if (grads_.size() != values_.size())
    throw std::logic_error("grad_scalar: backward() has not run on this record");
  if (nodes_[n].rows != 1 || nodes_[n].cols != 1)
    throw std::invalid_argument("grad_scalar: node is not 1x1");
  return grads_[nodes_[n].offset];
}

void Tape::accumulate(int n, const Eigen::MatrixXd& g) {
  const Node& nd = nodes_[n];
  if (nd.rows == static_cast<int>(g.rows()) && nd.cols == static_cast<int>(g.cols())) {
    grd(n) += g;
  } else {
    grd(n)(0, 0) += g.sum();
  }
}

void Tape::backward(Handle loss) {
  const int root = check(loss, "backward");
  if (nodes_[root].rows != 1 || nodes_[root].cols != 1)
    throw std::invalid_argument("backward: loss must be scalar");

  grads_.assign(values_.size(), 0.0);
  grads_[nodes_[root].offset] = 1.0;

  for (int n = root; n >= 0; --n) {
    const Node& nd = nodes_[n];
    if (nd.op == Op::Const || nd.op == Op::Param) continue;
    const Eigen::MatrixXd g = grd(n);
    if ((g.array() == 0.0).all()) continue;
    const int r = nd.rows, c = nd.cols;
    switch (nd.op) {
      case Op::Add:
        accumulate(nd.a, g);
        accumulate(nd.b, g);
        break;
      case Op::Sub:
        accumulate(nd.a, g);
        accumulate(nd.b, -g);
        break;
      case Op::Mul:
        accumulate(nd.a, g.cwiseProduct(spread(val(nd.b), r, c)));
        accumulate(nd.b, g.cwiseProduct(spread(val(nd.a), r, c)));
        break;
      case Op::Div: {
        const Eigen::MatrixXd vb = spread(val(nd.b), r, c);
        accumulate(nd.a, g.cwiseQuotient(vb));
        accumulate(nd.b, -g.cwiseProduct(val(n)).cwiseQuotient(vb));
        break;
      }
      case Op::Neg:
        accumulate(nd.a, -g);
        break;
      case Op::Exp:
        accumulate(nd.a, g.cwiseProduct(val(n)));
        break;
      case Op::Log:
        accumulate(nd.a, g.cwiseQuotient(Eigen::MatrixXd(val(nd.a))));
        break;
      case Op::Sin:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(val(nd.a).array().cos())));
        break;
      case Op::Cos:
        accumulate(nd.a, -g.cwiseProduct(Eigen::MatrixXd(val(nd.a).array().sin())));
        break;
      case Op::Tan:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(1.0 + val(n).array().square())));
        break;
      case Op::Pow:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(nd.aux * val(nd.a).array().pow(nd.aux - 1.0))));
        break;
      case Op::Abs:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(val(nd.a).array().sign())));
        break;
      case Op::Max: {
        const Eigen::MatrixXd va = spread(val(nd.a), r, c);
        const Eigen::MatrixXd vb = spread(val(nd.b), r, c);
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(r, c);
        accumulate(nd.a, (va.array() >= vb.array()).select(g, zero));
        accumulate(nd.b, (va.array() >= vb.array()).select(zero, g));
        break;
      }
      case Op::Sigmoid:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(val(n).array() * (1.0 - val(n).array()))));
        break;
      case Op::Tanh:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(1.0 - val(n).array().square())));
        break;
      case Op::Softplus:
        accumulate(nd.a, g.cwiseProduct(Eigen::MatrixXd(1.0 / (1.0 + (-val(nd.a).array()).exp()))));
        break;
      case Op::Select: {
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(r, c);
        const Eigen::ArrayXXd gate = val(nd.a).array();
        accumulate(nd.b, (gate >= 0.0).select(g, zero));
        accumulate(nd.c, (gate >= 0.0).select(zero, g));
        break;
      }
      case Op::Sum:
        grd(nd.a).array() += g(0, 0);
        break;
      case Op::MatVec:
        accumulate(nd.a, g * val(nd.b).transpose());
        accumulate(nd.b, val(nd.a).transpose() * g);
        break;
      case Op::Softmax: {
        const Eigen::ArrayXd y = val(n).col(0).array();
        const Eigen::ArrayXd gy = g.col(0).array();
        const double dot = (y * gy).sum();
        Eigen::MatrixXd gx(r, 1);
        gx.col(0) = y * (gy - dot);
        accumulate(nd.a, gx);
        break;
      }
      case Op::Slice:
        grd(nd.a).block(nd.iaux, 0, r, 1) += g;
        break;
      case Op::Index:
        grd(nd.a)(nd.iaux, 0) += g(0, 0);
        break;
      case Op::MulAcc:
        for (std::size_t i = 0; i + 1 < nd.nary.size(); i += 2) {
          accumulate(nd.nary[i], g.cwiseProduct(spread(val(nd.nary[i + 1]), r, c)));
          accumulate(nd.nary[i + 1], g.cwiseProduct(spread(val(nd.nary[i]), r, c)));
        }
        break;
      default:
        throw std::logic_error("backward: unhandled op");
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
}

GradCheckReport grad_check(
    const std::function<Handle(Tape&, std::span<const Handle>)>& f,
    const Eigen::VectorXd& point, double h, double tolerance) {
  const int n = static_cast<int>(point.size());

  const auto eval_at = [&](const Eigen::VectorXd& p, Tape& tape,
                           std::vector<Handle>* params_out) -> Handle {
    std::vector<Handle> params(n);
    for (int i = 0; i < n; ++i) params[i] = tape.param(p[i]);
    Handle loss = f(tape, params);
    if (params_out) *params_out = std::move(params);
    return loss;
  };

  GradCheckReport report;
  report.analytic.resize(n);
  report.numeric.resize(n);
  report.rel_error.resize(n);

  {
    Tape tape;
    std::vector<Handle> params;
    Handle loss = eval_at(point, tape, &params);
    tape.backward(loss);
    for (int i = 0; i < n; ++i) report.analytic[i] = tape.grad_scalar(params[i]);
  }

  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd lo = point, hi = point;
    lo[i] -= h;
    hi[i] += h;
    Tape tl, th;
    const double fl = tl.value_scalar(eval_at(lo, tl, nullptr));
    const double fh = th.value_scalar(eval_at(hi, th, nullptr));
    report.numeric[i] = (fh - fl) / (2.0 * h);
  }

  report.max_rel_error = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = report.analytic[i];
    const double m = report.numeric[i];
    const double scale = std::max({std::abs(a), std::abs(m), 1e-6});
    report.rel_error[i] = std::abs(a - m) / scale;
    report.max_rel_error = std::max(report.max_rel_error, report.rel_error[i]);
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

} // namespace cfspn::ad

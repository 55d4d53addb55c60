#pragma once

#include "cfspn/circuit.hpp"
#include "cfspn/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cfspn::paramnet {

struct NetConfig {
  int hidden1 = 128;
  int hidden2 = 128;
};

/// How the two raw network heads map onto the circuit's flat parameter
/// vector. Each slot consumes `length` raw head entries and produces
/// the `length` circuit parameters at `param_offset`, through a smooth
/// transform that lands exactly in the parameter's valid domain:
///   SoftmaxGroup - sum weights and categorical masses (positive, sum 1)
///   Softplus     - sigma and c (positive)
///   AlphaRange   - affine sigmoid into [0.3, 2]
///   Tanh         - beta in [-1, 1]
///   Identity     - mu
struct TransformSpec {
  enum class Kind { SoftmaxGroup, Softplus, AlphaRange, Tanh, Identity };
  enum class Head { Gate, Leaf };

  struct Slot {
    Kind kind = Kind::Identity;
    Head head = Head::Leaf;
    int head_offset = 0;   // start within the head's raw output
    int length = 0;        // raw entries consumed = parameters produced
    int param_offset = 0;  // start within the circuit parameter vector
  };

  std::vector<Slot> slots;  // ordered by param_offset, tiling the vector
  int gate_width = 0;       // raw gate head size (all sum-node weights)
  int leaf_width = 0;       // raw leaf head size (all leaf parameters)
  int param_count = 0;
};

TransformSpec make_transform_spec(const circuit::CircuitGraph& circuit);

/// Two-hidden-layer fully connected network from a flattened mutilated
/// adjacency matrix (row-major, N^2 entries) to the circuit's flat
/// parameter vector. One rectifier trunk feeds two linear heads: gate
/// (sum weights) and leaf (leaf parameters); the TransformSpec then
/// maps raw head outputs into valid parameter domains. All weights live
/// in one flat theta vector, laid out as W1, b1, W2, b2, Wg, bg, Wl, bl
/// (matrices column-major).
class ParamNet {
public:
  /// Trunk weights get fan-in-scaled uniform noise and zero biases;
  /// head weights likewise, with designed head biases so that a zeroed
  /// trunk yields uniform sum weights and categorical masses, sigma and
  /// c of 1, alpha 1.8, beta 0, mu 0.
  ParamNet(const NetConfig& cfg, const circuit::CircuitGraph& circuit, std::uint64_t seed);

  int input_dim() const { return input_dim_; }
  int num_variables() const { return num_variables_; }
  const NetConfig& config() const { return cfg_; }
  const TransformSpec& transform() const { return spec_; }
  const std::string& circuit_hash() const { return circuit_hash_; }

  Eigen::VectorXd& theta() { return theta_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  /// 1.0 on entries belonging to the weight matrices (W1, W2, Wg, Wl)
  /// and 0.0 on every bias. Biases carry the designed defaults that
  /// hold independently of the adjacency, so weight decay skips them.
  Eigen::ArrayXd weight_decay_mask() const;

  /// Row-major flattening of a 0/1 adjacency into the net input.
  static Eigen::VectorXd flatten_adjacency(const Eigen::MatrixXi& adjacency);

  /// Forward pass plus transforms, plain arithmetic. The result
  /// satisfies every circuit parameter invariant for any adjacency.
  Eigen::VectorXd predict_plain(const Eigen::MatrixXi& adjacency) const;

  /// The same computation recorded on a tape, for backprop into theta.
  struct TapeForward {
    std::vector<ad::Handle> theta_parts;  // W1, b1, W2, b2, Wg, bg, Wl, bl
    std::vector<ad::Handle> slot_values;  // one per TransformSpec slot
  };
  TapeForward predict_tape(ad::Tape& tape, const Eigen::MatrixXi& adjacency) const;

  /// Flat gradient aligned with theta(), gathered after tape.backward().
  Eigen::VectorXd collect_gradient(const ad::Tape& tape, const TapeForward& fwd) const;

  /// Checkpoint round trip. Loading validates shapes and the circuit
  /// structure hash.
  std::string to_json() const;
  static ParamNet from_json(const std::string& text, const circuit::CircuitGraph& circuit);

private:
  struct Layout {
    int w1_off, b1_off, w2_off, b2_off, wg_off, bg_off, wl_off, bl_off, total;
  };
  Layout layout() const;

  NetConfig cfg_;
  TransformSpec spec_;
  int num_variables_ = 0;
  int input_dim_ = 0;
  std::string circuit_hash_;
  Eigen::VectorXd theta_;
};

} // namespace cfspn::paramnet

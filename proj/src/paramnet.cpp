#include "cfspn/paramnet.hpp"

#include "cfspn/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <stdexcept>

namespace cfspn::paramnet {

namespace {

using circuit::LeafFamily;
using circuit::NodeType;

// Matches the tape's softplus cutoff so plain and taped forwards agree
// to the last bit.
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Max-shifted, like the tape's softmax primitive.
void softmax_inplace(Eigen::Ref<Eigen::VectorXd> v) {
  const double m = v.maxCoeff();
  v = (v.array() - m).exp();
  v /= v.sum();
}

double designed_bias(TransformSpec::Kind kind) {
  switch (kind) {
    case TransformSpec::Kind::SoftmaxGroup: return 0.0;          // uniform
    case TransformSpec::Kind::Softplus: return std::log(std::expm1(1.0)); // -> 1
    case TransformSpec::Kind::AlphaRange: return std::log(7.5);  // -> 1.8
    case TransformSpec::Kind::Tanh: return 0.0;                  // -> 0
    case TransformSpec::Kind::Identity: return 0.0;              // -> 0
  }
  throw std::logic_error("unreachable transform kind");
}

} // namespace

TransformSpec make_transform_spec(const circuit::CircuitGraph& circuit) {
  TransformSpec spec;
  spec.param_count = circuit.param_count;
  auto add = [&spec](TransformSpec::Kind kind, TransformSpec::Head head, int param_offset,
                     int length) {
    int& width = head == TransformSpec::Head::Gate ? spec.gate_width : spec.leaf_width;
    spec.slots.push_back({kind, head, width, length, param_offset});
    width += length;
  };

  for (const circuit::Node& node : circuit.nodes) {
    switch (node.type) {
      case NodeType::Product:
        break;
      case NodeType::Sum:
        add(TransformSpec::Kind::SoftmaxGroup, TransformSpec::Head::Gate, node.param_offset,
            node.param_count);
        break;
      case NodeType::Leaf:
        switch (node.family) {
          case LeafFamily::Normal:
            add(TransformSpec::Kind::Identity, TransformSpec::Head::Leaf,
                node.param_offset, 1);
            add(TransformSpec::Kind::Softplus, TransformSpec::Head::Leaf,
                node.param_offset + 1, 1);
            break;
          case LeafFamily::Categorical:
            add(TransformSpec::Kind::SoftmaxGroup, TransformSpec::Head::Leaf,
                node.param_offset, node.param_count);
            break;
          case LeafFamily::AlphaStable:
            add(TransformSpec::Kind::Identity, TransformSpec::Head::Leaf,
                node.param_offset, 1);
            add(TransformSpec::Kind::Softplus, TransformSpec::Head::Leaf,
                node.param_offset + 1, 1);
            add(TransformSpec::Kind::AlphaRange, TransformSpec::Head::Leaf,
                node.param_offset + 2, 1);
            add(TransformSpec::Kind::Tanh, TransformSpec::Head::Leaf,
                node.param_offset + 3, 1);
            break;
        }
        break;
    }
  }
  return spec;
}

Eigen::ArrayXd ParamNet::weight_decay_mask() const {
  const Layout lay = layout();
  Eigen::ArrayXd mask = Eigen::ArrayXd::Zero(lay.total);
  mask.segment(lay.w1_off, lay.b1_off - lay.w1_off) = 1.0;
  mask.segment(lay.w2_off, lay.b2_off - lay.w2_off) = 1.0;
  mask.segment(lay.wg_off, lay.bg_off - lay.wg_off) = 1.0;
  mask.segment(lay.wl_off, lay.bl_off - lay.wl_off) = 1.0;
  return mask;
}

ParamNet::Layout ParamNet::layout() const {
  const int in = input_dim_, h1 = cfg_.hidden1, h2 = cfg_.hidden2;
  const int g = spec_.gate_width, l = spec_.leaf_width;
  Layout lay{};
  lay.w1_off = 0;
  lay.b1_off = lay.w1_off + h1 * in;
  lay.w2_off = lay.b1_off + h1;
  lay.b2_off = lay.w2_off + h2 * h1;
  lay.wg_off = lay.b2_off + h2;
  lay.bg_off = lay.wg_off + g * h2;
  lay.wl_off = lay.bg_off + g;
  lay.bl_off = lay.wl_off + l * h2;
  lay.total = lay.bl_off + l;
  return lay;
}

ParamNet::ParamNet(const NetConfig& cfg, const circuit::CircuitGraph& circuit,
                   std::uint64_t seed)
    : cfg_(cfg),
      spec_(make_transform_spec(circuit)),
      num_variables_(circuit.num_variables),
      input_dim_(circuit.num_variables * circuit.num_variables),
      circuit_hash_(circuit::structure_hash(circuit)) {
  if (cfg.hidden1 < 1 || cfg.hidden2 < 1)
    throw std::invalid_argument("ParamNet: hidden sizes must be >= 1");

  const Layout lay = layout();
  theta_ = Eigen::VectorXd::Zero(lay.total);

  rng::Engine eng(seed);
  auto fill_uniform = [&](int offset, int count, double scale) {
    for (int i = 0; i < count; ++i) theta_[offset + i] = eng.uniform(-scale, scale);
  };
  const int h1 = cfg_.hidden1, h2 = cfg_.hidden2;
  fill_uniform(lay.w1_off, h1 * input_dim_, 1.0 / std::sqrt(double(input_dim_)));
  fill_uniform(lay.w2_off, h2 * h1, 1.0 / std::sqrt(double(h1)));
  fill_uniform(lay.wg_off, spec_.gate_width * h2, 1.0 / std::sqrt(double(h2)));
  fill_uniform(lay.wl_off, spec_.leaf_width * h2, 1.0 / std::sqrt(double(h2)));
  // b1, b2, bg stay zero; the leaf head biases carry the designed
  // resting point of each transform.
  for (const TransformSpec::Slot& slot : spec_.slots) {
    if (slot.head != TransformSpec::Head::Leaf) continue;
    const double b = designed_bias(slot.kind);
    for (int i = 0; i < slot.length; ++i) theta_[lay.bl_off + slot.head_offset + i] = b;
  }
}

Eigen::VectorXd ParamNet::flatten_adjacency(const Eigen::MatrixXi& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw std::invalid_argument("flatten_adjacency: adjacency must be square");
  const int n = static_cast<int>(adjacency.rows());
  Eigen::VectorXd x(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x[i * n + j] = adjacency(i, j);
  return x;
}

Eigen::VectorXd ParamNet::predict_plain(const Eigen::MatrixXi& adjacency) const {
  const Eigen::VectorXd x = flatten_adjacency(adjacency);
  if (x.size() != input_dim_)
    throw std::invalid_argument("predict: adjacency dimension mismatch");

  const Layout lay = layout();
  const int h1 = cfg_.hidden1, h2 = cfg_.hidden2;
  const int g = spec_.gate_width, l = spec_.leaf_width;
  const auto W1 = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w1_off, h1, input_dim_);
  const auto b1 = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.b1_off, h1);
  const auto W2 = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.w2_off, h2, h1);
  const auto b2 = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.b2_off, h2);
  const auto Wg = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.wg_off, g, h2);
  const auto bg = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.bg_off, g);
  const auto Wl = Eigen::Map<const Eigen::MatrixXd>(theta_.data() + lay.wl_off, l, h2);
  const auto bl = Eigen::Map<const Eigen::VectorXd>(theta_.data() + lay.bl_off, l);

  const Eigen::VectorXd a1 = ((W1 * x + b1).array().max(0.0)).matrix();
  const Eigen::VectorXd a2 = ((W2 * a1 + b2).array().max(0.0)).matrix();
  const Eigen::VectorXd raw_gate = Wg * a2 + bg;
  const Eigen::VectorXd raw_leaf = Wl * a2 + bl;

  Eigen::VectorXd psi(spec_.param_count);
  for (const TransformSpec::Slot& slot : spec_.slots) {
    const Eigen::VectorXd& raw = slot.head == TransformSpec::Head::Gate ? raw_gate : raw_leaf;
    Eigen::VectorXd v = raw.segment(slot.head_offset, slot.length);
    switch (slot.kind) {
      case TransformSpec::Kind::SoftmaxGroup: softmax_inplace(v); break;
      case TransformSpec::Kind::Softplus: v[0] = softplus(v[0]); break;
      case TransformSpec::Kind::AlphaRange: v[0] = 0.3 + 1.7 * sigmoid(v[0]); break;
      case TransformSpec::Kind::Tanh: v[0] = std::tanh(v[0]); break;
      case TransformSpec::Kind::Identity: break;
    }
    psi.segment(slot.param_offset, slot.length) = v;
  }
  return psi;
}

ParamNet::TapeForward ParamNet::predict_tape(ad::Tape& tape,
                                             const Eigen::MatrixXi& adjacency) const {
  const Eigen::VectorXd x = flatten_adjacency(adjacency);
  if (x.size() != input_dim_)
    throw std::invalid_argument("predict: adjacency dimension mismatch");

  const Layout lay = layout();
  const int h1 = cfg_.hidden1, h2 = cfg_.hidden2;
  const int g = spec_.gate_width, l = spec_.leaf_width;
  auto mat = [&](int offset, int rows, int cols) {
    return tape.param(Eigen::MatrixXd(
        Eigen::Map<const Eigen::MatrixXd>(theta_.data() + offset, rows, cols)));
  };

  TapeForward fwd;
  const ad::Handle W1 = mat(lay.w1_off, h1, input_dim_);
  const ad::Handle b1 = mat(lay.b1_off, h1, 1);
  const ad::Handle W2 = mat(lay.w2_off, h2, h1);
  const ad::Handle b2 = mat(lay.b2_off, h2, 1);
  const ad::Handle Wg = mat(lay.wg_off, g, h2);
  const ad::Handle bg = mat(lay.bg_off, g, 1);
  const ad::Handle Wl = mat(lay.wl_off, l, h2);
  const ad::Handle bl = mat(lay.bl_off, l, 1);
  fwd.theta_parts = {W1, b1, W2, b2, Wg, bg, Wl, bl};

  const ad::Handle zero = tape.constant(0.0);
  const ad::Handle input = tape.constant(Eigen::MatrixXd(x));
  const ad::Handle a1 = tape.max(tape.add(tape.matvec(W1, input), b1), zero);
  const ad::Handle a2 = tape.max(tape.add(tape.matvec(W2, a1), b2), zero);
  const ad::Handle raw_gate = tape.add(tape.matvec(Wg, a2), bg);
  const ad::Handle raw_leaf = tape.add(tape.matvec(Wl, a2), bl);

  for (const TransformSpec::Slot& slot : spec_.slots) {
    const ad::Handle raw = slot.head == TransformSpec::Head::Gate ? raw_gate : raw_leaf;
    const ad::Handle v = tape.slice(raw, slot.head_offset, slot.length);
    switch (slot.kind) {
      case TransformSpec::Kind::SoftmaxGroup:
        fwd.slot_values.push_back(tape.softmax(v));
        break;
      case TransformSpec::Kind::Softplus:
        fwd.slot_values.push_back(tape.softplus(v));
        break;
      case TransformSpec::Kind::AlphaRange:
        fwd.slot_values.push_back(
            tape.add(tape.mul(tape.sigmoid(v), tape.constant(1.7)), tape.constant(0.3)));
        break;
      case TransformSpec::Kind::Tanh:
        fwd.slot_values.push_back(tape.tanh(v));
        break;
      case TransformSpec::Kind::Identity:
        fwd.slot_values.push_back(v);
        break;
    }
  }
  return fwd;
}

Eigen::VectorXd ParamNet::collect_gradient(const ad::Tape& tape,
                                           const TapeForward& fwd) const {
  Eigen::VectorXd grad(theta_.size());
  int at = 0;
  for (const ad::Handle part : fwd.theta_parts) {
    const auto g = tape.grad(part);
    const int count = static_cast<int>(g.size());
    grad.segment(at, count) = Eigen::Map<const Eigen::VectorXd>(g.data(), count);
    at += count;
  }
  if (at != theta_.size())
    throw std::logic_error("collect_gradient: layer sizes do not cover theta");
  return grad;
}

std::string ParamNet::to_json() const {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["num_variables"] = num_variables_;
  doc["hidden1"] = cfg_.hidden1;
  doc["hidden2"] = cfg_.hidden2;
  doc["gate_width"] = spec_.gate_width;
  doc["leaf_width"] = spec_.leaf_width;
  doc["circuit_hash"] = circuit_hash_;
  doc["theta"] = std::vector<double>(theta_.data(), theta_.data() + theta_.size());
  return doc.dump(2) + "\n";
}

ParamNet ParamNet::from_json(const std::string& text, const circuit::CircuitGraph& circuit) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  NetConfig cfg;
  cfg.hidden1 = doc.at("hidden1").get<int>();
  cfg.hidden2 = doc.at("hidden2").get<int>();

  ParamNet net(cfg, circuit, 0);
  if (doc.at("circuit_hash").get<std::string>() != net.circuit_hash_)
    throw std::runtime_error("ParamNet::from_json: checkpoint built for a different circuit");
  if (doc.at("num_variables").get<int>() != net.num_variables_ ||
      doc.at("gate_width").get<int>() != net.spec_.gate_width ||
      doc.at("leaf_width").get<int>() != net.spec_.leaf_width)
    throw std::runtime_error("ParamNet::from_json: shape mismatch");

  const std::vector<double> theta = doc.at("theta").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(theta.size()) != net.theta_.size())
    throw std::runtime_error("ParamNet::from_json: theta length mismatch");
  net.theta_ = Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
  return net;
}

} // namespace cfspn::paramnet

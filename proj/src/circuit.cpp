#include "cfspn/circuit.hpp"

#include "cfspn/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace cfspn::circuit {

namespace {

int family_param_count(const Node& node) {
  switch (node.family) {
    case LeafFamily::Normal: return 2;
    case LeafFamily::Categorical: return static_cast<int>(node.support.size());
    case LeafFamily::AlphaStable: return 4;
  }
  throw std::logic_error("unreachable leaf family");
}

// In-place Fisher-Yates with our own engine, so orders are identical on
// every platform.
void shuffle(std::vector<int>& v, rng::Engine& eng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    std::swap(v[i], v[eng.uniform_int(0, i)]);
  }
}

struct Builder {
  const std::vector<scm::VariableDef>& variables;
  const StructureConfig& cfg;
  rng::Engine eng;
  CircuitGraph graph;

  int add_node(Node node) {
    if (node.type == NodeType::Leaf) {
      node.param_count = family_param_count(node);
    } else if (node.type == NodeType::Sum) {
      node.param_count = static_cast<int>(node.children.size());
    }
    node.param_offset = graph.param_count;
    graph.param_count += node.param_count;
    graph.nodes.push_back(std::move(node));
    return static_cast<int>(graph.nodes.size()) - 1;
  }

  Node leaf_for(int variable) {
    const scm::VariableDef& def = variables[variable];
    Node node;
    node.type = NodeType::Leaf;
    node.variable = variable;
    node.scope = {variable};
    if (def.kind == scm::Kind::Discrete) {
      node.family = LeafFamily::Categorical;
      node.support = def.support;
    } else {
      node.family = cfg.normal_leaves ? LeafFamily::Normal : LeafFamily::AlphaStable;
    }
    return node;
  }

  // Outputs of a leaf region: `leaves_per_variable` distribution nodes
  // over the region's full scope. With several variables the i-th output
  // is the product of everyone's i-th leaf.
  std::vector<int> build_leaf_region(const std::vector<int>& region) {
    std::vector<std::vector<int>> per_variable(region.size());
    for (std::size_t v = 0; v < region.size(); ++v) {
      for (int i = 0; i < cfg.leaves_per_variable; ++i) {
        per_variable[v].push_back(add_node(leaf_for(region[v])));
      }
    }
    if (region.size() == 1) return per_variable[0];

    std::vector<int> scope = region;
    std::sort(scope.begin(), scope.end());
    std::vector<int> outputs;
    for (int i = 0; i < cfg.leaves_per_variable; ++i) {
      Node prod;
      prod.type = NodeType::Product;
      prod.scope = scope;
      for (std::size_t v = 0; v < region.size(); ++v) prod.children.push_back(per_variable[v][i]);
      outputs.push_back(add_node(std::move(prod)));
    }
    return outputs;
  }

  std::vector<int> build_region(std::vector<int> region, int depth) {
    if (depth >= cfg.depth || region.size() < 2) return build_leaf_region(region);

    shuffle(region, eng);
    const std::size_t half = (region.size() + 1) / 2;
    const std::vector<int> left(region.begin(), region.begin() + half);
    const std::vector<int> right(region.begin() + half, region.end());

    const std::vector<int> left_out = build_region(left, depth + 1);
    const std::vector<int> right_out = build_region(right, depth + 1);

    std::vector<int> scope = region;
    std::sort(scope.begin(), scope.end());

    std::vector<int> products;
    for (const int a : left_out) {
      for (const int b : right_out) {
        Node prod;
        prod.type = NodeType::Product;
        prod.scope = scope;
        prod.children = {a, b};
        products.push_back(add_node(std::move(prod)));
      }
    }

    std::vector<int> outputs;
    for (int s = 0; s < cfg.sums_per_region; ++s) {
      Node sum;
      sum.type = NodeType::Sum;
      sum.scope = scope;
      sum.children = products;
      outputs.push_back(add_node(std::move(sum)));
    }
    return outputs;
  }
};

std::string family_tag(LeafFamily family) {
  switch (family) {
    case LeafFamily::Normal: return "normal";
    case LeafFamily::Categorical: return "categorical";
    case LeafFamily::AlphaStable: return "alpha_stable";
  }
  throw std::logic_error("unreachable leaf family");
}

LeafFamily parse_family(const std::string& tag) {
  if (tag == "normal") return LeafFamily::Normal;
  if (tag == "categorical") return LeafFamily::Categorical;
  if (tag == "alpha_stable") return LeafFamily::AlphaStable;
  throw std::runtime_error("unknown leaf family tag: " + tag);
}

} // namespace

CircuitGraph build_random_structure(const std::vector<scm::VariableDef>& variables,
                                    const StructureConfig& cfg, std::uint64_t seed) {
  const int d = static_cast<int>(variables.size());
  if (d < 2) throw std::invalid_argument("build_random_structure: need at least 2 variables");
  if (cfg.depth < 1) throw std::invalid_argument("build_random_structure: depth must be >= 1");
  if ((1 << cfg.depth) > d)
    throw std::invalid_argument("build_random_structure: depth exceeds log2(variable count)");
  if (cfg.repetitions < 1 || cfg.sums_per_region < 1 || cfg.leaves_per_variable < 1)
    throw std::invalid_argument("build_random_structure: counts must be >= 1");

  Builder builder{variables, cfg, rng::Engine(seed), {}};
  builder.graph.num_variables = d;

  std::vector<int> all(d);
  for (int i = 0; i < d; ++i) all[i] = i;

  std::vector<int> repetition_outputs;
  for (int r = 0; r < cfg.repetitions; ++r) {
    const std::vector<int> outputs = builder.build_region(all, 0);
    repetition_outputs.insert(repetition_outputs.end(), outputs.begin(), outputs.end());
  }

  Node root;
  root.type = NodeType::Sum;
  root.scope = all;
  root.children = repetition_outputs;
  builder.graph.root = builder.add_node(std::move(root));

  validate(builder.graph);
  return builder.graph;
}

void validate(const CircuitGraph& circuit) {
  if (circuit.nodes.empty()) throw std::logic_error("circuit: empty node list");
  if (circuit.root < 0 || circuit.root >= circuit.size())
    throw std::logic_error("circuit: root index out of range");

  std::vector<std::pair<int, int>> windows;
  for (int i = 0; i < circuit.size(); ++i) {
    const Node& node = circuit.nodes[i];
    if (!std::is_sorted(node.scope.begin(), node.scope.end()) ||
        std::adjacent_find(node.scope.begin(), node.scope.end()) != node.scope.end())
      throw std::logic_error("circuit: scope not a sorted set at node " + std::to_string(i));

    switch (node.type) {
      case NodeType::Leaf: {
        if (node.variable < 0 || node.variable >= circuit.num_variables)
          throw std::logic_error("circuit: leaf variable out of range at node " + std::to_string(i));
        if (node.scope != std::vector<int>{node.variable})
          throw std::logic_error("circuit: leaf scope must be its variable at node " + std::to_string(i));
        if (node.family == LeafFamily::Categorical) {
          if (node.support.size() < 2 ||
              !std::is_sorted(node.support.begin(), node.support.end()) ||
              std::adjacent_find(node.support.begin(), node.support.end()) != node.support.end())
            throw std::logic_error("circuit: bad categorical support at node " + std::to_string(i));
        }
        if (node.param_count != family_param_count(node))
          throw std::logic_error("circuit: leaf parameter count mismatch at node " + std::to_string(i));
        break;
      }
      case NodeType::Sum: {
        if (node.children.empty())
          throw std::logic_error("circuit: sum without children at node " + std::to_string(i));
        for (const int c : node.children) {
          if (c < 0 || c >= i)
            throw std::logic_error("circuit: child out of topological order at node " + std::to_string(i));
          if (circuit.nodes[c].scope != node.scope)
            throw std::logic_error("circuit: sum not complete at node " + std::to_string(i));
        }
        if (node.param_count != static_cast<int>(node.children.size()))
          throw std::logic_error("circuit: sum weight count mismatch at node " + std::to_string(i));
        break;
      }
      case NodeType::Product: {
        if (node.children.empty())
          throw std::logic_error("circuit: product without children at node " + std::to_string(i));
        std::vector<int> merged;
        for (const int c : node.children) {
          if (c < 0 || c >= i)
            throw std::logic_error("circuit: child out of topological order at node " + std::to_string(i));
          const auto& s = circuit.nodes[c].scope;
          merged.insert(merged.end(), s.begin(), s.end());
        }
        std::sort(merged.begin(), merged.end());
        if (std::adjacent_find(merged.begin(), merged.end()) != merged.end())
          throw std::logic_error("circuit: product not decomposable at node " + std::to_string(i));
        if (merged != node.scope)
          throw std::logic_error("circuit: product scope mismatch at node " + std::to_string(i));
        if (node.param_count != 0)
          throw std::logic_error("circuit: product must not own parameters at node " + std::to_string(i));
        break;
      }
    }
    if (node.param_count > 0) windows.emplace_back(node.param_offset, node.param_count);
  }

  std::vector<int> root_scope(circuit.num_variables);
  for (int v = 0; v < circuit.num_variables; ++v) root_scope[v] = v;
  if (circuit.nodes[circuit.root].scope != root_scope)
    throw std::logic_error("circuit: root scope must cover every variable");

  std::sort(windows.begin(), windows.end());
  int expected = 0;
  for (const auto& [offset, len] : windows) {
    if (offset != expected)
      throw std::logic_error("circuit: parameter layout has a gap or overlap");
    expected = offset + len;
  }
  if (expected != circuit.param_count)
    throw std::logic_error("circuit: parameter layout does not cover the vector");
}

std::complex<double> normal_cf(double mu, double sigma, double t) {
  if (!(sigma > 0.0)) throw std::invalid_argument("normal_cf: sigma must be > 0");
  if (t == 0.0) return {1.0, 0.0};
  const double mag = std::exp(-0.5 * sigma * sigma * t * t);
  return {mag * std::cos(t * mu), mag * std::sin(t * mu)};
}

std::complex<double> categorical_cf(std::span<const double> masses,
                                    std::span<const int> codes, double t) {
  if (masses.size() != codes.size() || masses.empty())
    throw std::invalid_argument("categorical_cf: need one mass per code");
  double total = 0.0;
  for (const double m : masses) {
    if (!(m >= 0.0)) throw std::invalid_argument("categorical_cf: negative mass");
    total += m;
  }
  if (!(total > 0.0)) throw std::invalid_argument("categorical_cf: all-zero masses");

  // Same accumulation order as `total`, so t = 0 yields total/total = 1.
  double re = 0.0, im = 0.0;
  for (std::size_t j = 0; j < masses.size(); ++j) {
    re += masses[j] * std::cos(t * codes[j]);
    im += masses[j] * std::sin(t * codes[j]);
  }
  return {re / total, im / total};
}

std::complex<double> alpha_stable_cf(double mu, double c, double alpha, double beta,
                                     double t) {
  if (!(c > 0.0)) throw std::invalid_argument("alpha_stable_cf: c must be > 0");
  if (alpha < 0.3 || alpha > 2.0)
    throw std::invalid_argument("alpha_stable_cf: alpha outside [0.3, 2]");
  if (beta < -1.0 || beta > 1.0)
    throw std::invalid_argument("alpha_stable_cf: beta outside [-1, 1]");
  if (t == 0.0) return {1.0, 0.0}; // |ct|^alpha = 0 regardless of the phase term

  const double a = std::pow(std::abs(c * t), alpha);
  const double sgn = t > 0.0 ? 1.0 : -1.0;
  const double phi = alpha == 1.0
      ? -(2.0 / std::numbers::pi) * std::log(std::abs(t))
      : std::tan(std::numbers::pi * alpha / 2.0);
  const double theta = t * mu + a * beta * sgn * phi;
  const double mag = std::exp(-a);
  return {mag * std::cos(theta), mag * std::sin(theta)};
}

std::complex<double> leaf_cf(const Node& node, std::span<const double> params, double t) {
  const std::span<const double> p = params.subspan(node.param_offset, node.param_count);
  switch (node.family) {
    case LeafFamily::Normal: return normal_cf(p[0], p[1], t);
    case LeafFamily::Categorical: return categorical_cf(p, node.support, t);
    case LeafFamily::AlphaStable: return alpha_stable_cf(p[0], p[1], p[2], p[3], t);
  }
  throw std::logic_error("unreachable leaf family");
}

namespace {

void evaluate_into(const CircuitGraph& circuit, const Eigen::VectorXd& params,
                   const Eigen::VectorXd& t, std::vector<std::complex<double>>& values) {
  const std::span<const double> p(params.data(), static_cast<std::size_t>(params.size()));
  values.resize(circuit.nodes.size());
  for (int i = 0; i < circuit.size(); ++i) {
    const Node& node = circuit.nodes[i];
    switch (node.type) {
      case NodeType::Leaf:
        values[i] = leaf_cf(node, p, t[node.variable]);
        break;
      case NodeType::Product: {
        std::complex<double> prod{1.0, 0.0};
        for (const int c : node.children) prod *= values[c];
        values[i] = prod;
        break;
      }
      case NodeType::Sum: {
        // Numerator and denominator share one accumulation order, so a
        // batch of exact ones (t = 0) collapses to exactly one.
        std::complex<double> acc{0.0, 0.0};
        double total = 0.0;
        for (std::size_t j = 0; j < node.children.size(); ++j) {
          const double w = params[node.param_offset + static_cast<int>(j)];
          acc += w * values[node.children[j]];
          total += w;
        }
        values[i] = acc / total;
        break;
      }
    }
  }
}

void check_eval_inputs(const CircuitGraph& circuit, const Eigen::VectorXd& params,
                       Eigen::Index t_cols) {
  if (params.size() != circuit.param_count)
    throw std::invalid_argument("evaluate_cf: parameter vector length mismatch");
  if (t_cols != circuit.num_variables)
    throw std::invalid_argument("evaluate_cf: frequency dimension mismatch");
  for (int i = 0; i < circuit.size(); ++i) {
    const Node& node = circuit.nodes[i];
    if (node.type == NodeType::Sum) {
      double total = 0.0;
      for (int j = 0; j < node.param_count; ++j) {
        const double w = params[node.param_offset + j];
        if (!(w >= 0.0)) throw std::invalid_argument("evaluate_cf: negative sum weight");
        total += w;
      }
      if (!(total > 0.0)) throw std::invalid_argument("evaluate_cf: all-zero sum weights");
    }
  }
}

} // namespace

std::complex<double> evaluate_cf(const CircuitGraph& circuit, const Eigen::VectorXd& params,
                                 const Eigen::VectorXd& t) {
  check_eval_inputs(circuit, params, t.size());
  std::vector<std::complex<double>> values;
  evaluate_into(circuit, params, t, values);
  return values[circuit.root];
}

Eigen::VectorXcd evaluate_cf(const CircuitGraph& circuit, const Eigen::VectorXd& params,
                             const Eigen::MatrixXd& t_rows) {
  check_eval_inputs(circuit, params, t_rows.cols());
  Eigen::VectorXcd out(t_rows.rows());
  std::vector<std::complex<double>> values;
  for (Eigen::Index r = 0; r < t_rows.rows(); ++r) {
    evaluate_into(circuit, params, t_rows.row(r).transpose(), values);
    out[r] = values[circuit.root];
  }
  return out;
}

std::complex<double> marginalize_scope(const CircuitGraph& circuit,
                                       const Eigen::VectorXd& params,
                                       const Eigen::VectorXd& t,
                                       const std::vector<int>& keep) {
  if (keep.empty()) throw std::invalid_argument("marginalize_scope: keep must be non-empty");
  Eigen::VectorXd masked = Eigen::VectorXd::Zero(t.size());
  for (const int v : keep) {
    if (v < 0 || v >= t.size())
      throw std::invalid_argument("marginalize_scope: variable out of range");
    masked[v] = t[v];
  }
  return evaluate_cf(circuit, params, masked);
}

std::string to_json(const CircuitGraph& circuit) {
  nlohmann::json doc;
  doc["num_variables"] = circuit.num_variables;
  doc["root"] = circuit.root;
  doc["param_count"] = circuit.param_count;
  doc["nodes"] = nlohmann::json::array();
  for (const Node& node : circuit.nodes) {
    nlohmann::json n;
    switch (node.type) {
      case NodeType::Sum: n["type"] = "sum"; break;
      case NodeType::Product: n["type"] = "product"; break;
      case NodeType::Leaf: n["type"] = "leaf"; break;
    }
    if (node.type == NodeType::Leaf) {
      n["variable"] = node.variable;
      n["family"] = family_tag(node.family);
      if (node.family == LeafFamily::Categorical) n["support"] = node.support;
    } else {
      n["children"] = node.children;
    }
    n["param_offset"] = node.param_offset;
    n["param_count"] = node.param_count;
    n["scope"] = node.scope;
    doc["nodes"].push_back(std::move(n));
  }
  return doc.dump(2) + "\n";
}

CircuitGraph from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  CircuitGraph circuit;
  circuit.num_variables = doc.at("num_variables").get<int>();
  circuit.root = doc.at("root").get<int>();
  circuit.param_count = doc.at("param_count").get<int>();
  for (const auto& n : doc.at("nodes")) {
    Node node;
    const std::string type = n.at("type").get<std::string>();
    if (type == "sum") node.type = NodeType::Sum;
    else if (type == "product") node.type = NodeType::Product;
    else if (type == "leaf") node.type = NodeType::Leaf;
    else throw std::runtime_error("unknown node type tag: " + type);
    if (node.type == NodeType::Leaf) {
      node.variable = n.at("variable").get<int>();
      node.family = parse_family(n.at("family").get<std::string>());
      if (node.family == LeafFamily::Categorical)
        node.support = n.at("support").get<std::vector<int>>();
    } else {
      node.children = n.at("children").get<std::vector<int>>();
    }
    node.param_offset = n.at("param_offset").get<int>();
    node.param_count = n.at("param_count").get<int>();
    node.scope = n.at("scope").get<std::vector<int>>();
    circuit.nodes.push_back(std::move(node));
  }
  validate(circuit);
  return circuit;
}

std::string structure_hash(const CircuitGraph& circuit) {
  // FNV-1a over the canonical JSON; stable across runs and platforms.
  const std::string text = to_json(circuit);
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace cfspn::circuit

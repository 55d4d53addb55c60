#include "cfspn/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cfspn::inversion {

namespace {

// Christoffel-function weight at node x: 1 over the summed squares of
// the orthonormal Hermite polynomials h_0..h_{n-1}. The eigenvector
// route (sqrt(pi) times the squared first component) loses the extreme
// nodes' components to absolute roundoff - their true weights sit near
// 1e-37 where 1e-16 noise dominates - and the e^{t^2} factor in the
// inversion integral magnifies exactly that noise. The recurrence
// follows the growing solution, so it keeps full relative accuracy.
double christoffel_weight(double x, int n) {
  double prev = 0.0;                                    // h_{-1}
  double cur = std::pow(std::numbers::pi, -0.25);       // h_0
  double sum_sq = cur * cur;
  for (int k = 1; k < n; ++k) {
    const double next = (x * cur - std::sqrt((k - 1) / 2.0) * prev) / std::sqrt(k / 2.0);
    prev = cur;
    cur = next;
    sum_sq += cur * cur;
  }
  return 1.0 / sum_sq;
}

} // namespace

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");

  // Hermite three-term recurrence: the Jacobi matrix is tridiagonal
  // with zero diagonal and off-diagonal sqrt(i/2). Its eigenvalues are
  // the nodes; the weights come from the Christoffel function above.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("gauss_hermite: eigen-decomposition failed");

  QuadratureRule rule;
  rule.nodes = solver.eigenvalues(); // sorted increasing
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.weights[i] = christoffel_weight(rule.nodes[i], n);
  }
  return rule;
}

const QuadratureRule& default_rule() {
  static const QuadratureRule rule = gauss_hermite(50);
  return rule;
}

namespace {

double categorical_mass(const circuit::Node& node, std::span<const double> masses, double x) {
  double total = 0.0;
  for (const double m : masses) {
    if (!(m >= 0.0)) throw std::invalid_argument("invert_leaf: negative categorical mass");
    total += m;
  }
  if (!(total > 0.0)) throw std::invalid_argument("invert_leaf: all-zero categorical masses");
  for (std::size_t j = 0; j < node.support.size(); ++j) {
    if (std::abs(x - node.support[j]) < 1e-9) return masses[j] / total;
  }
  throw std::invalid_argument("invert_leaf: value off the categorical support");
}

double alpha_stable_density(double mu, double c, double alpha, double beta, double x,
                            const QuadratureRule& rule) {
  // (1/2pi) int exp(-itx) phi(t) dt, folded through the rule's weight:
  // the e^{t^2} factor undoes it, phi's own decay keeps the integrand
  // tame. Re[exp(-itx) phi] = cos(tx) Re(phi) + sin(tx) Im(phi).
  double acc = 0.0;
  for (int i = 0; i < rule.n(); ++i) {
    const double t = rule.nodes[i];
    const std::complex<double> phi = circuit::alpha_stable_cf(mu, c, alpha, beta, t);
    const double integrand = std::cos(t * x) * phi.real() + std::sin(t * x) * phi.imag();
    acc += rule.weights[i] * std::exp(t * t) * integrand;
  }
  return acc / (2.0 * std::numbers::pi);
}

void check_inputs(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
                  const Eigen::VectorXd& x, const std::vector<bool>& present) {
  if (params.size() != circuit.param_count)
    throw std::invalid_argument("invert: parameter vector length mismatch");
  if (x.size() != circuit.num_variables)
    throw std::invalid_argument("invert: assignment length mismatch");
  if (present.size() != static_cast<std::size_t>(circuit.num_variables))
    throw std::invalid_argument("invert: presence mask length mismatch");
}

} // namespace

double invert_leaf(const circuit::Node& node, std::span<const double> params, double x,
                   const QuadratureRule& rule) {
  if (node.type != circuit::NodeType::Leaf)
    throw std::invalid_argument("invert_leaf: node is not a leaf");
  const std::span<const double> p = params.subspan(node.param_offset, node.param_count);
  switch (node.family) {
    case circuit::LeafFamily::Normal: {
      const double mu = p[0], sigma = p[1];
      if (!(sigma > 0.0)) throw std::invalid_argument("invert_leaf: sigma must be > 0");
      const double z = (x - mu) / sigma;
      return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    }
    case circuit::LeafFamily::Categorical:
      return categorical_mass(node, p, x);
    case circuit::LeafFamily::AlphaStable:
      return alpha_stable_density(p[0], p[1], p[2], p[3], x, rule);
  }
  throw std::logic_error("unreachable leaf family");
}

double invert_node(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
                   int node, const Eigen::VectorXd& x, const std::vector<bool>& present,
                   const QuadratureRule& rule) {
  check_inputs(circuit, params, x, present);
  if (node < 0 || node >= circuit.size())
    throw std::invalid_argument("invert_node: node index out of range");

  // One bottom-up pass over the sub-circuit; nodes outside it are never
  // touched because children always precede parents.
  std::vector<double> value(static_cast<std::size_t>(node) + 1, 0.0);
  const std::span<const double> p(params.data(), static_cast<std::size_t>(params.size()));
  for (int i = 0; i <= node; ++i) {
    const circuit::Node& nd = circuit.nodes[i];
    switch (nd.type) {
      case circuit::NodeType::Leaf:
        value[i] = present[nd.variable] ? invert_leaf(nd, p, x[nd.variable], rule) : 1.0;
        break;
      case circuit::NodeType::Product: {
        double prod = 1.0;
        for (const int c : nd.children) prod *= value[c];
        value[i] = prod;
        break;
      }
      case circuit::NodeType::Sum: {
        double acc = 0.0, total = 0.0;
        for (std::size_t j = 0; j < nd.children.size(); ++j) {
          const double w = params[nd.param_offset + static_cast<int>(j)];
          if (!(w >= 0.0)) throw std::invalid_argument("invert_node: negative sum weight");
          acc += w * value[nd.children[j]];
          total += w;
        }
        if (!(total > 0.0)) throw std::invalid_argument("invert_node: all-zero sum weights");
        value[i] = acc / total;
        break;
      }
    }
  }
  return value[node];
}

double invert(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
              const Eigen::VectorXd& x, const QuadratureRule& rule) {
  const std::vector<bool> present(circuit.num_variables, true);
  return invert_node(circuit, params, circuit.root, x, present, rule);
}

double invert_marginal(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
                       const Eigen::VectorXd& x, const std::vector<bool>& present,
                       const QuadratureRule& rule) {
  return invert_node(circuit, params, circuit.root, x, present, rule);
}

DensityGrid marginal_density_grid(const circuit::CircuitGraph& circuit,
                                  const Eigen::VectorXd& params, int variable, double lo,
                                  double hi, int points, double mean, double stddev,
                                  const QuadratureRule& rule) {
  if (variable < 0 || variable >= circuit.num_variables)
    throw std::invalid_argument("marginal_density_grid: variable out of range");
  if (points < 2) throw std::invalid_argument("marginal_density_grid: need at least 2 points");
  if (!(hi > lo)) throw std::invalid_argument("marginal_density_grid: empty range");
  if (!(stddev > 0.0)) throw std::invalid_argument("marginal_density_grid: stddev must be > 0");
  for (const circuit::Node& node : circuit.nodes) {
    if (node.type == circuit::NodeType::Leaf && node.variable == variable &&
        node.family == circuit::LeafFamily::Categorical)
      throw std::invalid_argument("marginal_density_grid: variable is not continuous");
  }

  std::vector<bool> present(circuit.num_variables, false);
  present[variable] = true;

  DensityGrid grid;
  grid.variable = variable;
  grid.x.resize(points);
  grid.density.resize(points);
  Eigen::VectorXd assignment = Eigen::VectorXd::Zero(circuit.num_variables);
  for (int k = 0; k < points; ++k) {
    const double x = lo + (hi - lo) * k / (points - 1);
    grid.x[k] = x;
    assignment[variable] = (x - mean) / stddev;
    grid.density[k] = invert_marginal(circuit, params, assignment, present, rule) / stddev;
  }

  double integral = 0.0;
  for (int k = 1; k < points; ++k) {
    integral += 0.5 * (grid.density[k - 1] + grid.density[k]) * (grid.x[k] - grid.x[k - 1]);
  }
  grid.normalization = integral;
  return grid;
}

std::vector<int> predict_discrete(const circuit::CircuitGraph& circuit,
                                  const Eigen::VectorXd& params, const Eigen::VectorXd& row,
                                  int target, int top_k,
                                  const QuadratureRule& rule) {
  if (target < 0 || target >= circuit.num_variables)
    throw std::invalid_argument("predict_discrete: target out of range");
  if (top_k < 1) throw std::invalid_argument("predict_discrete: top_k must be >= 1");

  const std::vector<int>* support = nullptr;
  for (const circuit::Node& node : circuit.nodes) {
    if (node.type == circuit::NodeType::Leaf && node.variable == target) {
      if (node.family != circuit::LeafFamily::Categorical)
        throw std::invalid_argument("predict_discrete: target is not discrete");
      support = &node.support;
      break;
    }
  }
  if (support == nullptr)
    throw std::invalid_argument("predict_discrete: target has no leaf in the circuit");

  std::vector<std::pair<double, int>> ranked;
  Eigen::VectorXd x = row;
  for (const int code : *support) {
    x[target] = code;
    ranked.emplace_back(invert(circuit, params, x, rule), code);
  }
  // best first; exact ties go to the lower code
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  const int keep = std::min<int>(top_k, static_cast<int>(ranked.size()));
  std::vector<int> codes(keep);
  for (int i = 0; i < keep; ++i) codes[i] = ranked[i].second;
  return codes;
}

} // namespace cfspn::inversion

#pragma once

#include "cfspn/scm.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cfspn::circuit {

enum class LeafFamily { Normal, Categorical, AlphaStable };

enum class NodeType { Sum, Product, Leaf };

/// One circuit node. Parameters live in a single flat vector shared by
/// the whole circuit; each node that owns parameters claims the window
/// [param_offset, param_offset + param_count). Conventions:
///   - Sum: one nonnegative weight per child.
///   - Normal leaf: (mu, sigma), sigma > 0.
///   - Categorical leaf: one nonnegative mass per support code.
///   - AlphaStable leaf: (mu, c, alpha, beta) with c > 0,
///     alpha in [0.3, 2], beta in [-1, 1].
/// Mixture weights and categorical masses are normalized by their sum at
/// evaluation time, so scaling a window does not change the distribution.
struct Node {
  NodeType type = NodeType::Leaf;
  std::vector<int> children;   // Sum and Product
  int variable = -1;           // Leaf
  LeafFamily family = LeafFamily::Normal;
  std::vector<int> support;    // Categorical leaf: integer codes, increasing
  int param_offset = 0;
  int param_count = 0;
  std::vector<int> scope;      // sorted variable indices this node covers
};

struct StructureConfig {
  int repetitions = 4;        // independent random partition trees
  int depth = 2;              // splits from the root region to the leaves
  int sums_per_region = 4;    // mixture nodes per internal region
  int leaves_per_variable = 4;
  bool normal_leaves = false; // continuous leaves: alpha-stable by default
};

/// Nodes are stored children-before-parents, so a single forward pass
/// over the list evaluates the circuit; `root` is the last node.
struct CircuitGraph {
  std::vector<Node> nodes;
  int root = -1;
  int num_variables = 0;
  int param_count = 0;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Random region-graph structure: `repetitions` independent balanced
/// recursive partitions of the variable set down to `depth`, leaf
/// regions holding `leaves_per_variable` leaves per variable, internal
/// regions mixing all cross-products of their two halves with
/// `sums_per_region` sum nodes, one root sum over every repetition
/// output. Complete and decomposable by construction; deterministic per
/// seed.
CircuitGraph build_random_structure(const std::vector<scm::VariableDef>& variables,
                                    const StructureConfig& cfg, std::uint64_t seed);

/// Checks completeness, decomposability, scope bookkeeping and the
/// parameter layout; throws std::logic_error naming the first violation.
void validate(const CircuitGraph& circuit);

// Leaf characteristic functions. All return exactly 1 + 0i at t = 0.
std::complex<double> normal_cf(double mu, double sigma, double t);
std::complex<double> categorical_cf(std::span<const double> masses,
                                    std::span<const int> codes, double t);
std::complex<double> alpha_stable_cf(double mu, double c, double alpha, double beta,
                                     double t);

/// Dispatch on the node's family over its parameter window.
std::complex<double> leaf_cf(const Node& node, std::span<const double> params, double t);

/// Bottom-up characteristic function of the whole circuit at one
/// frequency vector (one component per variable). Exactly 1 + 0i at
/// t = 0.
std::complex<double> evaluate_cf(const CircuitGraph& circuit, const Eigen::VectorXd& params,
                                 const Eigen::VectorXd& t);

/// Same pass over a batch of frequency vectors (one per row).
Eigen::VectorXcd evaluate_cf(const CircuitGraph& circuit, const Eigen::VectorXd& params,
                             const Eigen::MatrixXd& t_rows);

/// CF of the marginal over `keep`: every other component of t is forced
/// to zero before evaluation.
std::complex<double> marginalize_scope(const CircuitGraph& circuit,
                                       const Eigen::VectorXd& params,
                                       const Eigen::VectorXd& t,
                                       const std::vector<int>& keep);

/// Structure (not parameters) as a JSON document, and back.
std::string to_json(const CircuitGraph& circuit);
CircuitGraph from_json(const std::string& text);

/// Stable fingerprint of the structure, for checkpoint compatibility.
std::string structure_hash(const CircuitGraph& circuit);

} // namespace cfspn::circuit

#pragma once

#include "cfspn/circuit.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cfspn::inversion {

/// Gauss-Hermite rule for the weight e^{-t^2}: sum_i w_i g(t_i)
/// approximates the integral of e^{-t^2} g(t) over the real line.
/// Nodes are sorted increasing and symmetric about zero; the weights
/// sum to sqrt(pi).
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  int n() const { return static_cast<int>(nodes.size()); }
};

/// Computes the n-point rule from the symmetric tridiagonal Jacobi
/// matrix of the Hermite recurrence (Golub-Welsch): eigenvalues are the
/// nodes, sqrt(pi) times the squared first eigenvector components are
/// the weights.
QuadratureRule gauss_hermite(int n);

/// The 50-point rule used for density recovery, computed once.
const QuadratureRule& default_rule();

/// Density (continuous families) or probability mass (categorical) of
/// one leaf at x. Normal leaves use the closed-form Gaussian density;
/// categorical leaves look the mass up directly (x must sit on a
/// support code); alpha-stable leaves invert their characteristic
/// function numerically:
///   f(x) = (1/2pi) sum_i w_i e^{t_i^2} Re[exp(-i t_i x) phi(t_i)].
double invert_leaf(const circuit::Node& node, std::span<const double> params, double x,
                   const QuadratureRule& rule = default_rule());

/// Recursive inversion of the sub-circuit rooted at `node`: sum nodes
/// mix their children's inversions with normalized weights, product
/// nodes multiply over their disjoint scopes, leaves invert directly.
/// Variables with present[v] == false are marginalized out - their
/// leaves contribute exactly 1. x and present always span all
/// variables; entries outside the node's scope are ignored.
double invert_node(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
                   int node, const Eigen::VectorXd& x, const std::vector<bool>& present,
                   const QuadratureRule& rule = default_rule());

/// Joint density/mass at a full assignment (standardized units; any
/// axis Jacobian is the caller's business).
double invert(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
              const Eigen::VectorXd& x, const QuadratureRule& rule = default_rule());

/// Marginal density/mass over the variables with present[v] == true,
/// evaluated at their entries of x.
double invert_marginal(const circuit::CircuitGraph& circuit, const Eigen::VectorXd& params,
                       const Eigen::VectorXd& x, const std::vector<bool>& present,
                       const QuadratureRule& rule = default_rule());

/// A one-variable marginal density curve in data units. `density` keeps
/// raw quadrature values (tiny negative ripple included); clip for
/// display only, never before ranking or integration.
struct DensityGrid {
  int variable = -1;
  Eigen::VectorXd x;        // data units
  Eigen::VectorXd density;  // data units (standardization Jacobian applied)
  double normalization = 0.0; // trapezoid integral of density over x
};

/// Marginal density of one continuous variable on an evenly spaced grid
/// over [lo, hi] in data units. The circuit works in standardized
/// units, so the grid is mapped through (x - mean) / stddev and the
/// density divided by stddev. Throws if the variable is categorical.
DensityGrid marginal_density_grid(const circuit::CircuitGraph& circuit,
                                  const Eigen::VectorXd& params, int variable, double lo,
                                  double hi, int points, double mean, double stddev,
                                  const QuadratureRule& rule = default_rule());

/// Ranks the target variable's support codes by joint density with the
/// rest of the row fixed at its (standardized) values; row[target] is
/// ignored. Ties break toward the lower code. Returns the best
/// min(top_k, support size) codes, best first.
std::vector<int> predict_discrete(const circuit::CircuitGraph& circuit,
                                  const Eigen::VectorXd& params, const Eigen::VectorXd& row,
                                  int target, int top_k,
                                  const QuadratureRule& rule = default_rule());

} // namespace cfspn::inversion

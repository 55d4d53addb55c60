#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>

namespace cfspn::spectral {

/// A batch of evaluation frequencies drawn from N(0, eta^2 I). The rows
/// are the frequency vectors.
struct FrequencyBatch {
  Eigen::MatrixXd points; // k x d
  double eta = 1.0;

  int k() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
};

/// Draws k i.i.d. frequency vectors in d dimensions, each coordinate
/// N(0, eta^2). Deterministic per seed.
FrequencyBatch sample_frequencies(int d, int k, double eta, std::uint64_t seed);

/// Empirical characteristic function of `data` (one row per sample) at a
/// single frequency: the arithmetic mean of exp(i t.x_j).
std::complex<double> ecf(const Eigen::MatrixXd& data, const Eigen::VectorXd& t);

/// ECF evaluated at every row of a frequency batch.
Eigen::VectorXcd ecf(const Eigen::MatrixXd& data, const FrequencyBatch& freqs);

/// Mean squared modulus gap between two per-frequency CF evaluations:
/// (1/k) sum_j |a_j - b_j|^2. Symmetric, nonnegative, zero iff equal.
double cfd_squared(const Eigen::VectorXcd& model_cf, const Eigen::VectorXcd& ecf_values);

} // namespace cfspn::spectral

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cfspn/rng.hpp"
#include "cfspn/spectral.hpp"

#include <cmath>
#include <complex>

using cfspn::spectral::cfd_squared;
using cfspn::spectral::ecf;
using cfspn::spectral::FrequencyBatch;
using cfspn::spectral::sample_frequencies;

namespace {

Eigen::MatrixXd standard_normal_rows(int n, int d, std::uint64_t seed) {
  cfspn::rng::Engine eng(seed);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = eng.normal(0.0, 1.0);
  return m;
}

} // namespace

TEST_CASE("frequency sampling is deterministic per seed") {
  const FrequencyBatch a = sample_frequencies(3, 32, 1.0, 99);
  const FrequencyBatch b = sample_frequencies(3, 32, 1.0, 99);
  CHECK(a.points == b.points);
  CHECK(a.k() == 32);
  CHECK(a.dim() == 3);

  const FrequencyBatch c = sample_frequencies(3, 32, 1.0, 100);
  CHECK(a.points != c.points);
}

TEST_CASE("frequency coordinates carry variance eta squared") {
  const double eta = 0.7;
  const FrequencyBatch batch = sample_frequencies(2, 100000, eta, 4);
  for (int j = 0; j < 2; ++j) {
    const auto col = batch.points.col(j).array();
    const double mean = col.mean();
    const double var = (col - mean).square().mean();
    CHECK(var == doctest::Approx(eta * eta).epsilon(0.02));
  }
}

TEST_CASE("shrinking eta pulls every frequency toward the origin") {
  const FrequencyBatch batch = sample_frequencies(3, 64, 1e-9, 5);
  CHECK(batch.points.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("ecf of a zero row is one at every frequency") {
  const Eigen::MatrixXd data = Eigen::MatrixXd::Zero(1, 3);
  Eigen::VectorXd t(3);
  t << 0.4, -2.0, 13.7;
  const std::complex<double> v = ecf(data, t);
  CHECK(v.real() == 1.0);
  CHECK(v.imag() == 0.0);
}

TEST_CASE("ecf of a conjugate pair collapses to a cosine") {
  Eigen::MatrixXd data(2, 1);
  data << 1.0, -1.0;
  Eigen::VectorXd t(1);
  t << M_PI / 2.0;
  const std::complex<double> v = ecf(data, t);
  CHECK(std::abs(v) < 1e-15); // cos(pi/2) up to rounding, imaginary parts cancel
}

TEST_CASE("ecf of standard normal draws approaches exp(-t^2/2)") {
  const Eigen::MatrixXd data = standard_normal_rows(100000, 1, 21);
  Eigen::VectorXd t(1);
  t << 1.0;
  const std::complex<double> v = ecf(data, t);
  CHECK(std::abs(v - std::complex<double>(std::exp(-0.5), 0.0)) < 0.02);
}

TEST_CASE("batched ecf agrees with one-frequency evaluation") {
  const Eigen::MatrixXd data = standard_normal_rows(9000, 3, 8); // spans two chunks
  const FrequencyBatch freqs = sample_frequencies(3, 16, 1.0, 9);
  const Eigen::VectorXcd batch = ecf(data, freqs);
  for (int j = 0; j < freqs.k(); ++j) {
    const std::complex<double> single = ecf(data, freqs.points.row(j).transpose());
    CHECK(std::abs(batch[j] - single) < 1e-12);
  }
}

TEST_CASE("ecf modulus never exceeds one") {
  const Eigen::MatrixXd data = standard_normal_rows(500, 2, 13) * 3.0;
  const FrequencyBatch freqs = sample_frequencies(2, 256, 2.0, 14);
  const Eigen::VectorXcd values = ecf(data, freqs);
  for (int j = 0; j < freqs.k(); ++j) {
    CHECK(std::abs(values[j]) <= 1.0 + 1e-12);
  }
}

TEST_CASE("cfd of identical evaluations is exactly zero") {
  const Eigen::MatrixXd data = standard_normal_rows(100, 2, 3);
  const FrequencyBatch freqs = sample_frequencies(2, 32, 1.0, 4);
  const Eigen::VectorXcd values = ecf(data, freqs);
  CHECK(cfd_squared(values, values) == 0.0);
}

TEST_CASE("cfd of a unit modulus gap is exactly one") {
  const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(17);
  const Eigen::VectorXcd zeros = Eigen::VectorXcd::Zero(17);
  CHECK(cfd_squared(ones, zeros) == 1.0);
}

TEST_CASE("cfd is symmetric and nonnegative") {
  cfspn::rng::Engine eng(31);
  Eigen::VectorXcd a(24), b(24);
  for (int j = 0; j < 24; ++j) {
    a[j] = {eng.uniform(-1.0, 1.0), eng.uniform(-1.0, 1.0)};
    b[j] = {eng.uniform(-1.0, 1.0), eng.uniform(-1.0, 1.0)};
  }
  CHECK(cfd_squared(a, b) == cfd_squared(b, a));
  CHECK(cfd_squared(a, b) > 0.0);
}

TEST_CASE("two halves of one source sit close in cfd") {
  const Eigen::MatrixXd data = standard_normal_rows(100000, 1, 6);
  const FrequencyBatch freqs = sample_frequencies(1, 64, 1.0, 7);
  const Eigen::VectorXcd first = ecf(data.topRows(50000), freqs);
  const Eigen::VectorXcd second = ecf(data.bottomRows(50000), freqs);
  CHECK(cfd_squared(first, second) < 1e-3);
}

TEST_CASE("cfd over concatenated batches is the size-weighted mean") {
  cfspn::rng::Engine eng(41);
  const int k1 = 10, k2 = 22;
  Eigen::VectorXcd a(k1 + k2), b(k1 + k2);
  for (int j = 0; j < k1 + k2; ++j) {
    a[j] = {eng.uniform(-1.0, 1.0), eng.uniform(-1.0, 1.0)};
    b[j] = {eng.uniform(-1.0, 1.0), eng.uniform(-1.0, 1.0)};
  }
  const double whole = cfd_squared(a, b);
  const double part1 = cfd_squared(a.head(k1), b.head(k1));
  const double part2 = cfd_squared(a.tail(k2), b.tail(k2));
  const double weighted = (k1 * part1 + k2 * part2) / (k1 + k2);
  CHECK(whole == doctest::Approx(weighted).epsilon(1e-14));
}

TEST_CASE("spectral preconditions are enforced") {
  CHECK_THROWS_AS(sample_frequencies(0, 4, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_frequencies(2, 0, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_frequencies(2, 4, 0.0, 1), std::invalid_argument);

  const Eigen::MatrixXd empty(0, 2);
  CHECK_THROWS_AS(ecf(empty, Eigen::VectorXd::Zero(2)), std::invalid_argument);
  CHECK_THROWS_AS(ecf(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(cfd_squared(Eigen::VectorXcd::Ones(3), Eigen::VectorXcd::Ones(4)),
                  std::invalid_argument);
}

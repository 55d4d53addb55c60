#include "cfspn/spectral.hpp"

#include "cfspn/rng.hpp"

#include <stdexcept>

namespace cfspn::spectral {

FrequencyBatch sample_frequencies(int d, int k, double eta, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("sample_frequencies: d must be >= 1");
  if (k < 1) throw std::invalid_argument("sample_frequencies: k must be >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument("sample_frequencies: eta must be > 0");

  rng::Engine eng(seed);
  FrequencyBatch batch;
  batch.eta = eta;
  batch.points.resize(k, d);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) batch.points(i, j) = eng.normal(0.0, eta);
  return batch;
}

std::complex<double> ecf(const Eigen::MatrixXd& data, const Eigen::VectorXd& t) {
  if (data.rows() < 1) throw std::invalid_argument("ecf: data must have at least one row");
  if (data.cols() != t.size()) throw std::invalid_argument("ecf: dimension mismatch");

  const Eigen::VectorXd angles = data * t;
  const double n = static_cast<double>(data.rows());
  return {angles.array().cos().sum() / n, angles.array().sin().sum() / n};
}

Eigen::VectorXcd ecf(const Eigen::MatrixXd& data, const FrequencyBatch& freqs) {
  if (data.rows() < 1) throw std::invalid_argument("ecf: data must have at least one row");
  if (data.cols() != freqs.points.cols()) throw std::invalid_argument("ecf: dimension mismatch");

  const int k = freqs.k();
  const double n = static_cast<double>(data.rows());
  Eigen::VectorXcd out(k);

  // Chunk the n x k angle matrix so huge datasets don't allocate it whole.
  const Eigen::Index chunk = 8192;
  Eigen::VectorXd re = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd im = Eigen::VectorXd::Zero(k);
  for (Eigen::Index start = 0; start < data.rows(); start += chunk) {
    const Eigen::Index rows = std::min(chunk, data.rows() - start);
    const Eigen::MatrixXd angles =
        data.middleRows(start, rows) * freqs.points.transpose(); // rows x k
    re += angles.array().cos().colwise().sum().matrix().transpose();
    im += angles.array().sin().colwise().sum().matrix().transpose();
  }
  for (int j = 0; j < k; ++j) out[j] = {re[j] / n, im[j] / n};
  return out;
}

double cfd_squared(const Eigen::VectorXcd& model_cf, const Eigen::VectorXcd& ecf_values) {
  if (model_cf.size() != ecf_values.size())
    throw std::invalid_argument("cfd_squared: length mismatch");
  if (model_cf.size() == 0) throw std::invalid_argument("cfd_squared: empty input");
  return (model_cf - ecf_values).squaredNorm() / static_cast<double>(model_cf.size());
}

} // namespace cfspn::spectral

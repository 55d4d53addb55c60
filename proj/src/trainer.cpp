#include "cfspn/trainer.hpp"

#include "cfspn/io.hpp"
#include "cfspn/rng.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace cfspn::trainer {

namespace {

using circuit::LeafFamily;
using circuit::NodeType;

// Distinct derive_seed streams so shuffles, step frequencies and
// held-out evaluations never collide.
constexpr std::uint64_t kShuffleStream = 0x100000;
constexpr std::uint64_t kFrequencyStream = 0x200000;
constexpr std::uint64_t kHoldoutStream = 0x300000;

void validate_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 32) throw std::invalid_argument("train: batch_size must be >= 32");
  if (cfg.frequencies < 1) throw std::invalid_argument("train: frequencies must be >= 1");
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("train: eta must be > 0");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw std::invalid_argument("train: adam betas must lie in [0, 1)");
  if (!(cfg.adam_epsilon > 0.0)) throw std::invalid_argument("train: adam_epsilon must be > 0");
  if (cfg.holdout_frequencies < 1)
    throw std::invalid_argument("train: holdout_frequencies must be >= 1");
}

// First-moment/second-moment optimizer state over the flat theta, with
// decoupled weight decay applied through a per-entry mask so designed
// biases are never shrunk.
struct Adam {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  Eigen::ArrayXd decay_mask;
  long t = 0;

  Adam(Eigen::Index n, Eigen::ArrayXd mask)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), decay_mask(std::move(mask)) {}

  void update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, const TrainConfig& cfg) {
    ++t;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    theta.array() -=
        cfg.learning_rate * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_epsilon) +
                             cfg.weight_decay * decay_mask * theta.array());
  }
};

std::string diagnostic_dump(const Eigen::MatrixXd& t_rows, const Eigen::VectorXd& re,
                            const Eigen::VectorXd& im, const Eigen::VectorXcd& target) {
  std::ostringstream out;
  const int show = std::min<int>(4, static_cast<int>(t_rows.rows()));
  for (int r = 0; r < show; ++r) {
    out << "\n  t[" << r << "] = (" << t_rows.row(r) << ")"
        << "  phi_model = " << re[r] << (im[r] < 0 ? " - " : " + ") << std::abs(im[r]) << "i"
        << "  ecf = " << target[r].real() << (target[r].imag() < 0 ? " - " : " + ")
        << std::abs(target[r].imag()) << "i";
  }
  return out.str();
}

} // namespace

Standardizer Standardizer::identity(int width) {
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(width);
  s.stddev = Eigen::VectorXd::Ones(width);
  return s;
}

Standardizer Standardizer::fit(const std::vector<scm::CorpusEntry>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("Standardizer::fit: empty corpus");
  const int width = corpus.front().train.width();
  const auto& columns = corpus.front().train.columns;

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(width);
  long count = 0;
  for (const scm::CorpusEntry& entry : corpus) {
    if (entry.train.width() != width)
      throw std::invalid_argument("Standardizer::fit: datasets disagree on width");
    sum += entry.train.rows.colwise().sum().transpose();
    sum_sq += entry.train.rows.array().square().colwise().sum().matrix().transpose();
    count += entry.train.count();
  }
  if (count == 0) throw std::invalid_argument("Standardizer::fit: no rows");

  Standardizer s = identity(width);
  for (int c = 0; c < width; ++c) {
    if (columns[c].kind != scm::Kind::Continuous) continue;
    const double mean = sum[c] / double(count);
    const double var = sum_sq[c] / double(count) - mean * mean;
    if (!(var > 1e-24))
      throw std::invalid_argument("Standardizer::fit: constant continuous column " +
                                  columns[c].name);
    s.mean[c] = mean;
    s.stddev[c] = std::sqrt(var);
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size())
    throw std::invalid_argument("Standardizer::apply: width mismatch");
  Eigen::MatrixXd out = rows;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= stddev.transpose().array();
  return out;
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size())
    throw std::invalid_argument("Standardizer::invert: width mismatch");
  Eigen::MatrixXd out = rows;
  out.array().rowwise() *= stddev.transpose().array();
  out.rowwise() += mean.transpose();
  return out;
}

std::string Standardizer::to_json() const {
  nlohmann::json doc;
  doc["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
  doc["stddev"] = std::vector<double>(stddev.data(), stddev.data() + stddev.size());
  return doc.dump(2) + "\n";
}

Standardizer Standardizer::from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  const auto mean = doc.at("mean").get<std::vector<double>>();
  const auto stddev = doc.at("stddev").get<std::vector<double>>();
  if (mean.size() != stddev.size())
    throw std::runtime_error("Standardizer::from_json: length mismatch");
  Standardizer s;
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  s.stddev = Eigen::Map<const Eigen::VectorXd>(stddev.data(), stddev.size());
  for (const double sd : stddev) {
    if (!(sd > 0.0)) throw std::runtime_error("Standardizer::from_json: stddev must be > 0");
  }
  return s;
}

std::pair<ad::Handle, ad::Handle> record_circuit_cf(ad::Tape& tape,
                                                    const circuit::CircuitGraph& circuit,
                                                    const paramnet::TransformSpec& spec,
                                                    const std::vector<ad::Handle>& slots,
                                                    const Eigen::MatrixXd& t_rows) {
  const int k = static_cast<int>(t_rows.rows());
  if (k < 1) throw std::invalid_argument("record_circuit_cf: empty frequency batch");
  if (t_rows.cols() != circuit.num_variables)
    throw std::invalid_argument("record_circuit_cf: frequency dimension mismatch");
  if (slots.size() != spec.slots.size())
    throw std::invalid_argument("record_circuit_cf: slot handle count mismatch");

  std::unordered_map<int, int> slot_at; // param_offset -> slot list index
  for (std::size_t s = 0; s < spec.slots.size(); ++s)
    slot_at.emplace(spec.slots[s].param_offset, static_cast<int>(s));
  auto slot_handle = [&](int param_offset) {
    const auto it = slot_at.find(param_offset);
    if (it == slot_at.end())
      throw std::logic_error("record_circuit_cf: no transform slot at parameter offset " +
                             std::to_string(param_offset));
    return slots[it->second];
  };

  // per-variable frequency columns and derived constants, recorded once
  const int d = circuit.num_variables;
  std::vector<ad::Handle> t_h(d), neg_half_t2_h(d), abs_t_h(d), sgn_t_h(d);
  std::vector<bool> var_used(d, false);
  for (const circuit::Node& node : circuit.nodes) {
    if (node.type == NodeType::Leaf) var_used[node.variable] = true;
  }
  for (int v = 0; v < d; ++v) {
    if (!var_used[v]) continue;
    const Eigen::MatrixXd col = t_rows.col(v);
    t_h[v] = tape.constant(col);
    neg_half_t2_h[v] = tape.constant(Eigen::MatrixXd(-0.5 * col.array().square()));
    abs_t_h[v] = tape.constant(Eigen::MatrixXd(col.array().abs()));
    sgn_t_h[v] = tape.constant(
        Eigen::MatrixXd((col.array() > 0.0).select(1.0, Eigen::ArrayXXd::Constant(k, 1, -1.0))));
  }

  const ad::Handle half_pi = tape.constant(std::numbers::pi / 2.0);
  const ad::Handle floor_h = tape.constant(1e-30);

  std::vector<ad::Handle> re(circuit.size()), im(circuit.size());
  for (int i = 0; i < circuit.size(); ++i) {
    const circuit::Node& node = circuit.nodes[i];
    switch (node.type) {
      case NodeType::Leaf: {
        const int p = node.param_offset;
        const int v = node.variable;
        switch (node.family) {
          case LeafFamily::Normal: {
            const ad::Handle mu = slot_handle(p);
            const ad::Handle sigma = slot_handle(p + 1);
            const ad::Handle mag =
                tape.exp(tape.mul(neg_half_t2_h[v], tape.mul(sigma, sigma)));
            const ad::Handle phase = tape.mul(t_h[v], mu);
            re[i] = tape.mul(mag, tape.cos(phase));
            im[i] = tape.mul(mag, tape.sin(phase));
            break;
          }
          case LeafFamily::Categorical: {
            const ad::Handle masses = slot_handle(p);
            const int m = node.param_count;
            Eigen::MatrixXd cos_mat(k, m), sin_mat(k, m);
            for (int r = 0; r < k; ++r) {
              const double t = t_rows(r, v);
              for (int j = 0; j < m; ++j) {
                cos_mat(r, j) = std::cos(t * node.support[j]);
                sin_mat(r, j) = std::sin(t * node.support[j]);
              }
            }
            re[i] = tape.matvec(tape.constant(cos_mat), masses);
            im[i] = tape.matvec(tape.constant(sin_mat), masses);
            break;
          }
          case LeafFamily::AlphaStable: {
            const ad::Handle mu = slot_handle(p);
            const ad::Handle c = slot_handle(p + 1);
            const ad::Handle alpha = slot_handle(p + 2);
            const ad::Handle beta = slot_handle(p + 3);
            // |ct|^alpha as exp(alpha log(c|t|)); c > 0 by transform, so
            // no abs around the product. The floor clamp returns a hard
            // zero-gradient branch for |ct| below 1e-30, which Gaussian
            // frequency draws never reach.
            const ad::Handle abs_ct = tape.max(tape.mul(c, abs_t_h[v]), floor_h);
            const ad::Handle a = tape.exp(tape.mul(alpha, tape.log(abs_ct)));
            const ad::Handle tan_term = tape.tan(tape.mul(alpha, half_pi));
            const ad::Handle skew =
                tape.mul(tape.mul(a, beta), tape.mul(sgn_t_h[v], tan_term));
            const ad::Handle phase = tape.add(tape.mul(t_h[v], mu), skew);
            const ad::Handle mag = tape.exp(tape.neg(a));
            re[i] = tape.mul(mag, tape.cos(phase));
            im[i] = tape.mul(mag, tape.sin(phase));
            break;
          }
        }
        break;
      }
      case NodeType::Product: {
        ad::Handle acc_re = re[node.children[0]];
        ad::Handle acc_im = im[node.children[0]];
        for (std::size_t j = 1; j < node.children.size(); ++j) {
          const ad::Handle br = re[node.children[j]];
          const ad::Handle bi = im[node.children[j]];
          const ad::Handle next_re =
              tape.sub(tape.mul(acc_re, br), tape.mul(acc_im, bi));
          const ad::Handle next_im =
              tape.add(tape.mul(acc_re, bi), tape.mul(acc_im, br));
          acc_re = next_re;
          acc_im = next_im;
        }
        re[i] = acc_re;
        im[i] = acc_im;
        break;
      }
      case NodeType::Sum: {
        // softmax weights arrive normalized, so the mixture is convex
        const ad::Handle w = slot_handle(node.param_offset);
        const int n = static_cast<int>(node.children.size());
        std::vector<ad::Handle> weights(n), child_re(n), child_im(n);
        for (int j = 0; j < n; ++j) {
          weights[j] = tape.index(w, j);
          child_re[j] = re[node.children[j]];
          child_im[j] = im[node.children[j]];
        }
        re[i] = tape.mul_acc(weights, child_re);
        im[i] = tape.mul_acc(weights, child_im);
        break;
      }
    }
  }
  return {re[circuit.root], im[circuit.root]};
}

ad::Handle record_cfd_loss(ad::Tape& tape, ad::Handle re, ad::Handle im,
                           const Eigen::VectorXcd& target) {
  const int k = static_cast<int>(target.size());
  if (k < 1) throw std::invalid_argument("record_cfd_loss: empty target");
  const ad::Handle target_re = tape.constant(Eigen::MatrixXd(target.real()));
  const ad::Handle target_im = tape.constant(Eigen::MatrixXd(target.imag()));
  const ad::Handle diff_re = tape.sub(re, target_re);
  const ad::Handle diff_im = tape.sub(im, target_im);
  const ad::Handle total =
      tape.add(tape.sum(tape.mul(diff_re, diff_re)), tape.sum(tape.mul(diff_im, diff_im)));
  return tape.mul(tape.constant(1.0 / k), total);
}

double evaluate_cfd(const circuit::CircuitGraph& circuit, const paramnet::ParamNet& net,
                    const Standardizer& standardizer, const scm::StructuralModel& model,
                    const scm::Dataset& data, int k_eval, double eta, std::uint64_t seed) {
  const Eigen::MatrixXd rows = standardizer.apply(data.rows);
  const Eigen::MatrixXi adjacency = scm::mutilate(model, data.intervention);
  const Eigen::VectorXd psi = net.predict_plain(adjacency);
  const spectral::FrequencyBatch freqs =
      spectral::sample_frequencies(data.width(), k_eval, eta, seed);
  const Eigen::VectorXcd model_cf = circuit::evaluate_cf(circuit, psi, freqs.points);
  const Eigen::VectorXcd empirical = spectral::ecf(rows, freqs);
  return spectral::cfd_squared(model_cf, empirical);
}

TrainResult train(const circuit::CircuitGraph& circuit, paramnet::ParamNet net,
                  const scm::StructuralModel& model,
                  const std::vector<scm::CorpusEntry>& corpus, const TrainConfig& cfg) {
  validate_config(cfg);
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  const int width = corpus.front().train.width();
  for (const scm::CorpusEntry& entry : corpus) {
    if (entry.train.width() != width || entry.test.width() != width)
      throw std::invalid_argument("train: datasets disagree on the variable schema");
    if (entry.train.count() < 1) throw std::invalid_argument("train: empty training split");
  }
  if (width != circuit.num_variables)
    throw std::invalid_argument("train: dataset width does not match the circuit");

  const auto start = std::chrono::steady_clock::now();
  const int interventions = static_cast<int>(corpus.size());

  const Standardizer standardizer =
      cfg.standardize ? Standardizer::fit(corpus) : Standardizer::identity(width);

  // standardized training rows and the per-intervention adjacency;
  // within a step exactly one of these adjacencies feeds the network
  std::vector<Eigen::MatrixXd> train_rows(interventions);
  std::vector<Eigen::MatrixXi> adjacency(interventions);
  for (int i = 0; i < interventions; ++i) {
    train_rows[i] = standardizer.apply(corpus[i].train.rows);
    adjacency[i] = scm::mutilate(model, corpus[i].train.intervention);
  }

  const std::uint64_t holdout_seed = rng::derive_seed(cfg.seed, kHoldoutStream);
  auto holdout_mean = [&]() {
    double total = 0.0;
    for (int i = 0; i < interventions; ++i) {
      total += evaluate_cfd(circuit, net, standardizer, model, corpus[i].test,
                            cfg.holdout_frequencies, cfg.eta, holdout_seed);
    }
    return total / interventions;
  };

  TrainReport report;
  report.initial_holdout_cfd = holdout_mean();

  Adam adam(net.theta().size(), net.weight_decay_mask());
  ad::Tape tape;
  int global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::vector<int>> order(interventions);
    int max_batches = 0;
    for (int i = 0; i < interventions; ++i) {
      const int rows = static_cast<int>(train_rows[i].rows());
      order[i].resize(rows);
      for (int r = 0; r < rows; ++r) order[i][r] = r;
      rng::Engine eng(rng::derive_seed(
          cfg.seed, kShuffleStream + std::uint64_t(epoch) * interventions + i));
      for (int r = rows - 1; r > 0; --r) std::swap(order[i][r], order[i][eng.uniform_int(0, r)]);
      max_batches = std::max(max_batches, std::max(1, rows / cfg.batch_size));
    }

    std::vector<double> loss_sum(interventions, 0.0);
    std::vector<int> loss_count(interventions, 0);

    for (int b = 0; b < max_batches; ++b) {
      for (int i = 0; i < interventions; ++i) {
        const int rows = static_cast<int>(train_rows[i].rows());
        const int batches = std::max(1, rows / cfg.batch_size);
        if (b >= batches) continue;
        const int take = std::min(cfg.batch_size, rows);
        Eigen::MatrixXd batch(take, width);
        for (int r = 0; r < take; ++r)
          batch.row(r) = train_rows[i].row(order[i][(b * cfg.batch_size + r) % rows]);

        const spectral::FrequencyBatch freqs = spectral::sample_frequencies(
            width, cfg.frequencies, cfg.eta,
            rng::derive_seed(cfg.seed, kFrequencyStream + std::uint64_t(global_step)));
        const Eigen::VectorXcd target = spectral::ecf(batch, freqs);

        tape.reset();
        const paramnet::ParamNet::TapeForward fwd = net.predict_tape(tape, adjacency[i]);
        const auto [re, im] =
            record_circuit_cf(tape, circuit, net.transform(), fwd.slot_values, freqs.points);
        const ad::Handle loss = record_cfd_loss(tape, re, im, target);
        const double loss_value = tape.value_scalar(loss);
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error(
              "train: non-finite loss at step " + std::to_string(global_step) +
              " (intervention " + std::to_string(i) + ")" +
              diagnostic_dump(freqs.points, Eigen::VectorXd(tape.value(re)),
                              Eigen::VectorXd(tape.value(im)), target));
        }

        tape.backward(loss);
        Eigen::VectorXd grad = net.collect_gradient(tape, fwd);
        adam.update(net.theta(), grad, cfg);

        report.log.push_back({global_step, i, loss_value});
        loss_sum[i] += loss_value;
        loss_count[i] += 1;
        ++global_step;
      }
    }

    std::vector<double> epoch_means(interventions, 0.0);
    for (int i = 0; i < interventions; ++i)
      epoch_means[i] = loss_count[i] > 0 ? loss_sum[i] / loss_count[i] : 0.0;
    report.epoch_mean_cfd.push_back(std::move(epoch_means));
    report.holdout_cfd.push_back(holdout_mean());
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(net), standardizer, std::move(report)};
}

namespace {

nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json doc;
  doc["epochs"] = cfg.epochs;
  doc["batch_size"] = cfg.batch_size;
  doc["frequencies"] = cfg.frequencies;
  doc["eta"] = cfg.eta;
  doc["learning_rate"] = cfg.learning_rate;
  doc["weight_decay"] = cfg.weight_decay;
  doc["beta1"] = cfg.beta1;
  doc["beta2"] = cfg.beta2;
  doc["adam_epsilon"] = cfg.adam_epsilon;
  doc["seed"] = cfg.seed;
  doc["standardize"] = cfg.standardize;
  doc["holdout_frequencies"] = cfg.holdout_frequencies;
  return doc;
}

TrainConfig config_from_json(const nlohmann::json& doc) {
  TrainConfig cfg;
  cfg.epochs = doc.at("epochs").get<int>();
  cfg.batch_size = doc.at("batch_size").get<int>();
  cfg.frequencies = doc.at("frequencies").get<int>();
  cfg.eta = doc.at("eta").get<double>();
  cfg.learning_rate = doc.at("learning_rate").get<double>();
  cfg.weight_decay = doc.value("weight_decay", 0.0);
  cfg.beta1 = doc.at("beta1").get<double>();
  cfg.beta2 = doc.at("beta2").get<double>();
  cfg.adam_epsilon = doc.at("adam_epsilon").get<double>();
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.standardize = doc.at("standardize").get<bool>();
  cfg.holdout_frequencies = doc.at("holdout_frequencies").get<int>();
  return cfg;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["circuit"] = nlohmann::json::parse(circuit::to_json(checkpoint.circuit));
  doc["net"] = nlohmann::json::parse(checkpoint.net.to_json());
  doc["standardizer"] = nlohmann::json::parse(checkpoint.standardizer.to_json());
  doc["config"] = config_to_json(checkpoint.config);
  doc["epochs_done"] = checkpoint.epochs_done;
  doc["trained_on"] = checkpoint.trained_on;
  io::atomic_write_file(path, doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const nlohmann::json doc = nlohmann::json::parse(io::read_file(path));
  circuit::CircuitGraph circuit = circuit::from_json(doc.at("circuit").dump());
  paramnet::ParamNet net = paramnet::ParamNet::from_json(doc.at("net").dump(), circuit);
  Standardizer standardizer = Standardizer::from_json(doc.at("standardizer").dump());
  TrainConfig config = config_from_json(doc.at("config"));
  const int epochs_done = doc.at("epochs_done").get<int>();
  std::vector<std::string> trained_on =
      doc.at("trained_on").get<std::vector<std::string>>();
  return {std::move(circuit), std::move(net),    std::move(standardizer),
          config,             epochs_done,       std::move(trained_on)};
}

} // namespace cfspn::trainer

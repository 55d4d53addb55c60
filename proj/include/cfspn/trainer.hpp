#pragma once

#include "cfspn/circuit.hpp"
#include "cfspn/paramnet.hpp"
#include "cfspn/scm.hpp"
#include "cfspn/spectral.hpp"
#include "cfspn/tape.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cfspn::trainer {

/// Per-column affine standardization fitted on pooled training rows:
/// continuous columns map to zero mean and unit variance, discrete
/// columns pass through untouched (mean 0, stddev 1). Stored in
/// checkpoints and applied identically at train and eval time.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static Standardizer identity(int width);
  /// Pools every corpus entry's training rows. Throws if a continuous
  /// column is constant across the pool.
  static Standardizer fit(const std::vector<scm::CorpusEntry>& corpus);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& rows) const;

  std::string to_json() const;
  static Standardizer from_json(const std::string& text);
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 512;       // rows per ECF batch; >= 32 for ECF stability
  int frequencies = 32;       // fresh frequency draws per step
  double eta = 1.0;           // frequency scale on standardized data
  double learning_rate = 1e-3;
  double weight_decay = 0.0;  // decoupled decay on net weight matrices
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool standardize = true;
  int holdout_frequencies = 256; // per-epoch held-out CFD evaluation
};

struct TrainReport {
  struct Step {
    int step = 0;
    int intervention = 0;
    double loss = 0.0;
  };
  std::vector<std::vector<double>> epoch_mean_cfd; // [epoch][intervention]
  std::vector<double> holdout_cfd;                 // mean over interventions, per epoch
  double initial_holdout_cfd = 0.0;                // same evaluation before training
  double wall_seconds = 0.0;
  std::vector<Step> log;
};

/// Characteristic function of the circuit at every row of t_rows,
/// recorded on the tape with parameters taken from a ParamNet forward's
/// slot handles (already transformed, so sum weights and categorical
/// masses arrive normalized). Returns (re, im), each k x 1.
std::pair<ad::Handle, ad::Handle> record_circuit_cf(ad::Tape& tape,
                                                    const circuit::CircuitGraph& circuit,
                                                    const paramnet::TransformSpec& spec,
                                                    const std::vector<ad::Handle>& slots,
                                                    const Eigen::MatrixXd& t_rows);

/// Squared characteristic function distance to a fixed target:
/// (1/k) sum_j |phi_j - target_j|^2, nonnegative, zero only when the
/// recorded CF equals the target at every sampled frequency.
ad::Handle record_cfd_loss(ad::Tape& tape, ad::Handle re, ad::Handle im,
                           const Eigen::VectorXcd& target);

struct TrainResult {
  paramnet::ParamNet net;
  Standardizer standardizer;
  TrainReport report;
};

/// Minimizes the mean squared CF distance between the circuit's CF and
/// per-intervention empirical CFs. Per step: one intervention's dataset
/// (round-robin), one row batch, fresh frequencies, the loss above,
/// backprop into the network, one Adam update. The network only ever
/// sees the batch's own mutilated adjacency within a step. Deterministic
/// per cfg.seed. Throws with a diagnostic dump if the loss goes
/// non-finite.
TrainResult train(const circuit::CircuitGraph& circuit, paramnet::ParamNet net,
                  const scm::StructuralModel& model,
                  const std::vector<scm::CorpusEntry>& corpus, const TrainConfig& cfg);

/// CFD of the model against one dataset's ECF at k_eval fresh
/// frequencies; fixed seed so numbers are comparable across calls.
double evaluate_cfd(const circuit::CircuitGraph& circuit, const paramnet::ParamNet& net,
                    const Standardizer& standardizer, const scm::StructuralModel& model,
                    const scm::Dataset& data, int k_eval, double eta, std::uint64_t seed);

/// Self-contained training state: circuit structure, network weights,
/// standardizer, config echo, epochs completed, and the labels of the
/// distributions the run was trained on (e.g. "observational", "do(Q)").
/// JSON on disk, written atomically.
struct Checkpoint {
  circuit::CircuitGraph circuit;
  paramnet::ParamNet net;
  Standardizer standardizer;
  TrainConfig config;
  int epochs_done = 0;
  std::vector<std::string> trained_on;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

} // namespace cfspn::trainer

#pragma once

#include "cfspn/circuit.hpp"
#include "cfspn/paramnet.hpp"
#include "cfspn/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace cfspn::cli {

/// One configuration document for the whole pipeline. Every field has
/// the default shown here; a config file only needs the keys it wants
/// to change. Unknown keys anywhere are rejected so typos cannot
/// silently fall back to defaults.
struct RunConfig {
  struct Scm {
    std::string dataset = "student";
    int rows_per_intervention = 20000;
    std::uint64_t seed = 0;
  };
  struct Spectral {
    double eta = 1.0;        // frequency scale for evaluation CFDs
    int cfd_frequencies = 256;
  };
  struct Inversion {
    int grid_points = 200; // rows per density grid
  };
  struct Eval {
    int eval_rows = 4000;
    int accuracy_rows = 1000;
    int histogram_bins = 50;
    std::uint64_t seed = 0;
  };

  Scm scm;
  circuit::StructureConfig structure;
  std::uint64_t structure_seed = 7;
  // Default network and schedule are tuned for the Student dataset (the
  // end-to-end reference run); configs/ carries per-dataset documents
  // that override them for the other two datasets.
  paramnet::NetConfig paramnet{16, 16};
  std::uint64_t paramnet_seed = 1;
  trainer::TrainConfig train{.epochs = 18, .frequencies = 16};
  Spectral spectral;
  Inversion inversion;
  Eval eval;
};

/// Parses a config document; missing keys keep their defaults, unknown
/// keys or malformed values throw ConfigError.
RunConfig load_run_config(const std::string& text);

/// The fully resolved document, suitable for echoing into output
/// directories for provenance.
std::string to_json(const RunConfig& config);

/// Bad flags, bad config files, unknown variables: exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Missing/unreadable/mismatched data or checkpoints: exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Non-finite losses and the like: exit code 4.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The whole command-line surface, callable in-process:
///   cfspn generate --dataset student --rows 20000 --out data/
///   cfspn train --data data/ --out run/ [--config c.json] [--resume ckpt]
///   cfspn eval --checkpoint run/checkpoint.json --dataset student --out eval/
///        [--multi [--pairs C,T M,C]]
///   cfspn query --checkpoint ... --dataset ... --var H [--do F=30] (--grid | --point x)
/// CFSPN_SEED overrides the scm/train/eval seeds, CFSPN_OUT the output
/// directory. Returns the process exit code: 0 success, 2 config error,
/// 3 data error, 4 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace cfspn::cli

#pragma once

#include "cfspn/inversion.hpp"
#include "cfspn/scm.hpp"
#include "cfspn/trainer.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cfspn::evalsuite {

/// What to evaluate and where to put the artifacts. Evaluation data is
/// always generated fresh from the structural model at seeds derived
/// from `seed`, so reruns with the same spec are byte-identical.
struct ExperimentSpec {
  std::string out_dir;              // empty = compute everything, write nothing
  std::vector<int> interventions;   // do(.) targets; empty = all interveneable
  std::vector<std::pair<int, int>> pairs; // two-variable interventions
  bool density_grids = true;
  bool discrete_accuracy = true;
  bool cfd = true;
  int eval_rows = 4000;      // fresh rows per evaluated distribution
  int accuracy_rows = 1000;  // rows scored per accuracy cell
  int grid_points = 200;     // rows per density grid CSV
  int histogram_bins = 50;   // empirical histogram resolution
  int cfd_frequencies = 256; // frequencies per CFD estimate
  double eta = 1.0;
  std::uint64_t seed = 0;
};

/// One accuracy entry. `not_applicable` marks cells whose target is the
/// intervened variable itself (prediction of a do(X) value from the
/// model is meaningless, matching the N/A convention of the tables).
struct AccuracyCell {
  double accuracy = 0.0;
  long count = 0;
  bool not_applicable = false;
};

/// Held-out prediction accuracy per (distribution, discrete target).
/// Row 0 is always the observational distribution; the majority-class
/// baseline per column comes from its held-out label frequencies.
struct AccuracyTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<int> column_variables;
  std::vector<double> majority_baseline;
  std::vector<std::vector<AccuracyCell>> cells; // [row][column]
};

/// CSV rendering: one row per distribution with accuracy and sample
/// count per target, then a trailing majority_baseline row.
std::string to_csv(const AccuracyTable& table);

/// Where a density grid landed: its file (when written), its trapezoid
/// normalization, and the model/empirical modes with their distance in
/// histogram bins.
struct GridSummary {
  std::string intervention;
  std::string variable;
  std::string csv_path;
  double lo = 0.0;
  double hi = 0.0;
  double normalization = 0.0;
  double model_mode = 0.0;
  double empirical_mode = 0.0;
  double mode_offset_bins = 0.0;
  bool variable_intervened = false;
};

struct SingleEvalResult {
  AccuracyTable table;
  std::vector<GridSummary> grids;
  std::vector<std::pair<std::string, double>> cfd; // per distribution label
  double wall_seconds = 0.0;
};

/// Evaluates the checkpoint on the observational distribution and on
/// do(X) for every selected interveneable X: density grids for every
/// continuous variable (empirical side drawn at the representative
/// mid-domain intervention value, model side conditioned on the
/// mutilated graph), prediction accuracy for every applicable discrete
/// target (values redrawn uniformly per row), and a CFD per
/// distribution. Writes grid CSVs + sidecars, the accuracy table CSV
/// and a JSON summary into spec.out_dir unless it is empty. Throws if
/// the checkpoint's circuit does not match the model schema.
SingleEvalResult run_single_intervention_eval(const trainer::Checkpoint& checkpoint,
                                              const scm::StructuralModel& model,
                                              const ExperimentSpec& spec);

struct PairEval {
  std::string label;
  double cfd = 0.0;
  std::vector<GridSummary> grids;
};

struct MultiEvalResult {
  std::vector<PairEval> pairs;
  double wall_seconds = 0.0;
};

/// Evaluates two-variable interventions the model never saw in
/// training: fresh doubly-intervened data, density grids and a CFD per
/// pair. Requires checkpoint.trained_on to contain only observational /
/// single-intervention labels and every pair member to be
/// interveneable; throws std::invalid_argument otherwise.
MultiEvalResult run_multi_intervention_eval(const trainer::Checkpoint& checkpoint,
                                            const scm::StructuralModel& model,
                                            const std::vector<std::pair<int, int>>& pairs,
                                            const ExperimentSpec& spec);

/// Observational-vs-interventional comparison assembled from a
/// completed single-intervention evaluation.
struct ObsVsInterventionalReport {
  struct AccuracyDelta {
    std::string intervention;
    std::string target;
    double observational = 0.0;
    double interventional = 0.0;
    double abs_delta = 0.0;
  };
  std::vector<AccuracyDelta> deltas; // every applicable (do(X), target) cell
  AccuracyDelta largest;             // the cell with the widest gap
  struct ModeOffset {
    std::string intervention;
    std::string variable;
    double offset_bins = 0.0;
  };
  std::vector<ModeOffset> mode_offsets; // interventional grids only
  std::vector<std::pair<std::string, double>> majority_baseline;
};

/// Builds the report and, when spec.out_dir is set, writes it as one
/// flat CSV (obs_vs_interventional.csv).
ObsVsInterventionalReport compare_obs_vs_interventional(const SingleEvalResult& single,
                                                        const ExperimentSpec& spec);

/// "do(C,T)" -> "do-c-t": lowercase letters and digits survive, every
/// other run of characters collapses to one dash. Used for file names.
std::string slug(const std::string& label);

/// Throws std::invalid_argument unless the checkpoint's circuit covers
/// exactly the model's variables with matching column kinds.
void require_schema_match(const trainer::Checkpoint& checkpoint,
                          const scm::StructuralModel& model);

} // namespace cfspn::evalsuite

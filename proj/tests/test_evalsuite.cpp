#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cfspn/circuit.hpp"
#include "cfspn/evalsuite.hpp"
#include "cfspn/io.hpp"
#include "cfspn/paramnet.hpp"
#include "cfspn/scm.hpp"
#include "cfspn/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

using namespace cfspn::evalsuite;
using cfspn::circuit::CircuitGraph;
using cfspn::circuit::StructureConfig;
using cfspn::paramnet::NetConfig;
using cfspn::paramnet::ParamNet;
using cfspn::scm::StructuralModel;
using cfspn::trainer::Checkpoint;
using cfspn::trainer::Standardizer;
using cfspn::trainer::TrainConfig;

namespace {

CircuitGraph small_circuit(const StructuralModel& model, std::uint64_t seed) {
  StructureConfig cfg;
  cfg.repetitions = 2;
  cfg.depth = 2;
  cfg.sums_per_region = 2;
  cfg.leaves_per_variable = 2;
  return cfspn::circuit::build_random_structure(model.variables, cfg, seed);
}

// An untrained but fully wired checkpoint; evaluation mechanics do not
// care whether the parameters are good.
Checkpoint make_checkpoint(const StructuralModel& model, std::uint64_t seed) {
  CircuitGraph circuit = small_circuit(model, seed);
  NetConfig ncfg;
  ncfg.hidden1 = 32;
  ncfg.hidden2 = 32;
  ParamNet net(ncfg, circuit, seed + 1);
  const auto corpus = cfspn::scm::make_training_corpus(model, 300, seed + 2);
  Standardizer standardizer = Standardizer::fit(corpus);
  std::vector<std::string> labels;
  for (const auto& entry : corpus) {
    labels.push_back(cfspn::scm::intervention_label(model, entry.train.intervention));
  }
  return {std::move(circuit), std::move(net), std::move(standardizer), TrainConfig{}, 0,
          std::move(labels)};
}

ExperimentSpec quick_spec(const std::string& out_dir) {
  ExperimentSpec spec;
  spec.out_dir = out_dir;
  spec.eval_rows = 300;
  spec.accuracy_rows = 50;
  spec.cfd_frequencies = 64;
  spec.seed = 5;
  return spec;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

long line_count(const std::string& text) {
  long lines = 0;
  for (const char ch : text) {
    if (ch == '\n') ++lines;
  }
  return lines;
}

} // namespace

TEST_CASE("labels flatten to file-name slugs") {
  CHECK(slug("do(C,T)") == "do-c-t");
  CHECK(slug("observational") == "observational");
  CHECK(slug("do(F=30.5)") == "do-f-30-5");
  CHECK(slug("(C)") == "c");
}

TEST_CASE("the single-intervention evaluation emits the full artifact set") {
  const StructuralModel model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Checkpoint checkpoint = make_checkpoint(model, 310);
  const auto dir = fresh_dir("cfspn_eval_single");
  const ExperimentSpec spec = quick_spec(dir.string());

  const SingleEvalResult result = run_single_intervention_eval(checkpoint, model, spec);

  const std::vector<std::string> want_rows{"observational", "do(Q)", "do(M)", "do(C)",
                                           "do(T)"};
  CHECK(result.table.row_labels == want_rows);
  const std::vector<std::string> want_cols{"Sc", "S"};
  CHECK(result.table.column_labels == want_cols);

  REQUIRE(result.table.cells.size() == 5);
  for (const auto& row : result.table.cells) {
    REQUIRE(row.size() == 2);
    for (const AccuracyCell& cell : row) {
      CHECK_FALSE(cell.not_applicable); // Student interventions are all continuous
      CHECK(cell.count == 50);
      CHECK(cell.accuracy >= 0.0);
      CHECK(cell.accuracy <= 1.0);
    }
  }
  REQUIRE(result.table.majority_baseline.size() == 2);
  for (const double b : result.table.majority_baseline) {
    CHECK(b > 0.0);
    CHECK(b <= 1.0);
  }

  // 5 distributions x 4 continuous variables
  REQUIRE(result.grids.size() == 20);
  for (const GridSummary& grid : result.grids) {
    CHECK(std::isfinite(grid.normalization));
    CHECK(grid.normalization > 0.0);
    CHECK(grid.hi > grid.lo);
    CHECK(grid.mode_offset_bins >= 0.0);
    REQUIRE_FALSE(grid.csv_path.empty());
    const std::string csv = cfspn::io::read_file(grid.csv_path);
    CHECK(line_count(csv) == spec.grid_points + 1); // header + one row per point
    CHECK(std::filesystem::exists(grid.csv_path + ".meta.json"));
  }

  REQUIRE(result.cfd.size() == 5);
  for (const auto& [label, value] : result.cfd) {
    CHECK(std::isfinite(value));
    CHECK(value >= 0.0);
  }

  CHECK(std::filesystem::exists(dir / "accuracy.csv"));
  CHECK(std::filesystem::exists(dir / "summary.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation reruns are byte-identical") {
  const StructuralModel model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Checkpoint checkpoint = make_checkpoint(model, 320);
  const auto dir_a = fresh_dir("cfspn_eval_rerun_a");
  const auto dir_b = fresh_dir("cfspn_eval_rerun_b");

  const SingleEvalResult a =
      run_single_intervention_eval(checkpoint, model, quick_spec(dir_a.string()));
  const SingleEvalResult b =
      run_single_intervention_eval(checkpoint, model, quick_spec(dir_b.string()));

  CHECK(cfspn::io::read_file((dir_a / "accuracy.csv").string()) ==
        cfspn::io::read_file((dir_b / "accuracy.csv").string()));
  REQUIRE(a.grids.size() == b.grids.size());
  for (std::size_t g = 0; g < a.grids.size(); ++g) {
    CHECK(cfspn::io::read_file(a.grids[g].csv_path) ==
          cfspn::io::read_file(b.grids[g].csv_path));
  }
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("intervening on a discrete target marks its cell not applicable") {
  const StructuralModel model = cfspn::scm::build_model(cfspn::scm::ModelName::Hiring);
  const Checkpoint checkpoint = make_checkpoint(model, 330);

  ExperimentSpec spec = quick_spec("");
  spec.interventions = {model.index_of("E")};
  spec.density_grids = false; // accuracy table is the point here
  spec.cfd = false;

  const SingleEvalResult result = run_single_intervention_eval(checkpoint, model, spec);
  const std::vector<std::string> want_rows{"observational", "do(E)"};
  CHECK(result.table.row_labels == want_rows);

  const auto column_of = [&](const std::string& name) {
    for (std::size_t c = 0; c < result.table.column_labels.size(); ++c) {
      if (result.table.column_labels[c] == name) return c;
    }
    REQUIRE(false);
    return std::size_t{0};
  };
  CHECK(result.table.cells[1][column_of("E")].not_applicable);
  CHECK_FALSE(result.table.cells[1][column_of("D")].not_applicable);
  CHECK_FALSE(result.table.cells[0][column_of("E")].not_applicable);

  const std::string csv = to_csv(result.table);
  CHECK(csv.find("NA") != std::string::npos);
  CHECK(csv.find("majority_baseline") != std::string::npos);
}

TEST_CASE("schema mismatches between checkpoint and model are rejected") {
  const StructuralModel student = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const StructuralModel hiring = cfspn::scm::build_model(cfspn::scm::ModelName::Hiring);
  const StructuralModel health =
      cfspn::scm::build_model(cfspn::scm::ModelName::CausalHealth);

  const Checkpoint for_student = make_checkpoint(student, 340);
  ExperimentSpec spec = quick_spec("");
  CHECK_THROWS_AS(run_single_intervention_eval(for_student, hiring, spec),
                  std::invalid_argument); // width mismatch

  // same width, different column kinds
  const Checkpoint for_hiring = make_checkpoint(hiring, 341);
  CHECK_THROWS_AS(run_single_intervention_eval(for_hiring, health, spec),
                  std::invalid_argument);

  // a non-interveneable selection is refused
  spec.interventions = {student.index_of("Sc")};
  CHECK_THROWS_AS(run_single_intervention_eval(for_student, student, spec),
                  std::invalid_argument);
}

TEST_CASE("the multi-intervention evaluation scores unseen pairs") {
  const StructuralModel model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Checkpoint checkpoint = make_checkpoint(model, 350);
  const auto dir = fresh_dir("cfspn_eval_multi");
  const ExperimentSpec spec = quick_spec(dir.string());

  const std::vector<std::pair<int, int>> pairs{
      {model.index_of("C"), model.index_of("T")},
      {model.index_of("M"), model.index_of("C")},
  };
  const MultiEvalResult result =
      run_multi_intervention_eval(checkpoint, model, pairs, spec);

  REQUIRE(result.pairs.size() == 2);
  CHECK(result.pairs[0].label == "do(C,T)");
  CHECK(result.pairs[1].label == "do(M,C)");
  for (const PairEval& entry : result.pairs) {
    CHECK(std::isfinite(entry.cfd));
    CHECK(entry.cfd >= 0.0);
    CHECK(entry.grids.size() == 4); // continuous variables of the model
    for (const GridSummary& grid : entry.grids) {
      CHECK(grid.normalization > 0.0);
      CHECK(std::filesystem::exists(grid.csv_path));
    }
  }
  CHECK(std::filesystem::exists(dir / "multi_summary.json"));
  std::filesystem::remove_all(dir);

  // guards
  ExperimentSpec quiet = quick_spec("");
  Checkpoint tainted = make_checkpoint(model, 351);
  tainted.trained_on.push_back("do(C,T)");
  CHECK_THROWS_AS(run_multi_intervention_eval(tainted, model, pairs, quiet),
                  std::invalid_argument);
  Checkpoint unlabeled = make_checkpoint(model, 352);
  unlabeled.trained_on.clear();
  CHECK_THROWS_AS(run_multi_intervention_eval(unlabeled, model, pairs, quiet),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      run_multi_intervention_eval(checkpoint, model, {{model.index_of("Q"), model.index_of("Q")}},
                                  quiet),
      std::invalid_argument);
  CHECK_THROWS_AS(
      run_multi_intervention_eval(checkpoint, model,
                                  {{model.index_of("Sc"), model.index_of("Q")}}, quiet),
      std::invalid_argument);
}

TEST_CASE("the observational-vs-interventional report surfaces the widest gap") {
  const StructuralModel model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Checkpoint checkpoint = make_checkpoint(model, 360);
  const auto dir = fresh_dir("cfspn_eval_report");
  const ExperimentSpec spec = quick_spec(dir.string());

  const SingleEvalResult single = run_single_intervention_eval(checkpoint, model, spec);
  const ObsVsInterventionalReport report = compare_obs_vs_interventional(single, spec);

  CHECK(report.deltas.size() == 8); // 4 interventional rows x 2 targets, no N/A
  double widest = 0.0;
  for (const auto& delta : report.deltas) {
    CHECK(delta.abs_delta ==
          doctest::Approx(std::abs(delta.observational - delta.interventional)));
    widest = std::max(widest, delta.abs_delta);
  }
  CHECK(report.largest.abs_delta == widest);
  CHECK(report.mode_offsets.size() == 16); // 4 interventional rows x 4 continuous vars
  CHECK(report.majority_baseline.size() == 2);

  const std::string csv =
      cfspn::io::read_file((dir / "obs_vs_interventional.csv").string());
  CHECK(csv.find("largest_accuracy_delta") != std::string::npos);
  CHECK(csv.find("mode_offset") != std::string::npos);
  CHECK(csv.find("majority_baseline") != std::string::npos);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(compare_obs_vs_interventional(SingleEvalResult{}, spec),
                  std::invalid_argument);
}

#include "cfspn/cli.hpp"

#include "cfspn/evalsuite.hpp"
#include "cfspn/inversion.hpp"
#include "cfspn/io.hpp"
#include "cfspn/rng.hpp"
#include "cfspn/scm.hpp"
#include "cfspn/version.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

namespace cfspn::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kGenerateStream = 0x800000;
constexpr std::uint64_t kQueryStream = 0x900000;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- config

void require_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

template <class T>
void fetch(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("bad value for " + where + "." + key + ": " + e.what());
  }
}

} // namespace

RunConfig load_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_keys(doc, {"scm", "structure", "paramnet", "train", "spectral", "inversion", "eval"},
               "config");
  RunConfig cfg;
  if (doc.contains("scm")) {
    const json& j = doc["scm"];
    require_keys(j, {"dataset", "rows_per_intervention", "seed"}, "scm");
    fetch(j, "dataset", cfg.scm.dataset, "scm");
    fetch(j, "rows_per_intervention", cfg.scm.rows_per_intervention, "scm");
    fetch(j, "seed", cfg.scm.seed, "scm");
  }
  if (doc.contains("structure")) {
    const json& j = doc["structure"];
    require_keys(j,
                 {"repetitions", "depth", "sums_per_region", "leaves_per_variable",
                  "normal_leaves", "seed"},
                 "structure");
    fetch(j, "repetitions", cfg.structure.repetitions, "structure");
    fetch(j, "depth", cfg.structure.depth, "structure");
    fetch(j, "sums_per_region", cfg.structure.sums_per_region, "structure");
    fetch(j, "leaves_per_variable", cfg.structure.leaves_per_variable, "structure");
    fetch(j, "normal_leaves", cfg.structure.normal_leaves, "structure");
    fetch(j, "seed", cfg.structure_seed, "structure");
  }
  if (doc.contains("paramnet")) {
    const json& j = doc["paramnet"];
    require_keys(j, {"hidden1", "hidden2", "seed"}, "paramnet");
    fetch(j, "hidden1", cfg.paramnet.hidden1, "paramnet");
    fetch(j, "hidden2", cfg.paramnet.hidden2, "paramnet");
    fetch(j, "seed", cfg.paramnet_seed, "paramnet");
  }
  if (doc.contains("train")) {
    const json& j = doc["train"];
    require_keys(j,
                 {"epochs", "batch_size", "frequencies", "eta", "learning_rate", "weight_decay",
                  "beta1", "beta2", "adam_epsilon", "seed", "standardize",
                  "holdout_frequencies"},
                 "train");
    fetch(j, "epochs", cfg.train.epochs, "train");
    fetch(j, "batch_size", cfg.train.batch_size, "train");
    fetch(j, "frequencies", cfg.train.frequencies, "train");
    fetch(j, "eta", cfg.train.eta, "train");
    fetch(j, "learning_rate", cfg.train.learning_rate, "train");
    fetch(j, "weight_decay", cfg.train.weight_decay, "train");
    fetch(j, "beta1", cfg.train.beta1, "train");
    fetch(j, "beta2", cfg.train.beta2, "train");
    fetch(j, "adam_epsilon", cfg.train.adam_epsilon, "train");
    fetch(j, "seed", cfg.train.seed, "train");
    fetch(j, "standardize", cfg.train.standardize, "train");
    fetch(j, "holdout_frequencies", cfg.train.holdout_frequencies, "train");
  }
  if (doc.contains("spectral")) {
    const json& j = doc["spectral"];
    require_keys(j, {"eta", "cfd_frequencies"}, "spectral");
    fetch(j, "eta", cfg.spectral.eta, "spectral");
    fetch(j, "cfd_frequencies", cfg.spectral.cfd_frequencies, "spectral");
  }
  if (doc.contains("inversion")) {
    const json& j = doc["inversion"];
    require_keys(j, {"grid_points"}, "inversion");
    fetch(j, "grid_points", cfg.inversion.grid_points, "inversion");
  }
  if (doc.contains("eval")) {
    const json& j = doc["eval"];
    require_keys(j, {"eval_rows", "accuracy_rows", "histogram_bins", "seed"}, "eval");
    fetch(j, "eval_rows", cfg.eval.eval_rows, "eval");
    fetch(j, "accuracy_rows", cfg.eval.accuracy_rows, "eval");
    fetch(j, "histogram_bins", cfg.eval.histogram_bins, "eval");
    fetch(j, "seed", cfg.eval.seed, "eval");
  }
  return cfg;
}

std::string to_json(const RunConfig& cfg) {
  json doc;
  doc["scm"] = {{"dataset", cfg.scm.dataset},
                {"rows_per_intervention", cfg.scm.rows_per_intervention},
                {"seed", cfg.scm.seed}};
  doc["structure"] = {{"repetitions", cfg.structure.repetitions},
                      {"depth", cfg.structure.depth},
                      {"sums_per_region", cfg.structure.sums_per_region},
                      {"leaves_per_variable", cfg.structure.leaves_per_variable},
                      {"normal_leaves", cfg.structure.normal_leaves},
                      {"seed", cfg.structure_seed}};
  doc["paramnet"] = {{"hidden1", cfg.paramnet.hidden1},
                     {"hidden2", cfg.paramnet.hidden2},
                     {"seed", cfg.paramnet_seed}};
  doc["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"frequencies", cfg.train.frequencies},
                  {"eta", cfg.train.eta},
                  {"learning_rate", cfg.train.learning_rate},
                  {"weight_decay", cfg.train.weight_decay},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"adam_epsilon", cfg.train.adam_epsilon},
                  {"seed", cfg.train.seed},
                  {"standardize", cfg.train.standardize},
                  {"holdout_frequencies", cfg.train.holdout_frequencies}};
  doc["spectral"] = {{"eta", cfg.spectral.eta},
                     {"cfd_frequencies", cfg.spectral.cfd_frequencies}};
  doc["inversion"] = {{"grid_points", cfg.inversion.grid_points}};
  doc["eval"] = {{"eval_rows", cfg.eval.eval_rows},
                 {"accuracy_rows", cfg.eval.accuracy_rows},
                 {"histogram_bins", cfg.eval.histogram_bins},
                 {"seed", cfg.eval.seed}};
  return doc.dump(2) + "\n";
}

namespace {

// ------------------------------------------------------------- helpers

scm::ModelName parse_dataset(std::string name) {
  std::replace(name.begin(), name.end(), '-', '_');
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  try {
    return scm::parse_model_name(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void apply_env(RunConfig& cfg, std::string& out_dir) {
  if (const char* seed = std::getenv("CFSPN_SEED")) {
    try {
      std::size_t used = 0;
      const std::uint64_t value = std::stoull(seed, &used);
      if (used != std::string(seed).size()) throw std::invalid_argument("trailing text");
      cfg.scm.seed = value;
      cfg.train.seed = value;
      cfg.eval.seed = value;
    } catch (const std::exception&) {
      throw ConfigError("CFSPN_SEED is not an unsigned integer: " + std::string(seed));
    }
  }
  if (const char* out = std::getenv("CFSPN_OUT")) {
    if (*out != '\0') out_dir = out;
  }
}

RunConfig load_config_file(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return load_run_config(text);
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
  io::atomic_write_file((fs::path(out_dir) / "config.json").string(), to_json(cfg));
}

std::vector<scm::Dataset> load_datasets(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no CSV datasets in " + dir);

  std::vector<scm::Dataset> datasets;
  for (const std::string& file : files) {
    try {
      datasets.push_back(scm::read_csv(file));
    } catch (const std::exception& e) {
      throw DataError("cannot read " + file + ": " + e.what());
    }
  }
  for (const scm::Dataset& d : datasets) {
    if (d.model_name != datasets[0].model_name || d.width() != datasets[0].width()) {
      throw DataError("datasets in " + dir + " come from different models");
    }
  }
  // observational first, interventions after in file order
  std::stable_sort(datasets.begin(), datasets.end(),
                   [](const scm::Dataset& a, const scm::Dataset& b) {
                     return a.intervention.observational() >
                            b.intervention.observational();
                   });
  return datasets;
}

std::vector<scm::CorpusEntry> split_corpus(const std::vector<scm::Dataset>& datasets) {
  std::vector<scm::CorpusEntry> corpus;
  for (const scm::Dataset& d : datasets) {
    if (d.count() < 5) throw DataError("dataset too small to split 80/20");
    const int train_n = d.count() * 4 / 5;
    scm::CorpusEntry entry;
    entry.train = d;
    entry.train.rows = d.rows.topRows(train_n);
    entry.test = d;
    entry.test.rows = d.rows.bottomRows(d.count() - train_n);
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

double percentile(Eigen::VectorXd column, double q) {
  std::vector<double> sorted(column.data(), column.data() + column.size());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lower = static_cast<std::size_t>(pos);
  if (lower + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lower);
  return sorted[lower] * (1.0 - frac) + sorted[lower + 1] * frac;
}

// ------------------------------------------------------------- commands

int cmd_generate(RunConfig cfg, const std::string& dataset_flag, int rows_flag,
                 std::string out_dir, std::ostream& out) {
  if (!dataset_flag.empty()) cfg.scm.dataset = dataset_flag;
  if (rows_flag > 0) cfg.scm.rows_per_intervention = rows_flag;
  apply_env(cfg, out_dir);
  if (cfg.scm.rows_per_intervention < 5) {
    throw ConfigError("rows_per_intervention must be at least 5");
  }
  const scm::StructuralModel model = scm::build_model(parse_dataset(cfg.scm.dataset));
  cfg.scm.dataset = scm::to_string(model.id);

  fs::create_directories(out_dir);
  std::vector<scm::InterventionSpec> specs{scm::InterventionSpec::none()};
  for (const int v : model.interveneable) specs.push_back(scm::InterventionSpec::draw(v));

  for (std::size_t r = 0; r < specs.size(); ++r) {
    const scm::Dataset data =
        scm::sample(model, specs[r], cfg.scm.rows_per_intervention,
                    rng::derive_seed(cfg.scm.seed, kGenerateStream + r));
    const std::string label = scm::intervention_label(model, specs[r]);
    const std::string path =
        (fs::path(out_dir) / (cfg.scm.dataset + "_" + evalsuite::slug(label) + ".csv"))
            .string();
    scm::write_csv(data, path);
    out << label << ": " << data.count() << " rows -> " << path << "\n";
  }
  echo_config(cfg, out_dir);
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& data_dir, std::string out_dir,
              const std::string& resume, std::ostream& out) {
  apply_env(cfg, out_dir);
  const std::vector<scm::Dataset> datasets = load_datasets(data_dir);
  const scm::StructuralModel model =
      scm::build_model(parse_dataset(datasets[0].model_name));
  const std::vector<scm::CorpusEntry> corpus = split_corpus(datasets);

  std::vector<std::string> labels;
  for (const scm::CorpusEntry& entry : corpus) {
    labels.push_back(scm::intervention_label(model, entry.train.intervention));
  }

  circuit::CircuitGraph circuit;
  std::optional<paramnet::ParamNet> net;
  int prev_epochs = 0;
  if (resume.empty()) {
    circuit = circuit::build_random_structure(model.variables, cfg.structure,
                                              cfg.structure_seed);
    net.emplace(cfg.paramnet, circuit, cfg.paramnet_seed);
  } else {
    trainer::Checkpoint checkpoint = [&] {
      try {
        trainer::Checkpoint loaded = trainer::load_checkpoint(resume);
        evalsuite::require_schema_match(loaded, model);
        return loaded;
      } catch (const std::exception& e) {
        throw DataError("cannot resume from " + resume + ": " + e.what());
      }
    }();
    circuit = std::move(checkpoint.circuit);
    net.emplace(std::move(checkpoint.net));
    prev_epochs = checkpoint.epochs_done;
  }

  trainer::TrainResult result = [&] {
    try {
      return trainer::train(circuit, std::move(*net), model, corpus, cfg.train);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    } catch (const std::runtime_error& e) {
      throw NumericError(e.what());
    }
  }();

  fs::create_directories(out_dir);
  const long steps_per_epoch =
      static_cast<long>(result.report.log.size()) / cfg.train.epochs;
  const long offset = prev_epochs * steps_per_epoch;
  std::ostringstream log_csv;
  log_csv << "step,intervention,loss\n";
  for (const auto& step : result.report.log) {
    log_csv << offset + step.step << ',' << labels[step.intervention] << ','
            << fmt(step.loss) << '\n';
  }
  io::atomic_write_file((fs::path(out_dir) / "train_log.csv").string(), log_csv.str());

  const std::string checkpoint_path = (fs::path(out_dir) / "checkpoint.json").string();
  trainer::save_checkpoint(checkpoint_path,
                           {std::move(circuit), std::move(result.net),
                            std::move(result.standardizer), cfg.train,
                            prev_epochs + cfg.train.epochs, labels});
  echo_config(cfg, out_dir);

  out << "trained " << cfg.train.epochs << " epochs (" << result.report.log.size()
      << " steps) in " << fmt(result.report.wall_seconds) << " s\n";
  out << "held-out cfd: " << fmt(result.report.initial_holdout_cfd) << " -> "
      << fmt(result.report.holdout_cfd.back()) << "\n";
  out << "checkpoint: " << checkpoint_path << "\n";
  return 0;
}

std::vector<std::pair<int, int>> resolve_pairs(const scm::StructuralModel& model,
                                               const std::vector<std::string>& pair_flags) {
  std::vector<std::pair<std::string, std::string>> names;
  if (!pair_flags.empty()) {
    for (const std::string& flag : pair_flags) {
      const auto comma = flag.find(',');
      if (comma == std::string::npos || comma == 0 || comma + 1 == flag.size()) {
        throw ConfigError("--pairs expects NAME,NAME entries, got \"" + flag + "\"");
      }
      names.emplace_back(flag.substr(0, comma), flag.substr(comma + 1));
    }
  } else if (model.name == "Student") {
    names = {{"C", "T"}, {"M", "C"}};
  } else if (model.name == "Hiring") {
    names = {{"B", "E"}, {"Sk", "B"}};
  } else {
    throw ConfigError("no default pairs for " + model.name + "; pass --pairs");
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [a, b] : names) {
    try {
      pairs.emplace_back(model.index_of(a), model.index_of(b));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  return pairs;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint_path, const std::string& dataset,
             std::string out_dir, bool multi, const std::vector<std::string>& pair_flags,
             std::ostream& out) {
  apply_env(cfg, out_dir);
  const scm::StructuralModel model = scm::build_model(parse_dataset(dataset));
  const trainer::Checkpoint checkpoint = [&] {
    try {
      return trainer::load_checkpoint(checkpoint_path);
    } catch (const std::exception& e) {
      throw DataError("cannot load checkpoint " + checkpoint_path + ": " + e.what());
    }
  }();

  evalsuite::ExperimentSpec spec;
  spec.out_dir = out_dir;
  spec.eval_rows = cfg.eval.eval_rows;
  spec.accuracy_rows = cfg.eval.accuracy_rows;
  spec.grid_points = cfg.inversion.grid_points;
  spec.histogram_bins = cfg.eval.histogram_bins;
  spec.cfd_frequencies = cfg.spectral.cfd_frequencies;
  spec.eta = cfg.spectral.eta;
  spec.seed = cfg.eval.seed;

  try {
    const evalsuite::SingleEvalResult single =
        evalsuite::run_single_intervention_eval(checkpoint, model, spec);
    evalsuite::compare_obs_vs_interventional(single, spec);
    for (const auto& [label, value] : single.cfd) {
      out << "cfd " << label << ": " << fmt(value) << "\n";
    }
    out << "accuracy table: " << (fs::path(out_dir) / "accuracy.csv").string() << "\n";

    if (multi) {
      const auto pairs = resolve_pairs(model, pair_flags);
      const evalsuite::MultiEvalResult pairs_result =
          evalsuite::run_multi_intervention_eval(checkpoint, model, pairs, spec);
      for (const evalsuite::PairEval& entry : pairs_result.pairs) {
        out << "cfd " << entry.label << ": " << fmt(entry.cfd) << "\n";
      }
    }
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  echo_config(cfg, out_dir);
  return 0;
}

int cmd_query(RunConfig cfg, const std::string& checkpoint_path, const std::string& dataset,
              const std::vector<std::string>& do_flags, const std::string& var_name,
              bool grid, bool have_point, double point_x, std::ostream& out) {
  std::string unused_out;
  apply_env(cfg, unused_out);
  if (grid == have_point) {
    throw ConfigError("pass exactly one of --grid and --point X");
  }
  const scm::StructuralModel model = scm::build_model(parse_dataset(dataset));
  const trainer::Checkpoint checkpoint = [&] {
    try {
      trainer::Checkpoint loaded = trainer::load_checkpoint(checkpoint_path);
      evalsuite::require_schema_match(loaded, model);
      return loaded;
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    } catch (const std::runtime_error& e) {
      throw DataError("cannot load checkpoint " + checkpoint_path + ": " + e.what());
    }
  }();

  scm::InterventionSpec spec = scm::InterventionSpec::none();
  for (const std::string& flag : do_flags) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == flag.size()) {
      throw ConfigError("--do expects NAME=VALUE, got \"" + flag + "\"");
    }
    int index = -1;
    double value = 0.0;
    try {
      index = model.index_of(flag.substr(0, eq));
      std::size_t used = 0;
      const std::string text = flag.substr(eq + 1);
      value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception& e) {
      throw ConfigError("bad --do \"" + flag + "\": " + e.what());
    }
    const scm::VariableDef& var = model.variables[index];
    if (var.kind == scm::Kind::Discrete) {
      const int code = static_cast<int>(std::lround(value));
      if (std::abs(value - code) > 1e-9 ||
          std::find(var.support.begin(), var.support.end(), code) == var.support.end()) {
        throw ConfigError("value " + flag.substr(eq + 1) + " is not a support code of " +
                          var.name);
      }
    }
    for (const auto& a : spec.assignments) {
      if (a.variable == index) throw ConfigError(var.name + " intervened twice");
    }
    spec.and_fix(index, value);
  }

  int target = -1;
  try {
    target = model.index_of(var_name);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const scm::VariableDef& var = model.variables[target];

  // A query about a variable the query itself pins is answered by the
  // intervention semantics: do(X = v) makes X a point mass at v. The
  // circuit is only consulted for the other variables - it conditions
  // on the mutilated graph, not on the intervention value.
  const scm::InterventionSpec::Assignment* pinned = nullptr;
  for (const auto& a : spec.assignments) {
    if (a.variable == target) pinned = &a;
  }

  const Eigen::MatrixXi adjacency = scm::mutilate(model, spec);
  const Eigen::VectorXd psi = checkpoint.net.predict_plain(adjacency);
  const trainer::Standardizer& standardizer = checkpoint.standardizer;

  if (grid) {
    if (var.kind != scm::Kind::Continuous) {
      throw ConfigError("--grid requires a continuous variable; " + var.name +
                        " is discrete (use --point CODE)");
    }
    double lo, hi;
    if (pinned != nullptr) {
      lo = var.domain_low - standardizer.stddev[target];
      hi = var.domain_high + standardizer.stddev[target];
    } else {
      const scm::Dataset data = scm::sample(model, spec, cfg.eval.eval_rows,
                                            rng::derive_seed(cfg.eval.seed, kQueryStream));
      lo = percentile(data.rows.col(target), 0.01);
      hi = percentile(data.rows.col(target), 0.99);
      if (hi - lo < 1e-9) {
        lo -= 0.5;
        hi += 0.5;
      }
    }
    out << "x,density\n";
    if (pinned != nullptr) {
      const double spacing =
          (hi - lo) / static_cast<double>(cfg.inversion.grid_points - 1);
      long nearest = std::lround((pinned->value - lo) / spacing);
      nearest = std::clamp(nearest, 0L, static_cast<long>(cfg.inversion.grid_points - 1));
      for (int i = 0; i < cfg.inversion.grid_points; ++i) {
        const double x = lo + spacing * static_cast<double>(i);
        out << fmt(x) << ',' << fmt(i == nearest ? 1.0 / spacing : 0.0) << '\n';
      }
    } else {
      const inversion::DensityGrid result = inversion::marginal_density_grid(
          checkpoint.circuit, psi, target, lo, hi, cfg.inversion.grid_points,
          standardizer.mean[target], standardizer.stddev[target]);
      for (int i = 0; i < result.x.size(); ++i) {
        out << fmt(result.x[i]) << ',' << fmt(result.density[i]) << '\n';
      }
    }
    return 0;
  }

  // point query
  if (var.kind == scm::Kind::Discrete) {
    const int code = static_cast<int>(std::lround(point_x));
    if (std::abs(point_x - code) > 1e-9 ||
        std::find(var.support.begin(), var.support.end(), code) == var.support.end()) {
      throw ConfigError("--point must be a support code of " + var.name);
    }
  }
  if (pinned != nullptr) {
    // mass of the atom: 1 at the pinned value, 0 elsewhere
    out << fmt(std::abs(point_x - pinned->value) < 1e-9 ? 1.0 : 0.0) << "\n";
    return 0;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(model.size());
  std::vector<bool> present(model.size(), false);
  present[target] = true;
  x[target] = (point_x - standardizer.mean[target]) / standardizer.stddev[target];
  const double density =
      inversion::invert_marginal(checkpoint.circuit, psi, x, present) /
      standardizer.stddev[target];
  out << fmt(density) << "\n";
  return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"characteristic interventional sum-product networks"};
  app.set_version_flag("--version", std::string("cfspn ") + kVersion + " (schema " +
                                        kSchemaVersion + ")");
  app.require_subcommand(1);

  std::string config_path, dataset, out_dir, data_dir, checkpoint_path, resume, var_name;
  std::vector<std::string> pair_flags, do_flags;
  int rows = 0;
  bool multi = false, grid = false;
  double point_x = 0.0;

  CLI::App* generate = app.add_subcommand("generate", "sample per-intervention datasets");
  generate->add_option("--config", config_path, "JSON config file");
  generate->add_option("--dataset", dataset, "causal-health | hiring | student");
  generate->add_option("--rows", rows, "rows per intervention");
  generate->add_option("--out", out_dir, "output directory")->required();
  std::optional<std::uint64_t> seed_flag;
  generate->add_option("--seed", seed_flag, "data seed");

  CLI::App* train = app.add_subcommand("train", "fit a model to a generated corpus");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--data", data_dir, "directory of generated CSVs")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--seed", seed_flag, "training seed");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path, "JSON config file");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--dataset", dataset, "causal-health | hiring | student")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_flag("--multi", multi, "also evaluate two-variable interventions");
  eval->add_option("--pairs", pair_flags, "pairs as NAME,NAME (e.g. C,T M,C)");
  eval->add_option("--seed", seed_flag, "evaluation seed");

  CLI::App* query = app.add_subcommand("query", "one-off marginal density");
  query->add_option("--config", config_path, "JSON config file");
  query->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  query->add_option("--dataset", dataset, "causal-health | hiring | student")->required();
  query->add_option("--do", do_flags, "interventions as NAME=VALUE");
  query->add_option("--var", var_name, "variable to query")->required();
  query->add_flag("--grid", grid, "emit a density grid CSV on stdout");
  CLI::Option* point_opt = query->add_option("--point", point_x, "density at one value");
  query->add_option("--seed", seed_flag, "query seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg = load_config_file(config_path);
    if (seed_flag.has_value()) {
      cfg.scm.seed = *seed_flag;
      cfg.train.seed = *seed_flag;
      cfg.eval.seed = *seed_flag;
    }
    if (generate->parsed()) return cmd_generate(cfg, dataset, rows, out_dir, out);
    if (train->parsed()) return cmd_train(cfg, data_dir, out_dir, resume, out);
    if (eval->parsed())
      return cmd_eval(cfg, checkpoint_path, dataset, out_dir, multi, pair_flags, out);
    return cmd_query(cfg, checkpoint_path, dataset, do_flags, var_name, grid,
                     point_opt->count() > 0, point_x, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

} // namespace cfspn::cli

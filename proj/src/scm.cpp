#include "cfspn/scm.hpp"

#include "cfspn/io.hpp"
#include "cfspn/rng.hpp"
#include "cfspn/version.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cfspn::scm {

namespace {

// Decision thresholds and intervention-value ranges below are empirical
// quantiles of a 1,000,000-row observational draw (seed 20260819) from
// the same generator, frozen here so every build sees identical models.
//   - hiring cutoff: median of 3*I + Sk
//   - student cutoffs: 60th / 90th percentile of T + C
//   - continuous domain ranges: 1st / 99th percentile of the variable
constexpr double kHiringCutoff = 55.360468;
constexpr double kStudentRegionalCutoff = 11.310995;
constexpr double kStudentNationalCutoff = 16.269239;

std::vector<int> iota_support(int lo, int hi) {
  std::vector<int> s;
  for (int v = lo; v <= hi; ++v) s.push_back(v);
  return s;
}

VariableDef continuous(std::string name, double lo, double hi) {
  VariableDef def;
  def.name = std::move(name);
  def.kind = Kind::Continuous;
  def.domain_low = lo;
  def.domain_high = hi;
  return def;
}

VariableDef discrete(std::string name, int lo, int hi) {
  VariableDef def;
  def.name = std::move(name);
  def.kind = Kind::Discrete;
  def.support = iota_support(lo, hi);
  def.domain_low = lo;
  def.domain_high = hi;
  return def;
}

StructuralModel causal_health() {
  StructuralModel m;
  m.id = ModelName::CausalHealth;
  m.name = "CausalHealth";
  m.variables = {
      continuous("A", 1.003640, 98.993259),
      continuous("F", -2.523668, 72.522798),
      continuous("H", -66.957958, 107.914889),
      continuous("M", -18.927307, 80.507620),
      discrete("D1", 0, 1),
      discrete("D2", 0, 1),
      discrete("D3", 0, 1),
  };
  const int A = 0, F = 1, H = 2, M = 3, D1 = 4, D2 = 5, D3 = 6;
  m.edges = {{A, F}, {A, H}, {F, H}, {H, M}};
  for (const int d : {D1, D2, D3}) {
    for (const int p : {A, F, H, M}) m.edges.emplace_back(p, d);
  }
  m.interveneable = {A, F, H, M};
  return m;
}

StructuralModel hiring() {
  StructuralModel m;
  m.id = ModelName::Hiring;
  m.name = "Hiring";
  m.variables = {
      discrete("Sc", 0, 9),
      continuous("W", 0.147587, 6.631091),
      discrete("E", 0, 6),
      continuous("Sk", 1.818749, 13.464284),
      continuous("B", -2.128090, 11.133320),
      continuous("I", -0.840213, 40.002860),
      discrete("D", 0, 1),
  };
  const int Sc = 0, W = 1, E = 2, Sk = 3, B = 4, I = 5, D = 6;
  m.edges = {{Sc, B}, {W, Sk}, {E, Sk}, {Sk, I}, {B, I}, {I, D}, {Sk, D}};
  m.interveneable = {I, E, Sk, B};
  m.constants = {{"hiring_cutoff", kHiringCutoff}};
  return m;
}

StructuralModel student() {
  StructuralModel m;
  m.id = ModelName::Student;
  m.name = "Student";
  m.variables = {
      discrete("Sc", 0, 4),
      continuous("Q", -7.202206, 8.157750),
      continuous("M", 3.016653, 16.980104),
      continuous("C", -2.554150, 10.650924),
      continuous("T", 0.496143, 11.901653),
      discrete("S", 0, 2),
  };
  const int Sc = 0, Q = 1, M = 2, C = 3, T = 4, S = 5;
  m.edges = {{Sc, Q}, {Q, C}, {M, C}, {Q, T}, {M, T}, {T, S}, {C, S}};
  m.interveneable = {Q, M, C, T};
  m.constants = {{"student_regional_cutoff", kStudentRegionalCutoff},
                 {"student_national_cutoff", kStudentNationalCutoff}};
  return m;
}

// One row of ancestral sampling. `forced[i]` marks intervened variables,
// whose equations (and noise draws) are skipped entirely.
void eval_row_causal_health(double* x, const char* forced, rng::Engine& eng) {
  if (!forced[0]) x[0] = eng.uniform(0.0, 100.0);
  const double A = x[0];
  if (!forced[1]) x[1] = 0.5 * A + eng.normal(10.0, 10.0);
  const double F = x[1];
  if (!forced[2]) x[2] = (100.0 - A * A) / 100.0 + 0.5 * F + eng.normal(40.0, 30.0);
  const double H = x[2];
  if (!forced[3]) x[3] = 0.5 * H + eng.normal(20.0, 10.0);
  const double M = x[3];

  // Diagnosis scores; only their argmax is observable, as one-hot D1..D3.
  const double s1 = A <= 4.09837
      ? 0.00108 * A * A * A - 0.08862 * A * A + 1.337 * A + eng.normal(25.0, 10.0)
      : eng.normal(5.0, 10.0);
  const double s2 = 0.0175 * F + 0.525 * M + eng.normal(0.0, 5.0);
  const double s3 = 0.00013857 * A * A * A - 0.0135 * A * A + 0.2025 * A +
                    0.2025 * H + eng.normal(17.1714, 0.2 * A);
  int best = 0;
  double best_score = s1;
  if (s2 > best_score) { best = 1; best_score = s2; }
  if (s3 > best_score) { best = 2; }
  if (!forced[4]) x[4] = best == 0 ? 1.0 : 0.0;
  if (!forced[5]) x[5] = best == 1 ? 1.0 : 0.0;
  if (!forced[6]) x[6] = best == 2 ? 1.0 : 0.0;
}

void eval_row_hiring(double* x, const char* forced, rng::Engine& eng, double cutoff) {
  if (!forced[0]) x[0] = eng.uniform_int(0, 9);
  if (!forced[1]) x[1] = 0.5 * eng.chi_squared(4);
  const double W = x[1];
  if (!forced[2]) x[2] = eng.uniform_int(0, 6);
  const double E = x[2];
  if (!forced[3]) x[3] = 0.8 * E + 1.2 * W + eng.pareto(2.75);
  const double Sk = x[3];
  if (!forced[4]) x[4] = x[0] + eng.normal(0.0, 1.5);
  const double B = x[4];
  if (!forced[5]) x[5] = 3.0 * Sk - 0.5 * B + eng.normal(0.0, 4.0);
  const double I = x[5];
  if (!forced[6]) x[6] = 3.0 * I + Sk >= cutoff ? 1.0 : 0.0;
}

void eval_row_student(double* x, const char* forced, rng::Engine& eng,
                      double regional, double national) {
  if (!forced[0]) x[0] = eng.uniform_int(0, 4);
  const double Sc = x[0];
  if (!forced[1]) x[1] = eng.normal(2.5, 3.0) - Sc;
  const double Q = x[1];
  if (!forced[2]) x[2] = eng.normal(10.0, 3.0);
  const double M = x[2];
  if (!forced[3]) x[3] = 0.8 * Q + 0.2 * M + eng.pareto(3.0);
  const double C = x[3];
  if (!forced[4]) x[4] = 0.4 * Q + 0.6 * M + eng.normal(0.0, 1.0);
  const double T = x[4];
  if (!forced[5]) {
    x[5] = (T + C >= regional ? 1.0 : 0.0) + (T + C >= national ? 1.0 : 0.0);
  }
}

double constant_of(const StructuralModel& model, const std::string& key) {
  for (const auto& [name, value] : model.constants) {
    if (name == key) return value;
  }
  throw std::logic_error("missing model constant: " + key);
}

void validate_spec(const StructuralModel& model, const InterventionSpec& spec) {
  std::vector<bool> seen(model.variables.size(), false);
  for (const auto& a : spec.assignments) {
    if (a.variable < 0 || a.variable >= model.size())
      throw std::invalid_argument("intervention target out of range");
    if (seen[a.variable])
      throw std::invalid_argument("variable intervened twice: " +
                                  model.variables[a.variable].name);
    seen[a.variable] = true;
    if (a.sampled) continue;
    const VariableDef& def = model.variables[a.variable];
    if (def.kind == Kind::Discrete) {
      const bool on_support = std::any_of(def.support.begin(), def.support.end(),
                                          [&](int c) { return a.value == c; });
      if (!on_support)
        throw std::invalid_argument("intervention value off support for " + def.name);
    } else if (a.value < def.domain_low || a.value > def.domain_high) {
      throw std::invalid_argument("intervention value outside domain of " + def.name);
    }
  }
}

std::string format_value(double v, Kind kind) {
  char buf[48];
  if (kind == Kind::Discrete) {
    std::snprintf(buf, sizeof buf, "%d", static_cast<int>(std::llround(v)));
  } else {
    std::snprintf(buf, sizeof buf, "%.12f", v);
  }
  return buf;
}

} // namespace

int StructuralModel::index_of(std::string_view symbol) const {
  for (int i = 0; i < size(); ++i) {
    if (variables[i].name == symbol) return i;
  }
  throw std::invalid_argument("unknown variable: " + std::string(symbol) +
                              " in model " + name);
}

StructuralModel build_model(ModelName name) {
  switch (name) {
    case ModelName::CausalHealth: return causal_health();
    case ModelName::Hiring: return hiring();
    case ModelName::Student: return student();
  }
  throw std::logic_error("unreachable model enum");
}

ModelName parse_model_name(std::string_view s) {
  if (s == "causal_health") return ModelName::CausalHealth;
  if (s == "hiring") return ModelName::Hiring;
  if (s == "student") return ModelName::Student;
  throw std::invalid_argument("unknown model name: " + std::string(s) +
                              " (expected causal_health, hiring or student)");
}

std::string to_string(ModelName name) {
  switch (name) {
    case ModelName::CausalHealth: return "causal_health";
    case ModelName::Hiring: return "hiring";
    case ModelName::Student: return "student";
  }
  throw std::logic_error("unreachable model enum");
}

Dataset sample(const StructuralModel& model, const InterventionSpec& spec,
               int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  validate_spec(model, spec);

  const int n = model.size();
  Dataset data;
  data.rows.resize(count, n);
  data.columns = model.variables;
  data.intervention = spec;
  data.seed = seed;
  data.model_name = to_string(model.id);
  data.constants = model.constants;

  rng::Engine eng(seed);
  std::vector<double> x(n, 0.0);
  std::vector<char> forced(n, 0);

  const double hiring_cutoff =
      model.id == ModelName::Hiring ? constant_of(model, "hiring_cutoff") : 0.0;
  const double regional =
      model.id == ModelName::Student ? constant_of(model, "student_regional_cutoff") : 0.0;
  const double national =
      model.id == ModelName::Student ? constant_of(model, "student_national_cutoff") : 0.0;

  for (int r = 0; r < count; ++r) {
    std::fill(forced.begin(), forced.end(), 0);
    for (const auto& a : spec.assignments) {
      double v = a.value;
      if (a.sampled) {
        const VariableDef& def = model.variables[a.variable];
        if (def.kind == Kind::Discrete) {
          v = def.support[eng.uniform_int(0, static_cast<int>(def.support.size()) - 1)];
        } else {
          v = eng.uniform(def.domain_low, def.domain_high);
        }
      }
      x[a.variable] = v;
      forced[a.variable] = 1;
    }
    switch (model.id) {
      case ModelName::CausalHealth: eval_row_causal_health(x.data(), forced.data(), eng); break;
      case ModelName::Hiring: eval_row_hiring(x.data(), forced.data(), eng, hiring_cutoff); break;
      case ModelName::Student: eval_row_student(x.data(), forced.data(), eng, regional, national); break;
    }
    for (int j = 0; j < n; ++j) data.rows(r, j) = x[j];
  }
  return data;
}

Eigen::MatrixXi mutilate(const StructuralModel& model, const InterventionSpec& spec) {
  validate_spec(model, spec);
  const int n = model.size();
  Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(n, n);
  for (const auto& [parent, child] : model.edges) adj(parent, child) = 1;
  for (const auto& a : spec.assignments) adj.col(a.variable).setZero();
  return adj;
}

std::vector<CorpusEntry> make_training_corpus(const StructuralModel& model,
                                              int per_intervention_count,
                                              std::uint64_t value_seed) {
  if (per_intervention_count < 1)
    throw std::invalid_argument("make_training_corpus: count must be >= 1");

  std::vector<InterventionSpec> specs{InterventionSpec::none()};
  for (const int v : model.interveneable) specs.push_back(InterventionSpec::draw(v));

  std::vector<CorpusEntry> corpus;
  corpus.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Dataset whole = sample(model, specs[i], per_intervention_count,
                                 rng::derive_seed(value_seed, i));
    const int train_n = per_intervention_count * 4 / 5;
    const int test_n = per_intervention_count - train_n;

    CorpusEntry entry;
    entry.train = whole;
    entry.train.rows = whole.rows.topRows(train_n);
    entry.test = whole;
    entry.test.rows = whole.rows.bottomRows(test_n);
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

void write_csv(const Dataset& data, const std::string& csv_path) {
  const int n = data.width();
  std::ostringstream out;
  for (int j = 0; j < n; ++j) out << (j ? "," : "") << data.columns[j].name;
  out << '\n';
  for (int j = 0; j < n; ++j) {
    out << (j ? "," : "");
    if (data.columns[j].kind == Kind::Discrete) {
      out << "d:" << data.columns[j].support.size();
    } else {
      out << 'c';
    }
  }
  out << '\n';
  for (int r = 0; r < data.count(); ++r) {
    for (int j = 0; j < n; ++j) {
      out << (j ? "," : "") << format_value(data.rows(r, j), data.columns[j].kind);
    }
    out << '\n';
  }
  io::atomic_write_file(csv_path, out.str());

  nlohmann::json meta;
  meta["schema_version"] = cfspn::kSchemaVersion;
  meta["model"] = data.model_name;
  meta["seed"] = data.seed;
  meta["intervention"] = nlohmann::json::array();
  for (const auto& a : data.intervention.assignments) {
    meta["intervention"].push_back({{"variable", data.columns[a.variable].name},
                                    {"index", a.variable},
                                    {"value", a.value},
                                    {"sampled", a.sampled}});
  }
  meta["constants"] = nlohmann::json::object();
  for (const auto& [key, value] : data.constants) meta["constants"][key] = value;
  meta["columns"] = nlohmann::json::array();
  for (const auto& col : data.columns) {
    nlohmann::json c{{"name", col.name},
                     {"kind", col.kind == Kind::Discrete ? "d" : "c"},
                     {"low", col.domain_low},
                     {"high", col.domain_high}};
    if (col.kind == Kind::Discrete) c["support"] = col.support;
    meta["columns"].push_back(c);
  }
  io::atomic_write_file(csv_path + ".meta.json", meta.dump(2) + "\n");
}

Dataset read_csv(const std::string& csv_path) {
  const std::string text = io::read_file(csv_path);
  const nlohmann::json meta = nlohmann::json::parse(io::read_file(csv_path + ".meta.json"));

  Dataset data;
  data.model_name = meta.at("model").get<std::string>();
  data.seed = meta.at("seed").get<std::uint64_t>();
  for (const auto& c : meta.at("columns")) {
    VariableDef def;
    def.name = c.at("name").get<std::string>();
    def.kind = c.at("kind").get<std::string>() == "d" ? Kind::Discrete : Kind::Continuous;
    def.domain_low = c.at("low").get<double>();
    def.domain_high = c.at("high").get<double>();
    if (def.kind == Kind::Discrete) def.support = c.at("support").get<std::vector<int>>();
    data.columns.push_back(std::move(def));
  }
  for (const auto& a : meta.at("intervention")) {
    data.intervention.assignments.push_back({a.at("index").get<int>(),
                                             a.at("value").get<double>(),
                                             a.at("sampled").get<bool>()});
  }
  for (const auto& [key, value] : meta.at("constants").items()) {
    data.constants.emplace_back(key, value.get<double>());
  }

  const int n = static_cast<int>(data.columns.size());
  std::vector<double> cells;
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line); // names
  std::getline(lines, line); // kind tags
  int rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    int got = 0;
    while (std::getline(fields, field, ',')) {
      cells.push_back(std::stod(field));
      ++got;
    }
    if (got != n) throw std::runtime_error("malformed data row in " + csv_path);
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("no data rows in " + csv_path);
  data.rows.resize(rows, n);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) data.rows(r, j) = cells[static_cast<std::size_t>(r) * n + j];
  return data;
}

std::string intervention_label(const StructuralModel& model, const InterventionSpec& spec) {
  if (spec.observational()) return "observational";
  std::string out = "do(";
  for (std::size_t i = 0; i < spec.assignments.size(); ++i) {
    if (i) out += ",";
    out += model.variables[spec.assignments[i].variable].name;
  }
  out += ")";
  return out;
}

} // namespace cfspn::scm

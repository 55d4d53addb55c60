#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cfspn::scm {

enum class ModelName { CausalHealth, Hiring, Student };

enum class Kind { Continuous, Discrete };

struct VariableDef {
  std::string name;
  Kind kind = Kind::Continuous;
  std::vector<int> support;  // Discrete only; strictly increasing integer codes
  double domain_low = 0.0;   // closed interval an intervention value may take
  double domain_high = 1.0;
};

/// A set of perfect interventions. An empty assignment list means
/// observational. A sampled assignment redraws its value uniformly over
/// the variable's domain (continuous) or support (discrete) on every row.
struct InterventionSpec {
  struct Assignment {
    int variable = -1;
    double value = 0.0;
    bool sampled = false;
  };
  std::vector<Assignment> assignments;

  bool observational() const { return assignments.empty(); }

  static InterventionSpec none() { return {}; }
  static InterventionSpec fix(int variable, double value) {
    InterventionSpec s;
    s.assignments.push_back({variable, value, false});
    return s;
  }
  static InterventionSpec draw(int variable) {
    InterventionSpec s;
    s.assignments.push_back({variable, 0.0, true});
    return s;
  }
  InterventionSpec& and_fix(int variable, double value) {
    assignments.push_back({variable, value, false});
    return *this;
  }
  InterventionSpec& and_draw(int variable) {
    assignments.push_back({variable, 0.0, true});
    return *this;
  }
};

struct StructuralModel {
  ModelName id = ModelName::CausalHealth;
  std::string name;                         // display name, e.g. "Student"
  std::vector<VariableDef> variables;       // listed in topological order
  std::vector<std::pair<int, int>> edges;   // (parent index, child index)
  std::vector<int> interveneable;           // indices eligible for do(...)
  std::vector<std::pair<std::string, double>> constants; // frozen cutoffs

  int size() const { return static_cast<int>(variables.size()); }
  int index_of(std::string_view symbol) const;  // throws on unknown symbol
};

StructuralModel build_model(ModelName name);

/// Accepts the canonical lowercase names "causal_health", "hiring",
/// "student"; throws on anything else.
ModelName parse_model_name(std::string_view s);
std::string to_string(ModelName name);

struct Dataset {
  Eigen::MatrixXd rows;             // count x N
  std::vector<VariableDef> columns; // copied from the generating model
  InterventionSpec intervention;
  std::uint64_t seed = 0;
  std::string model_name;
  std::vector<std::pair<std::string, double>> constants;

  int count() const { return static_cast<int>(rows.rows()); }
  int width() const { return static_cast<int>(rows.cols()); }
};

/// Ancestral sampling in variable order. Intervened variables bypass
/// their structural equation (and its noise draws) and take the assigned
/// value. Deterministic per (model, spec, count, seed).
Dataset sample(const StructuralModel& model, const InterventionSpec& spec,
               int count, std::uint64_t seed);

/// Base adjacency (bits[i][j] = 1 iff edge i -> j) with every incoming
/// edge of each intervened variable removed.
Eigen::MatrixXi mutilate(const StructuralModel& model, const InterventionSpec& spec);

struct CorpusEntry {
  Dataset train;
  Dataset test;
};

/// One entry per distribution the model is trained on: observational
/// first, then one per interveneable variable with values redrawn
/// uniformly per row. Rows are split 80/20 into train/test.
std::vector<CorpusEntry> make_training_corpus(const StructuralModel& model,
                                              int per_intervention_count,
                                              std::uint64_t value_seed);

/// Writes <path> with a name header and a kind-tag row, plus a JSON
/// sidecar at <path>.meta.json carrying the intervention spec, seed,
/// frozen constants and per-column domains.
void write_csv(const Dataset& data, const std::string& csv_path);
Dataset read_csv(const std::string& csv_path);

/// Short human-readable tag, e.g. "observational", "do(Q)", "do(C,T)".
std::string intervention_label(const StructuralModel& model, const InterventionSpec& spec);

} // namespace cfspn::scm

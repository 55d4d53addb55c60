#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cfspn/scm.hpp"

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

using namespace cfspn::scm;

namespace {

std::set<std::pair<int, int>> edge_set(const StructuralModel& m) {
  return {m.edges.begin(), m.edges.end()};
}

std::string temp_path(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

} // namespace

TEST_CASE("models carry the documented variables and edges") {
  SUBCASE("CausalHealth") {
    const StructuralModel m = build_model(ModelName::CausalHealth);
    REQUIRE(m.size() == 7);
    CHECK(m.variables[0].name == "A");
    CHECK(m.variables[4].name == "D1");
    CHECK(m.variables[4].kind == Kind::Discrete);
    CHECK(m.variables[4].support == std::vector<int>{0, 1});

    // A->F, A->H, F->H, H->M plus every diagnosis reading {A,F,H,M}
    std::set<std::pair<int, int>> want{{0, 1}, {0, 2}, {1, 2}, {2, 3}};
    for (int d : {4, 5, 6})
      for (int p : {0, 1, 2, 3}) want.insert({p, d});
    CHECK(edge_set(m) == want);
    CHECK(m.interveneable == std::vector<int>{0, 1, 2, 3});
  }

  SUBCASE("Hiring") {
    const StructuralModel m = build_model(ModelName::Hiring);
    REQUIRE(m.size() == 7);
    CHECK(m.variables[6].name == "D");
    CHECK(m.variables[6].support == std::vector<int>{0, 1});
    const int Sc = 0, W = 1, E = 2, Sk = 3, B = 4, I = 5, D = 6;
    const std::set<std::pair<int, int>> want{
        {Sc, B}, {W, Sk}, {E, Sk}, {Sk, I}, {B, I}, {I, D}, {Sk, D}};
    CHECK(edge_set(m) == want);
  }

  SUBCASE("Student") {
    const StructuralModel m = build_model(ModelName::Student);
    REQUIRE(m.size() == 6);
    CHECK(m.variables[5].name == "S");
    CHECK(m.variables[5].support == std::vector<int>{0, 1, 2});
    const int Sc = 0, Q = 1, M = 2, C = 3, T = 4, S = 5;
    const std::set<std::pair<int, int>> want{
        {Sc, Q}, {Q, C}, {M, C}, {Q, T}, {M, T}, {T, S}, {C, S}};
    CHECK(edge_set(m) == want);
    CHECK(m.index_of("T") == T);
    CHECK_THROWS_AS(m.index_of("Z"), std::invalid_argument);
  }

  SUBCASE("name round trip") {
    for (const ModelName n : {ModelName::CausalHealth, ModelName::Hiring, ModelName::Student}) {
      CHECK(parse_model_name(to_string(n)) == n);
    }
    CHECK_THROWS_AS(parse_model_name("camelCase"), std::invalid_argument);
  }
}

TEST_CASE("sampling is deterministic and seed-sensitive") {
  const StructuralModel m = build_model(ModelName::Student);
  const Dataset a = sample(m, InterventionSpec::none(), 500, 11);
  const Dataset b = sample(m, InterventionSpec::none(), 500, 11);
  const Dataset c = sample(m, InterventionSpec::none(), 500, 12);
  CHECK(a.rows == b.rows);
  CHECK(a.rows != c.rows);
}

TEST_CASE("observational draws respect ranges and supports") {
  const StructuralModel m = build_model(ModelName::CausalHealth);
  const Dataset data = sample(m, InterventionSpec::none(), 100000, 3);
  REQUIRE(data.rows.rows() == 100000);
  REQUIRE(data.rows.cols() == 7);

  CHECK(data.rows.col(0).minCoeff() >= 0.0);
  CHECK(data.rows.col(0).maxCoeff() <= 100.0);

  // the three diagnoses are a one-hot block
  for (int r = 0; r < 2000; ++r) {
    const double d1 = data.rows(r, 4), d2 = data.rows(r, 5), d3 = data.rows(r, 6);
    CHECK((d1 == 0.0 || d1 == 1.0));
    CHECK((d2 == 0.0 || d2 == 1.0));
    CHECK((d3 == 0.0 || d3 == 1.0));
    CHECK(d1 + d2 + d3 == 1.0);
  }
}

TEST_CASE("sample moments track the structural equations") {
  SUBCASE("Hiring") {
    const StructuralModel m = build_model(ModelName::Hiring);
    const Dataset data = sample(m, InterventionSpec::none(), 100000, 7);
    // W = ChiSquared(4)/2 so E[W] = 2
    CHECK(data.rows.col(1).mean() == doctest::Approx(2.0).epsilon(0.025));
    // Sk = 0.8 E + 1.2 W + Pareto(2.75): 0.8*3 + 1.2*2 + 2.75/1.75
    const double sk_mean = 0.8 * 3.0 + 1.2 * 2.0 + 2.75 / 1.75;
    CHECK(data.rows.col(3).mean() == doctest::Approx(sk_mean).epsilon(0.01));
    // B = Sc + noise: E[Sc] = 4.5
    CHECK(data.rows.col(4).mean() == doctest::Approx(4.5).epsilon(0.01));
  }

  SUBCASE("Student") {
    const StructuralModel m = build_model(ModelName::Student);
    const Dataset data = sample(m, InterventionSpec::none(), 100000, 8);
    // Q = N(2.5,.) - Sc with E[Sc] = 2
    CHECK(data.rows.col(1).mean() == doctest::Approx(0.5).epsilon(0.05));
    CHECK(data.rows.col(2).mean() == doctest::Approx(10.0).epsilon(0.01));
    // C = 0.8 Q + 0.2 M + Pareto(3): 0.4 + 2.0 + 1.5
    CHECK(data.rows.col(3).mean() == doctest::Approx(3.9).epsilon(0.01));
    // T = 0.4 Q + 0.6 M: 0.2 + 6.0
    CHECK(data.rows.col(4).mean() == doctest::Approx(6.2).epsilon(0.01));
  }

  SUBCASE("CausalHealth") {
    const StructuralModel m = build_model(ModelName::CausalHealth);
    const Dataset data = sample(m, InterventionSpec::none(), 100000, 9);
    CHECK(data.rows.col(0).mean() == doctest::Approx(50.0).epsilon(0.01));
    // F = A/2 + N(10,.): 25 + 10
    CHECK(data.rows.col(1).mean() == doctest::Approx(35.0).epsilon(0.01));
    // H = (100 - A^2)/100 + F/2 + N(40,.): -100/3 + 1 + 17.5 + 40
    const double h_mean = (100.0 - 10000.0 / 3.0) / 100.0 + 17.5 + 40.0;
    CHECK(data.rows.col(2).mean() == doctest::Approx(h_mean).epsilon(0.02));
  }
}

TEST_CASE("a fixed intervention pins its column exactly") {
  const StructuralModel m = build_model(ModelName::Student);
  const int M = m.index_of("M");
  const Dataset data = sample(m, InterventionSpec::fix(M, 10.0), 4, 5);
  for (int r = 0; r < 4; ++r) CHECK(data.rows(r, M) == 10.0);
}

TEST_CASE("intervening shifts downstream variables") {
  const StructuralModel m = build_model(ModelName::Student);
  const int M = m.index_of("M"), T = m.index_of("T");
  const Dataset obs = sample(m, InterventionSpec::none(), 20000, 6);
  const Dataset shifted = sample(m, InterventionSpec::fix(M, 15.0), 20000, 6);
  // T reads M with coefficient 0.6 > 0
  CHECK(shifted.rows.col(T).mean() > obs.rows.col(T).mean() + 2.0);
}

TEST_CASE("mutilation removes exactly the incoming edges of targets") {
  SUBCASE("observational graph is the base graph") {
    const StructuralModel m = build_model(ModelName::Hiring);
    const Eigen::MatrixXi adj = mutilate(m, InterventionSpec::none());
    CHECK(adj.sum() == 7);
    CHECK(adj.diagonal().sum() == 0);
    CHECK(adj(m.index_of("Sk"), m.index_of("D")) == 1);
  }

  SUBCASE("do(Q) cuts Sc->Q but keeps Q's outgoing edges") {
    const StructuralModel m = build_model(ModelName::Student);
    const int Sc = m.index_of("Sc"), Q = m.index_of("Q");
    const Eigen::MatrixXi adj = mutilate(m, InterventionSpec::fix(Q, 1.0));
    CHECK(adj.col(Q).sum() == 0);
    CHECK(adj(Sc, Q) == 0);
    CHECK(adj(Q, m.index_of("C")) == 1);
    CHECK(adj(Q, m.index_of("T")) == 1);
    CHECK(adj.sum() == 6);
  }

  SUBCASE("two targets clear two columns") {
    const StructuralModel m = build_model(ModelName::Student);
    const int C = m.index_of("C"), T = m.index_of("T");
    InterventionSpec spec = InterventionSpec::fix(C, 3.0);
    spec.and_fix(T, 6.0);
    const Eigen::MatrixXi adj = mutilate(m, spec);
    CHECK(adj.col(C).sum() == 0);
    CHECK(adj.col(T).sum() == 0);
    CHECK(adj.sum() == 3); // Sc->Q, C->S and T->S survive of the 7
  }
}

TEST_CASE("training corpus covers observational plus every target") {
  const StructuralModel m = build_model(ModelName::Student);
  const auto corpus = make_training_corpus(m, 1000, 21);
  REQUIRE(corpus.size() == 5);

  CHECK(corpus[0].train.intervention.observational());
  CHECK(corpus[0].train.rows.rows() == 800);
  CHECK(corpus[0].test.rows.rows() == 200);

  for (std::size_t i = 1; i < corpus.size(); ++i) {
    const auto& spec = corpus[i].train.intervention;
    REQUIRE(spec.assignments.size() == 1);
    CHECK(spec.assignments[0].variable == m.interveneable[i - 1]);
    CHECK(spec.assignments[0].sampled);
  }

  // sampled intervention values vary per row and stay inside the domain
  const Dataset& do_q = corpus[1].train;
  const int Q = m.index_of("Q");
  const auto col = do_q.rows.col(Q);
  CHECK(col.maxCoeff() - col.minCoeff() > 1.0);
  CHECK(col.minCoeff() >= m.variables[Q].domain_low);
  CHECK(col.maxCoeff() <= m.variables[Q].domain_high);
}

TEST_CASE("corpus interventions on discrete variables stay on support") {
  const StructuralModel m = build_model(ModelName::Hiring);
  const auto corpus = make_training_corpus(m, 500, 33);
  REQUIRE(corpus.size() == 5);
  const int E = m.index_of("E");
  // entry order follows interveneable = {I, E, Sk, B}
  const Dataset& do_e = corpus[2].train;
  REQUIRE(do_e.intervention.assignments[0].variable == E);
  for (int r = 0; r < do_e.count(); ++r) {
    const double v = do_e.rows(r, E);
    CHECK(v == static_cast<int>(v));
    CHECK(v >= 0.0);
    CHECK(v <= 6.0);
  }
}

TEST_CASE("intervention specs are validated") {
  const StructuralModel m = build_model(ModelName::Hiring);
  const int Sc = m.index_of("Sc"), W = m.index_of("W");
  CHECK_THROWS_AS(sample(m, InterventionSpec::fix(Sc, 3.5), 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample(m, InterventionSpec::fix(W, 1000.0), 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample(m, InterventionSpec::fix(99, 0.0), 10, 1), std::invalid_argument);
  InterventionSpec twice = InterventionSpec::fix(W, 1.0);
  twice.and_fix(W, 2.0);
  CHECK_THROWS_AS(sample(m, twice, 10, 1), std::invalid_argument);
  CHECK_NOTHROW(sample(m, InterventionSpec::fix(Sc, 3.0), 10, 1));
}

TEST_CASE("labels spell out the targets") {
  const StructuralModel m = build_model(ModelName::Student);
  CHECK(intervention_label(m, InterventionSpec::none()) == "observational");
  CHECK(intervention_label(m, InterventionSpec::draw(m.index_of("Q"))) == "do(Q)");
  InterventionSpec pair = InterventionSpec::fix(m.index_of("C"), 1.0);
  pair.and_fix(m.index_of("T"), 2.0);
  CHECK(intervention_label(m, pair) == "do(C,T)");
}

TEST_CASE("datasets survive a csv round trip") {
  const StructuralModel m = build_model(ModelName::Student);
  const Dataset out = sample(m, InterventionSpec::fix(m.index_of("M"), 9.0), 64, 17);
  const std::string path = temp_path("cfspn_scm_roundtrip.csv");
  write_csv(out, path);
  const Dataset back = read_csv(path);

  REQUIRE(back.rows.rows() == out.rows.rows());
  REQUIRE(back.rows.cols() == out.rows.cols());
  CHECK((back.rows - out.rows).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(back.model_name == out.model_name);
  CHECK(back.seed == out.seed);
  REQUIRE(back.intervention.assignments.size() == 1);
  CHECK(back.intervention.assignments[0].variable == m.index_of("M"));
  CHECK(back.intervention.assignments[0].value == 9.0);
  REQUIRE(back.columns.size() == out.columns.size());
  CHECK(back.columns[5].support == out.columns[5].support);
  CHECK(back.columns[1].domain_low == doctest::Approx(out.columns[1].domain_low));

  // discrete codes survive exactly
  const int S = m.index_of("S");
  for (int r = 0; r < back.count(); ++r) CHECK(back.rows(r, S) == out.rows(r, S));

  std::filesystem::remove(path);
  std::filesystem::remove(path + ".meta.json");
}

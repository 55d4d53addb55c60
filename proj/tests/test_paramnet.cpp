#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cfspn/circuit.hpp"
#include "cfspn/paramnet.hpp"
#include "cfspn/rng.hpp"
#include "cfspn/scm.hpp"
#include "cfspn/tape.hpp"

#include <cmath>
#include <cstring>
#include <vector>

using namespace cfspn::paramnet;
using cfspn::circuit::CircuitGraph;
using cfspn::circuit::LeafFamily;
using cfspn::circuit::NodeType;
using cfspn::circuit::StructureConfig;

namespace {

// Small but mixed-family circuit over the Student variables.
CircuitGraph student_circuit() {
  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  StructureConfig cfg;
  cfg.repetitions = 2;
  cfg.depth = 2;
  cfg.sums_per_region = 2;
  cfg.leaves_per_variable = 2;
  return cfspn::circuit::build_random_structure(model.variables, cfg, 101);
}

NetConfig small_net() {
  NetConfig cfg;
  cfg.hidden1 = 32;
  cfg.hidden2 = 32;
  return cfg;
}

// Checks every parameter-domain invariant the circuit imposes on psi.
void check_psi_valid(const CircuitGraph& c, const Eigen::VectorXd& psi) {
  REQUIRE(psi.size() == c.param_count);
  for (const auto& node : c.nodes) {
    const auto w = psi.segment(node.param_offset, node.param_count);
    switch (node.type) {
      case NodeType::Product:
        break;
      case NodeType::Sum:
        CHECK(w.minCoeff() >= 0.0);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
        break;
      case NodeType::Leaf:
        switch (node.family) {
          case LeafFamily::Normal:
            CHECK(w[1] > 0.0);
            break;
          case LeafFamily::Categorical:
            CHECK(w.minCoeff() >= 0.0);
            CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
            break;
          case LeafFamily::AlphaStable:
            CHECK(w[1] > 0.0);
            CHECK(w[2] >= 0.3);
            CHECK(w[2] <= 2.0);
            CHECK(std::abs(w[3]) <= 1.0);
            break;
        }
        break;
    }
  }
}

} // namespace

TEST_CASE("the transform spec tiles the parameter vector") {
  const CircuitGraph c = student_circuit();
  const TransformSpec spec = make_transform_spec(c);

  CHECK(spec.param_count == c.param_count);
  CHECK(spec.gate_width + spec.leaf_width == c.param_count);
  CHECK(spec.gate_width > 0);
  CHECK(spec.leaf_width > 0);

  // slots cover [0, param_count) exactly once
  std::vector<bool> covered(c.param_count, false);
  for (const auto& slot : spec.slots) {
    for (int i = 0; i < slot.length; ++i) {
      CHECK_FALSE(covered[slot.param_offset + i]);
      covered[slot.param_offset + i] = true;
    }
  }
  for (const bool b : covered) CHECK(b);

  // and each head's raw outputs are claimed contiguously
  int gate_at = 0, leaf_at = 0;
  for (const auto& slot : spec.slots) {
    int& at = slot.head == TransformSpec::Head::Gate ? gate_at : leaf_at;
    CHECK(slot.head_offset == at);
    at += slot.length;
  }
  CHECK(gate_at == spec.gate_width);
  CHECK(leaf_at == spec.leaf_width);
}

TEST_CASE("initialization is deterministic per seed") {
  const CircuitGraph c = student_circuit();
  const ParamNet a(small_net(), c, 7);
  const ParamNet b(small_net(), c, 7);
  REQUIRE(a.theta().size() == b.theta().size());
  CHECK(std::memcmp(a.theta().data(), b.theta().data(),
                    sizeof(double) * a.theta().size()) == 0);

  const ParamNet other(small_net(), c, 8);
  CHECK((a.theta() - other.theta()).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("predictions satisfy every circuit parameter invariant") {
  const CircuitGraph c = student_circuit();
  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);

  // all dataset adjacencies: observational plus one per intervenable
  std::vector<Eigen::MatrixXi> adjacencies;
  adjacencies.push_back(cfspn::scm::mutilate(model, cfspn::scm::InterventionSpec::none()));
  for (const int v : model.interveneable) {
    adjacencies.push_back(cfspn::scm::mutilate(
        model, cfspn::scm::InterventionSpec::draw(v)));
  }

  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const ParamNet net(small_net(), c, seed);
    for (const auto& adj : adjacencies) {
      const Eigen::VectorXd psi = net.predict_plain(adj);
      check_psi_valid(c, psi);
      // the circuit itself accepts the vector
      const Eigen::VectorXd origin = Eigen::VectorXd::Zero(c.num_variables);
      const std::complex<double> at_zero = cfspn::circuit::evaluate_cf(c, psi, origin);
      CHECK(at_zero.real() == 1.0);
      CHECK(at_zero.imag() == 0.0);
    }
  }
}

TEST_CASE("a zeroed trunk rests at the designed parameter point") {
  const CircuitGraph c = student_circuit();
  const NetConfig cfg = small_net();
  ParamNet net(cfg, c, 3);
  // W1 leads the flat layout; zeroing it (biases start at zero) makes
  // both hidden layers zero, so the heads emit exactly their biases.
  net.theta().segment(0, cfg.hidden1 * net.input_dim()).setZero();

  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Eigen::MatrixXi adj =
      cfspn::scm::mutilate(model, cfspn::scm::InterventionSpec::none());
  const Eigen::VectorXd psi = net.predict_plain(adj);

  for (const auto& node : c.nodes) {
    const auto w = psi.segment(node.param_offset, node.param_count);
    switch (node.type) {
      case NodeType::Product:
        break;
      case NodeType::Sum: {
        const double uniform = 1.0 / node.param_count;
        for (int i = 0; i < node.param_count; ++i)
          CHECK(std::abs(w[i] - uniform) < 1e-6);
        break;
      }
      case NodeType::Leaf:
        switch (node.family) {
          case LeafFamily::Normal:
            CHECK(w[0] == 0.0);                                     // mu
            CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-12));     // sigma
            break;
          case LeafFamily::Categorical:
            for (int i = 0; i < node.param_count; ++i)
              CHECK(std::abs(w[i] - 1.0 / node.param_count) < 1e-6);
            break;
          case LeafFamily::AlphaStable:
            CHECK(w[0] == 0.0);                                     // mu
            CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-12));     // c
            CHECK(w[2] == doctest::Approx(1.8).epsilon(1e-12));     // alpha
            CHECK(w[3] == 0.0);                                     // beta
            break;
        }
        break;
    }
  }
}

TEST_CASE("prediction is a pure function of the adjacency bits") {
  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::CausalHealth);
  StructureConfig ccfg;
  ccfg.repetitions = 2;
  ccfg.depth = 2;
  ccfg.sums_per_region = 2;
  ccfg.leaves_per_variable = 2;
  const CircuitGraph c =
      cfspn::circuit::build_random_structure(model.variables, ccfg, 55);
  const ParamNet net(small_net(), c, 9);

  const Eigen::MatrixXi do_f =
      cfspn::scm::mutilate(model, cfspn::scm::InterventionSpec::draw(model.index_of("F")));
  const Eigen::MatrixXi do_m =
      cfspn::scm::mutilate(model, cfspn::scm::InterventionSpec::draw(model.index_of("M")));

  const Eigen::VectorXd psi_f1 = net.predict_plain(do_f);
  const Eigen::VectorXd psi_f2 = net.predict_plain(do_f);
  CHECK(std::memcmp(psi_f1.data(), psi_f2.data(), sizeof(double) * psi_f1.size()) == 0);

  const Eigen::VectorXd psi_m = net.predict_plain(do_m);
  CHECK((psi_f1 - psi_m).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("the taped forward matches the plain forward") {
  const CircuitGraph c = student_circuit();
  const ParamNet net(small_net(), c, 21);
  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Eigen::MatrixXi adj =
      cfspn::scm::mutilate(model, cfspn::scm::InterventionSpec::draw(model.index_of("Q")));

  const Eigen::VectorXd plain = net.predict_plain(adj);

  cfspn::ad::Tape tape;
  const ParamNet::TapeForward fwd = net.predict_tape(tape, adj);
  REQUIRE(fwd.slot_values.size() == net.transform().slots.size());

  Eigen::VectorXd taped(c.param_count);
  for (std::size_t s = 0; s < fwd.slot_values.size(); ++s) {
    const auto& slot = net.transform().slots[s];
    const auto v = tape.value(fwd.slot_values[s]);
    REQUIRE(v.rows() == slot.length);
    for (int i = 0; i < slot.length; ++i) taped[slot.param_offset + i] = v(i, 0);
  }
  CHECK((taped - plain).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("gradients flow from a slot loss back into theta") {
  const CircuitGraph c = student_circuit();
  ParamNet net(small_net(), c, 33);
  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  const Eigen::MatrixXi adj =
      cfspn::scm::mutilate(model, cfspn::scm::InterventionSpec::none());

  // squared norm of psi, computable by both forwards
  auto loss_plain = [&](const ParamNet& n) { return n.predict_plain(adj).squaredNorm(); };

  cfspn::ad::Tape tape;
  const ParamNet::TapeForward fwd = net.predict_tape(tape, adj);
  cfspn::ad::Handle loss = tape.constant(0.0);
  for (const cfspn::ad::Handle v : fwd.slot_values) {
    loss = tape.add(loss, tape.sum(tape.mul(v, v)));
  }
  tape.backward(loss);
  const Eigen::VectorXd grad = net.collect_gradient(tape, fwd);
  REQUIRE(grad.size() == net.theta().size());
  CHECK(tape.value_scalar(loss) == doctest::Approx(loss_plain(net)).epsilon(1e-12));
  CHECK(grad.lpNorm<Eigen::Infinity>() > 0.0);

  // spot-check against central differences on a few coordinates
  cfspn::rng::Engine eng(5);
  const double h = 5e-6;
  for (int probe = 0; probe < 8; ++probe) {
    const int i = eng.uniform_int(0, static_cast<int>(net.theta().size()) - 1);
    ParamNet plus = net, minus = net;
    plus.theta()[i] += h;
    minus.theta()[i] -= h;
    const double numeric = (loss_plain(plus) - loss_plain(minus)) / (2.0 * h);
    const double denom = std::max({1e-6, std::abs(numeric), std::abs(grad[i])});
    CHECK(std::abs(grad[i] - numeric) / denom < 1e-4);
  }
}

TEST_CASE("checkpoints survive a json round trip") {
  const CircuitGraph c = student_circuit();
  ParamNet net(small_net(), c, 77);
  net.theta()[3] = 0.123456789;

  const ParamNet back = ParamNet::from_json(net.to_json(), c);
  REQUIRE(back.theta().size() == net.theta().size());
  CHECK(std::memcmp(back.theta().data(), net.theta().data(),
                    sizeof(double) * net.theta().size()) == 0);
  CHECK(back.circuit_hash() == net.circuit_hash());

  // a checkpoint refuses to load against a different structure
  const auto model = cfspn::scm::build_model(cfspn::scm::ModelName::Student);
  StructureConfig other;
  other.repetitions = 3;
  other.depth = 1;
  other.sums_per_region = 2;
  other.leaves_per_variable = 2;
  const CircuitGraph different =
      cfspn::circuit::build_random_structure(model.variables, other, 500);
  CHECK_THROWS_AS(ParamNet::from_json(net.to_json(), different), std::runtime_error);
}

TEST_CASE("shape errors are rejected") {
  const CircuitGraph c = student_circuit();
  const ParamNet net(small_net(), c, 1);

  const Eigen::MatrixXi wrong = Eigen::MatrixXi::Zero(5, 5);
  CHECK_THROWS_AS(net.predict_plain(wrong), std::invalid_argument);
  const Eigen::MatrixXi rect = Eigen::MatrixXi::Zero(6, 5);
  CHECK_THROWS_AS(net.predict_plain(rect), std::invalid_argument);

  NetConfig bad;
  bad.hidden1 = 0;
  CHECK_THROWS_AS(ParamNet(bad, c, 1), std::invalid_argument);
}

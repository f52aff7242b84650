#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rdt/tree.hpp"

using namespace rdt;
using test::blank_policy;
using test::chain_topology;
using test::depth1_topology;
using test::single_leaf_topology;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("gate probability: zero weights give one half") {
  InnerParams p;
  p.w = {0.0, 0.0};
  p.b = 0.0;
  CHECK(gate_probability(p, {3.0, -1.5}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gate probability: orthogonal input") {
  InnerParams p;
  p.w = {1.0, 0.0};
  p.b = 0.0;
  CHECK(gate_probability(p, {0.0, 5.0}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gate probability: direct sigmoid evaluation") {
  InnerParams p;
  p.w = {2.0};
  p.b = -1.0;
  const double expected = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(gate_probability(p, {1.0}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(gate_probability(p, {1.0}) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
}

TEST_CASE("gate probability: dimension mismatch throws") {
  InnerParams p;
  p.w = {1.0, 2.0};
  CHECK_THROWS_AS(gate_probability(p, {1.0}), StructuralError);
}

TEST_CASE("path probabilities: single leaf is the empty product") {
  TreePolicy policy = blank_policy(single_leaf_topology(), 2, 2, 0);
  const Vec probs = path_probabilities(policy, {0.3, -0.7});
  REQUIRE(probs.size() == 1);
  CHECK(probs[0] == 1.0);
}

TEST_CASE("path probabilities: symmetric split") {
  TreePolicy policy = blank_policy(depth1_topology(), 2, 2, 0);
  const Vec probs = path_probabilities(policy, {1.0, 1.0});
  REQUIRE(probs.size() == 2);
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("path probabilities: depth-2 chain hand product") {
  // Root gate 0.8; right child's gate 0.25: leaves (1, 3, 4) get
  // (0.2, 0.8*0.75, 0.8*0.25).
  TreePolicy policy = blank_policy(chain_topology(), 1, 2, 0);
  policy.inner[0].b = logit(0.8);
  policy.inner[2].b = logit(0.25);
  const Vec probs = path_probabilities(policy, {0.0});
  REQUIRE(probs.size() == 3);
  CHECK(probs[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(probs[2] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("leaf action distribution examples") {
  LeafParams leaf;
  leaf.theta_a = {0.0, 0.0};
  Vec dist = leaf_action_distribution(leaf);
  CHECK(dist[0] == doctest::Approx(0.5).epsilon(1e-12));

  leaf.theta_a = {2.5, 2.5, 2.5};
  dist = leaf_action_distribution(leaf);
  for (double v : dist) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  leaf.theta_a = {std::log(3.0), 0.0};
  dist = leaf_action_distribution(leaf);
  CHECK(dist[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(dist[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("leaf history variants") {
  const int m = 3;
  LeafParams leaf;
  leaf.theta_h.assign(m, 0.0);

  SUBCASE("fixed tanh of zero is zero") {
    const Vec h = leaf_history(leaf, Recurrence::FixedTanh, {}, {});
    for (double v : h) CHECK(v == 0.0);
  }
  SUBCASE("matrix identity recurrence") {
    leaf.theta_rm = Mat(m, m);
    for (int i = 0; i < m; ++i) leaf.theta_rm.at(i, i) = 1.0;
    const Vec h_prev(m, 0.5);
    const Vec h = leaf_history(leaf, Recurrence::MatrixHist, h_prev, {});
    for (double v : h) CHECK(v == doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
  }
  SUBCASE("rnn observation row") {
    leaf.theta_rm = Mat(m, m);
    leaf.theta_f = Mat(m, 2);
    leaf.theta_f.at(0, 0) = 1.0;
    const Vec h = leaf_history(leaf, Recurrence::Rnn, Vec(m, 0.0), {2.0, -1.0});
    CHECK(h[0] == doctest::Approx(std::tanh(2.0)).epsilon(1e-12));
    CHECK(h[0] == doctest::Approx(0.9640275800758169).epsilon(1e-9));
    CHECK(h[1] == 0.0);
  }
}

TEST_CASE("forward step: single leaf ignores the observation") {
  TreePolicy policy = blank_policy(single_leaf_topology(), 2, 2, 1);
  policy.leaf[0].theta_a = {std::log(3.0), 0.0};
  const StepOutput a = forward_step(policy, {0.0}, {5.0, -2.0});
  const StepOutput b = forward_step(policy, {0.0}, {-1.0, 0.3});
  CHECK(a.action_dist[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(a.action_dist[0] == b.action_dist[0]);
}

TEST_CASE("forward step: symmetric two-leaf mixture") {
  TreePolicy policy = blank_policy(depth1_topology(), 1, 2, 0);
  policy.leaf[1].theta_a = {30.0, 0.0};  // ~[1, 0]
  policy.leaf[2].theta_a = {0.0, 30.0};  // ~[0, 1]
  const StepOutput out = forward_step(policy, {}, {0.0});
  CHECK(out.action_dist[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(out.action_dist[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("forward step: hand-computed asymmetric mixture") {
  // Path probs (0.2, 0.8); leaf dists (0.75, 0.25) and (0.25, 0.75).
  TreePolicy policy = blank_policy(depth1_topology(), 1, 2, 0);
  policy.inner[0].b = logit(0.8);
  policy.leaf[1].theta_a = {std::log(3.0), 0.0};
  policy.leaf[2].theta_a = {0.0, std::log(3.0)};
  const StepOutput out = forward_step(policy, {}, {0.0});
  CHECK(out.action_dist[0] == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(out.action_dist[1] == doctest::Approx(0.65).epsilon(1e-12));
}

TEST_CASE("forward step: non-finite observation rejected") {
  TreePolicy policy = blank_policy(single_leaf_topology(), 1, 2, 0);
  CHECK_THROWS_AS(forward_step(policy, {}, {std::nan("")}), DataError);
}

TEST_CASE("hard forward step") {
  TreePolicy policy = blank_policy(depth1_topology(), 1, 2, 0);
  policy.leaf[1].theta_a = {1.0, 0.0};
  policy.leaf[2].theta_a = {0.0, 1.0};

  SUBCASE("dominant path wins") {
    policy.inner[0].b = logit(0.1);  // right prob 0.1 -> leaf 1 dominates
    const HardStepOutput out = hard_forward_step(policy, {}, {0.0});
    CHECK(out.leaf_id == 1);
    CHECK(out.action_dist[0] > out.action_dist[1]);
  }
  SUBCASE("exact tie takes the lowest id") {
    policy.inner[0].b = 0.0;
    const HardStepOutput out = hard_forward_step(policy, {}, {0.0});
    CHECK(out.leaf_id == 1);
  }
  SUBCASE("single leaf always chosen") {
    TreePolicy mono = blank_policy(single_leaf_topology(), 1, 2, 0);
    CHECK(hard_forward_step(mono, {}, {0.4}).leaf_id == 0);
  }
}

TEST_CASE("rollout basics") {
  SUBCASE("length-one trajectory") {
    TreePolicy policy = blank_policy(single_leaf_topology(), 1, 2, 2);
    Trajectory traj;
    traj.observations = {{0.5}};
    traj.actions = {0};
    const auto steps = rollout(policy, traj);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].h_next.size() == 2);
  }
  SUBCASE("empty trajectory rejected") {
    TreePolicy policy = blank_policy(single_leaf_topology(), 1, 2, 0);
    CHECK_THROWS_AS(rollout(policy, Trajectory{}), DataError);
  }
  SUBCASE("fixed-tanh history is input independent after the first step") {
    TreePolicy policy = blank_policy(single_leaf_topology(), 1, 2, 2);
    policy.leaf[0].theta_h = {0.3, -0.8};
    Trajectory traj;
    traj.observations = {{1.0}, {2.0}, {3.0}};
    traj.actions = {0, 0, 0};
    const auto steps = rollout(policy, traj);
    const Vec expected = {std::tanh(0.3), std::tanh(-0.8)};
    for (size_t t = 0; t < steps.size(); ++t) {
      CHECK(steps[t].h_next[0] == doctest::Approx(expected[0]).epsilon(1e-12));
      CHECK(steps[t].h_next[1] == doctest::Approx(expected[1]).epsilon(1e-12));
    }
  }
}

TEST_CASE("rollout: manual two-step unroll matches") {
  // Depth-1 tree, M=1, VecHist recurrence; recompute everything by hand.
  TreePolicy policy = blank_policy(depth1_topology(), 1, 2, 1, Recurrence::VecHist);
  policy.inner[0].w = {0.4, 1.1};  // [h, z]
  policy.inner[0].b = -0.2;
  policy.leaf[1].theta_a = {0.6, -0.3};
  policy.leaf[1].theta_h = {0.25};
  policy.leaf[1].theta_r = {0.5};
  policy.leaf[1].theta_z = {0.15};
  policy.leaf[2].theta_a = {-0.1, 0.9};
  policy.leaf[2].theta_h = {-0.4};
  policy.leaf[2].theta_r = {-0.9};
  policy.leaf[2].theta_z = {-0.3};

  Trajectory traj;
  traj.observations = {{0.7}, {-0.2}};
  traj.actions = {1, 0};
  const auto steps = rollout(policy, traj);

  // Step 1 by hand.
  const double g1 = 1.0 / (1.0 + std::exp(-(0.4 * 0.0 + 1.1 * 0.7 - 0.2)));
  const double p_left1 = 1.0 - g1;
  auto softmax2 = [](double a, double b) {
    const double ea = std::exp(a), eb = std::exp(b);
    return std::pair<double, double>{ea / (ea + eb), eb / (ea + eb)};
  };
  const auto [l1a, l1b] = softmax2(0.6, -0.3);
  const auto [l2a, l2b] = softmax2(-0.1, 0.9);
  CHECK(steps[0].action_dist[0] == doctest::Approx(p_left1 * l1a + g1 * l2a).epsilon(1e-12));
  CHECK(steps[0].action_dist[1] == doctest::Approx(p_left1 * l1b + g1 * l2b).epsilon(1e-12));
  const double h1_leaf1 = std::tanh(0.25 + 0.5 * 0.0);
  const double h1_leaf2 = std::tanh(-0.4 + -0.9 * 0.0);
  const double h2 = p_left1 * h1_leaf1 + g1 * h1_leaf2;
  CHECK(steps[0].h_next[0] == doctest::Approx(h2).epsilon(1e-12));
  const double z2 = p_left1 * std::tanh(0.15) + g1 * std::tanh(-0.3);
  CHECK(steps[0].z_pred[0] == doctest::Approx(z2).epsilon(1e-12));

  // Step 2 by hand, feeding h2.
  const double g2 = 1.0 / (1.0 + std::exp(-(0.4 * h2 + 1.1 * -0.2 - 0.2)));
  const double p_left2 = 1.0 - g2;
  CHECK(steps[1].action_dist[0] == doctest::Approx(p_left2 * l1a + g2 * l2a).epsilon(1e-12));
  const double h3 = p_left2 * std::tanh(0.25 + 0.5 * h2) + g2 * std::tanh(-0.4 + -0.9 * h2);
  CHECK(steps[1].h_next[0] == doctest::Approx(h3).epsilon(1e-12));
}

TEST_CASE("property: path probabilities sum to one on random trees") {
  Rng rng(91);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = rng.uniform_int(4);
    TreePolicy policy = test::random_policy(rng, 1 + rng.uniform_int(5), 2, m,
                                            Recurrence::FixedTanh, 5, 2 + rng.uniform_int(20));
    for (int rep = 0; rep < 20; ++rep) {
      Vec x = rng.normal_vec(policy.input_dim(), 1.0);
      const Vec probs = path_probabilities(policy, x);
      double sum = 0.0;
      for (double p : probs) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("property: action distributions are simplices") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 2 + rng.uniform_int(3);
    TreePolicy policy =
        test::random_policy(rng, 3, k, 2, Recurrence::MatrixHist, 4, 2 + rng.uniform_int(8));
    const StepOutput out = forward_step(policy, rng.normal_vec(2, 0.5), rng.normal_vec(3, 1.0));
    double sum = 0.0;
    for (double v : out.action_dist) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
    for (double v : out.h_next) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("property: saturated gates make soft and hard rollouts agree") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    TreePolicy policy = test::random_policy(rng, 2, 2, 1, Recurrence::FixedTanh, 3, 5);
    // Zero bias and a huge weight on one observation dimension; observations
    // are kept away from zero, so every gate is saturated on every input.
    for (int id : policy.topo.inner_ids()) {
      for (double& w : policy.inner[id].w) w = 0.0;
      policy.inner[id].w[1] = 50.0 + 10.0 * rng.uniform01();
      policy.inner[id].b = 0.0;
    }
    Trajectory traj;
    for (int t = 0; t < 4; ++t) {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      traj.observations.push_back({sign * (0.5 + rng.uniform01()), rng.normal()});
      traj.actions.push_back(0);
    }
    const auto soft = rollout(policy, traj, RolloutMode::Soft);
    const auto hard = rollout(policy, traj, RolloutMode::Hard);
    for (size_t t = 0; t < soft.size(); ++t) {
      for (double p : soft[t].leaf_path_probs) {
        CHECK((p <= 0.001 || p >= 0.999));  // the premise: saturated routing
      }
      for (int k = 0; k < 2; ++k) {
        CHECK(std::fabs(soft[t].action_dist[k] - hard[t].action_dist[k]) <= 1e-3);
      }
    }
  }
}

TEST_CASE("property: forward step is deterministic") {
  Rng rng(5);
  TreePolicy policy = test::random_policy(rng, 4, 3, 3, Recurrence::Rnn, 4, 6);
  const Vec h = rng.normal_vec(3, 0.3);
  const Vec z = rng.normal_vec(4, 1.0);
  const StepOutput a = forward_step(policy, h, z);
  const StepOutput b = forward_step(policy, h, z);
  CHECK(a.action_dist == b.action_dist);
  CHECK(a.h_next == b.h_next);
  CHECK(a.z_pred == b.z_pred);
  CHECK(a.leaf_path_probs == b.leaf_path_probs);
}

TEST_CASE("single-leaf fixed-tanh rollout is independent of the first observation") {
  TreePolicy policy = blank_policy(single_leaf_topology(), 1, 2, 2);
  policy.leaf[0].theta_h = {0.4, 0.2};
  policy.leaf[0].theta_a = {0.3, -0.3};
  Trajectory a, b;
  a.observations = {{10.0}, {0.5}, {0.1}};
  a.actions = {0, 0, 0};
  b.observations = {{-10.0}, {0.5}, {0.1}};
  b.actions = {0, 0, 0};
  const auto ra = rollout(policy, a);
  const auto rb = rollout(policy, b);
  for (size_t t = 1; t < ra.size(); ++t) {
    CHECK(ra[t].action_dist == rb[t].action_dist);
    CHECK(ra[t].h_next == rb[t].h_next);
  }
}

TEST_CASE("topology validation rejects malformed trees") {
  TreeTopology topo;
  topo.nodes = {TreeNode{1, -1, 0}};
  CHECK_THROWS_AS(topo.validate(), StructuralError);

  TreeTopology two_parents;
  two_parents.nodes = {TreeNode{1, 2, 0}, TreeNode{2, 3, 1}, TreeNode{-1, -1, 1},
                       TreeNode{-1, -1, 2}};
  CHECK_THROWS_AS(two_parents.validate(), StructuralError);

  CHECK_NOTHROW(complete_tree(3).validate());
}

TEST_CASE("soft-AND gate forward matches the factored product") {
  TreePolicy policy = blank_policy(depth1_topology(), 2, 2, 1, Recurrence::FixedTanh,
                                   GatingKind::SoftAnd);
  policy.inner[0].w = {0.3, 1.0, -0.5};
  policy.inner[0].b = 0.2;
  policy.inner[0].axis_b = {0.1, -0.2};
  const double expected = sigmoid(0.3 * 0.4 + 0.2) * sigmoid(0.7 * 1.0 + 0.1) *
                          sigmoid(-1.1 * -0.5 + -0.2);
  const Vec probs = path_probabilities(policy, {0.4, 0.7, -1.1});
  CHECK(probs[1] == doctest::Approx(expected).epsilon(1e-12));
}

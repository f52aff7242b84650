#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rdt/adam.hpp"
#include "rdt/train.hpp"

using namespace rdt;

namespace {

// Static one-step dataset labelled by a rule on the observation.
Dataset labelled_dataset(Rng& rng, int n, int obs_dim, const std::function<int(const Vec&)>& rule) {
  Dataset data;
  for (int i = 0; i < n; ++i) {
    Trajectory traj;
    traj.id = i;
    traj.observations.push_back(rng.normal_vec(obs_dim, 1.0));
    traj.actions.push_back(rule(traj.observations[0]));
    data.push_back(std::move(traj));
  }
  return data;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Vec params = {1.0, -2.0, 0.5};
  const Vec before = params;
  AdamState state(params.size());
  for (int i = 0; i < 5; ++i) adam_step(params, Vec(3, 0.0), state, 0.01);
  CHECK(params == before);
}

TEST_CASE("adam: first-step magnitude is bounded by the learning rate") {
  Vec params = {0.0, 0.0};
  AdamState state(2);
  adam_step(params, {3.5, -0.004}, state, 0.001);
  for (double p : params) CHECK(std::fabs(p) <= 0.001 * (1.0 + 1e-8) + 1e-15);
  CHECK(params[0] < 0.0);  // moves against the gradient
  CHECK(params[1] > 0.0);
}

TEST_CASE("adam: constant gradient descends monotonically") {
  Vec params = {1.0};
  AdamState state(1);
  double prev = params[0];
  for (int i = 0; i < 10; ++i) {
    adam_step(params, {2.0}, state, 0.01);
    CHECK(params[0] < prev);
    prev = params[0];
  }
}

TEST_CASE("training a constant-target dataset collapses to the marginal") {
  Rng rng(100);
  const Dataset all = labelled_dataset(rng, 250, 2, [](const Vec&) { return 0; });
  const Dataset train(all.begin(), all.end() - 50);
  const Dataset val(all.end() - 50, all.end());

  TreePolicy policy = test::blank_policy(test::single_leaf_topology(), 2, 2, 0);
  policy.norm = compute_normalization(train);
  TrainingConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 50;
  cfg.lambda = 0.0;
  cfg.seed = 1;
  const TrainResult result = train_fixed_topology(policy, train, val, cfg);
  const Vec dist = leaf_action_distribution(result.policy.leaf[0]);
  CHECK(dist[0] >= 0.99);
}

TEST_CASE("training a linearly separable dataset with a depth-1 tree") {
  Rng rng(200);
  const auto rule = [](const Vec& z) { return z[0] > 0.0 ? 1 : 0; };
  const Dataset all = labelled_dataset(rng, 500, 2, rule);
  const Dataset train(all.begin(), all.end() - 100);
  const Dataset val(all.end() - 100, all.end());

  TreePolicy policy = test::blank_policy(test::depth1_topology(), 2, 2, 0);
  Rng init_rng(5);
  test::randomize_params(policy, init_rng, 0.1);
  policy.norm = compute_normalization(train);
  TrainingConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.seed = 2;
  const TrainResult result = train_fixed_topology(policy, train, val, cfg);

  size_t hits = 0;
  for (const auto& traj : val) {
    const HardStepOutput out = hard_forward_step(result.policy, {}, traj.observations[0]);
    const int pred = out.action_dist[1] > out.action_dist[0] ? 1 : 0;
    hits += pred == traj.actions[0] ? 1 : 0;
  }
  CHECK(static_cast<double>(hits) / val.size() >= 0.98);
}

TEST_CASE("early stopping returns the best-validation snapshot") {
  Rng rng(300);
  const auto rule = [](const Vec& z) { return z[0] + 0.3 * z[1] > 0.2 ? 1 : 0; };
  const Dataset all = labelled_dataset(rng, 300, 2, rule);
  const Dataset train(all.begin(), all.end() - 60);
  const Dataset val(all.end() - 60, all.end());

  TreePolicy policy = test::blank_policy(test::depth1_topology(), 2, 2, 0);
  Rng init_rng(7);
  test::randomize_params(policy, init_rng, 0.1);
  policy.norm = compute_normalization(train);
  TrainingConfig cfg;
  cfg.seed = 3;
  const TrainResult result = train_fixed_topology(policy, train, val, cfg);
  CHECK(result.best_val == doctest::Approx(validation_metric(result.policy, val)).epsilon(1e-12));
  for (const auto& row : result.history) {
    CHECK(result.best_val >= row.val_metric - 1e-12);
  }
}

TEST_CASE("subtree scope freezes everything outside the subtree") {
  Rng rng(400);
  TreePolicy policy = test::random_policy(rng, 2, 2, 1, Recurrence::FixedTanh, 2, 4, GatingKind::Dense, 0.3);
  policy.norm.mean.assign(2, 0.0);
  policy.norm.stddev.assign(2, 1.0);
  Dataset train, val;
  for (int i = 0; i < 80; ++i) train.push_back(test::random_trajectory(rng, 2, 2, 3));
  for (int i = 0; i < 20; ++i) val.push_back(test::random_trajectory(rng, 2, 2, 3));

  // Pick an inner node other than the root as the scope.
  int scope_root = -1;
  for (int id : policy.topo.inner_ids()) {
    if (id != policy.topo.root) scope_root = id;
  }
  if (scope_root < 0) scope_root = policy.topo.leaf_ids().back();

  TrainingConfig cfg;
  cfg.seed = 4;
  cfg.max_epochs = 3;
  const TrainResult result = train_fixed_topology(policy, train, val, cfg, TrainScope::Subtree, scope_root);

  const auto spans = node_param_spans(policy);
  const auto inside = policy.topo.subtree_ids(scope_root);
  const Vec before = flatten_params(policy);
  const Vec after = flatten_params(result.policy);
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    const bool in_scope = std::find(inside.begin(), inside.end(), id) != inside.end();
    for (size_t i = spans[id].first; i < spans[id].second; ++i) {
      if (!in_scope) CHECK(after[i] == before[i]);
    }
  }
}

TEST_CASE("training is deterministic under a fixed seed") {
  Rng rng(500);
  const auto rule = [](const Vec& z) { return z[0] > 0.4 ? 1 : 0; };
  const Dataset all = labelled_dataset(rng, 200, 2, rule);
  const Dataset train(all.begin(), all.end() - 40);
  const Dataset val(all.end() - 40, all.end());

  TreePolicy policy = test::blank_policy(test::depth1_topology(), 2, 2, 1);
  Rng init_rng(9);
  test::randomize_params(policy, init_rng, 0.1);
  policy.norm = compute_normalization(train);
  TrainingConfig cfg;
  cfg.seed = 77;
  cfg.max_epochs = 5;
  const TrainResult a = train_fixed_topology(policy, train, val, cfg);
  const TrainResult b = train_fixed_topology(policy, train, val, cfg);
  CHECK(flatten_params(a.policy) == flatten_params(b.policy));
  CHECK(a.best_val == b.best_val);
}

TEST_CASE("empty datasets are rejected") {
  TreePolicy policy = test::blank_policy(test::single_leaf_topology(), 1, 2, 0);
  TrainingConfig cfg;
  CHECK_THROWS_AS(train_fixed_topology(policy, {}, {}, cfg), DataError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rdt/grad.hpp"

using namespace rdt;

namespace {

TrainingConfig full_config() {
  TrainingConfig cfg;
  cfg.delta1 = 0.05;
  cfg.delta2 = 0.02;
  cfg.lambda = 0.1;
  cfg.l1_weight = 0.01;
  return cfg;
}

Dataset small_batch(Rng& rng, int obs_dim, int action_count, int n, int len) {
  Dataset batch;
  for (int i = 0; i < n; ++i) batch.push_back(test::random_trajectory(rng, obs_dim, action_count, len));
  return batch;
}

}  // namespace

TEST_CASE("gradient of the L1 term is the sign subgradient") {
  TreePolicy policy = test::blank_policy(test::depth1_topology(), 2, 2, 0);
  policy.inner[0].w = {1.0, -2.0};
  TrainingConfig cfg;
  cfg.delta1 = cfg.delta2 = cfg.lambda = 0.0;
  cfg.l1_weight = 0.5;
  // Constant leaves: the cross-entropy gradient on w vanishes only through
  // equal leaf outputs, so isolate L1 by identical leaves.
  Trajectory traj;
  traj.observations = {{0.3, -0.4}};
  traj.actions = {0};
  const GradientResult out = trajectory_gradient(policy, traj, cfg);
  CHECK(out.grads.inner[0].w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.grads.inner[0].w[1] == doctest::Approx(-0.5).epsilon(1e-12));

  // sign(0) = 0.
  policy.inner[0].w = {0.0, 0.0};
  const GradientResult zero = trajectory_gradient(policy, traj, cfg);
  CHECK(zero.grads.inner[0].w[0] == 0.0);
  CHECK(zero.grads.inner[0].w[1] == 0.0);
}

TEST_CASE("zero learning signal when every leaf is exactly right") {
  // Logit gap large enough that softmax underflows to exactly (1, 0).
  TreePolicy policy = test::blank_policy(test::depth1_topology(), 1, 2, 0);
  policy.leaf[1].theta_a = {500.0, -500.0};
  policy.leaf[2].theta_a = {500.0, -500.0};
  TrainingConfig cfg;
  cfg.delta1 = cfg.delta2 = cfg.lambda = cfg.l1_weight = 0.0;
  Trajectory traj;
  traj.observations = {{0.1}};
  traj.actions = {0};
  const GradientResult out = trajectory_gradient(policy, traj, cfg);
  for (int leaf : {1, 2}) {
    for (double g : out.grads.leaf[leaf].theta_a) CHECK(g == 0.0);
  }
}

TEST_CASE("analytic gradient matches finite differences on a depth-2 policy") {
  Rng rng(1234);
  TreePolicy policy = test::random_policy(rng, 3, 2, 2, Recurrence::FixedTanh, 2, 4);
  const Dataset batch = small_batch(rng, 3, 2, 3, 3);
  const TrainingConfig cfg = full_config();
  const GradientResult analytic = compute_gradients_serial(policy, batch, cfg);
  const Vec numeric = test::finite_difference_gradient(policy, batch, cfg);
  const Vec flat = flatten_grads(policy, analytic.grads);
  CHECK(test::grad_error(flat, numeric) <= 1e-4);
}

TEST_CASE("gradient check across every recurrence variant") {
  const Recurrence variants[] = {Recurrence::FixedSoftmax, Recurrence::FixedTanh,
                                 Recurrence::VecHist,      Recurrence::MatrixObs,
                                 Recurrence::RnnVecHist,   Recurrence::MatrixHist,
                                 Recurrence::Rnn};
  Rng rng(777);
  for (const Recurrence rec : variants) {
    CAPTURE(static_cast<int>(rec));
    const int obs_dim = 1 + rng.uniform_int(4);
    const int m = 1 + rng.uniform_int(3);
    TreePolicy policy = test::random_policy(rng, obs_dim, 2 + rng.uniform_int(2), m, rec, 3,
                                            2 + rng.uniform_int(4));
    const Dataset batch = small_batch(rng, obs_dim, policy.action_count, 2, 3);
    const TrainingConfig cfg = full_config();
    const GradientResult analytic = compute_gradients_serial(policy, batch, cfg);
    const Vec numeric = test::finite_difference_gradient(policy, batch, cfg);
    CHECK(test::grad_error(flatten_grads(policy, analytic.grads), numeric) <= 1e-4);
  }
}

TEST_CASE("gradient check with the history channel disabled") {
  Rng rng(31);
  TreePolicy policy = test::random_policy(rng, 4, 2, 0, Recurrence::FixedTanh, 3, 5);
  const Dataset batch = small_batch(rng, 4, 2, 3, 4);
  const TrainingConfig cfg = full_config();
  const GradientResult analytic = compute_gradients_serial(policy, batch, cfg);
  const Vec numeric = test::finite_difference_gradient(policy, batch, cfg);
  CHECK(test::grad_error(flatten_grads(policy, analytic.grads), numeric) <= 1e-4);
}

TEST_CASE("gradient check with soft-AND gating") {
  Rng rng(59);
  for (int m : {0, 2}) {
    CAPTURE(m);
    TreePolicy policy = test::random_policy(rng, 3, 2, m, Recurrence::FixedTanh, 3, 4,
                                            GatingKind::SoftAnd);
    const Dataset batch = small_batch(rng, 3, 2, 2, 3);
    const TrainingConfig cfg = full_config();
    const GradientResult analytic = compute_gradients_serial(policy, batch, cfg);
    const Vec numeric = test::finite_difference_gradient(policy, batch, cfg);
    CHECK(test::grad_error(flatten_grads(policy, analytic.grads), numeric) <= 1e-4);
  }
}

TEST_CASE("gradient check for the ablation action losses") {
  Rng rng(83);
  for (const ActionLossKind kind : {ActionLossKind::Mixture, ActionLossKind::MaxLeaf}) {
    CAPTURE(static_cast<int>(kind));
    TreePolicy policy = test::random_policy(rng, 2, 2, 1, Recurrence::FixedTanh, 2, 3);
    const Dataset batch = small_batch(rng, 2, 2, 2, 2);
    TrainingConfig cfg = full_config();
    cfg.action_loss = kind;
    const GradientResult analytic = compute_gradients_serial(policy, batch, cfg);
    const Vec numeric = test::finite_difference_gradient(policy, batch, cfg);
    CHECK(test::grad_error(flatten_grads(policy, analytic.grads), numeric) <= 1e-4);
  }
}

TEST_CASE("gradient loss values agree with the loss-only evaluation") {
  Rng rng(19);
  TreePolicy policy = test::random_policy(rng, 3, 2, 2, Recurrence::MatrixHist, 3, 5);
  const Dataset batch = small_batch(rng, 3, 2, 4, 4);
  const TrainingConfig cfg = full_config();
  const GradientResult out = compute_gradients_serial(policy, batch, cfg);
  const LossBreakdown direct = batch_loss(policy, batch, cfg);
  CHECK(out.loss.total == doctest::Approx(direct.total).epsilon(1e-12));
  CHECK(out.loss.action_loss == doctest::Approx(direct.action_loss).epsilon(1e-12));
  CHECK(out.loss.evolution_mse == doctest::Approx(direct.evolution_mse).epsilon(1e-12));
  CHECK(out.loss.evolution_kl == doctest::Approx(direct.evolution_kl).epsilon(1e-12));
  CHECK(out.loss.split_loss == doctest::Approx(direct.split_loss).epsilon(1e-12));
}

TEST_CASE("property: permuting a batch leaves mean loss and gradients unchanged") {
  Rng rng(47);
  TreePolicy policy = test::random_policy(rng, 2, 2, 2, Recurrence::VecHist, 3, 4);
  Dataset batch = small_batch(rng, 2, 2, 6, 3);
  const TrainingConfig cfg = full_config();
  const GradientResult base = compute_gradients_serial(policy, batch, cfg);

  Dataset permuted = {batch[3], batch[0], batch[5], batch[1], batch[4], batch[2]};
  const GradientResult perm = compute_gradients_serial(policy, permuted, cfg);
  CHECK(perm.loss.total == doctest::Approx(base.loss.total).epsilon(1e-9));
  const Vec a = flatten_grads(policy, base.grads);
  const Vec b = flatten_grads(policy, perm.grads);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
  }
}

TEST_CASE("flatten and unflatten round-trip") {
  Rng rng(3);
  TreePolicy policy = test::random_policy(rng, 3, 3, 2, Recurrence::Rnn, 3, 4);
  const Vec flat = flatten_params(policy);
  CHECK(flat.size() == param_count(policy));
  TreePolicy copy = policy;
  Vec modified = flat;
  for (double& v : modified) v += 1.0;
  unflatten_params(copy, modified);
  const Vec back = flatten_params(copy);
  for (size_t i = 0; i < flat.size(); ++i) CHECK(back[i] == flat[i] + 1.0);
}

TEST_CASE("empty batch and empty trajectory are rejected") {
  Rng rng(8);
  TreePolicy policy = test::random_policy(rng, 2, 2, 1, Recurrence::FixedTanh, 2, 2);
  TrainingConfig cfg;
  CHECK_THROWS_AS(compute_gradients_serial(policy, {}, cfg), DataError);
  CHECK_THROWS_AS(trajectory_gradient(policy, Trajectory{}, cfg), DataError);
}

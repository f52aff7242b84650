// Shared test utilities: hand-buildable policies, random instances, and the
// finite-difference gradient oracle.  Test-only; the oracle differentiates
// the loss independently of the analytic backward pass.
#pragma once

#include <utility>
#include <vector>

#include "rdt/grad.hpp"
#include "rdt/growth.hpp"
#include "rdt/loss.hpp"
#include "rdt/rng.hpp"
#include "rdt/tree.hpp"

namespace rdt::test {

// Policy with identity normalization and explicitly supplied parameters.
// Shapes follow the recurrence variant; parameters start at zero.
inline TreePolicy blank_policy(TreeTopology topo, int obs_dim, int action_count, int history_dim,
                               Recurrence recurrence = Recurrence::FixedTanh,
                               GatingKind gating = GatingKind::Dense) {
  TreePolicy policy;
  policy.topo = std::move(topo);
  policy.obs_dim = obs_dim;
  policy.action_count = action_count;
  policy.history_dim = history_dim;
  policy.recurrence = recurrence;
  policy.gating = gating;
  policy.norm.mean.assign(obs_dim, 0.0);
  policy.norm.stddev.assign(obs_dim, 1.0);
  policy.inner.resize(policy.topo.node_count());
  policy.leaf.resize(policy.topo.node_count());
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      LeafParams lf;
      lf.theta_a.assign(action_count, 0.0);
      lf.theta_h.assign(history_dim, 0.0);
      lf.theta_z.assign(obs_dim, 0.0);
      if (recurrence == Recurrence::VecHist || recurrence == Recurrence::RnnVecHist) {
        lf.theta_r.assign(history_dim, 0.0);
      }
      if (recurrence == Recurrence::MatrixHist || recurrence == Recurrence::Rnn) {
        lf.theta_rm = Mat(history_dim, history_dim);
      }
      if (recurrence == Recurrence::MatrixObs || recurrence == Recurrence::RnnVecHist ||
          recurrence == Recurrence::Rnn) {
        lf.theta_f = Mat(history_dim, obs_dim);
      }
      policy.leaf[id] = std::move(lf);
    } else {
      InnerParams ip;
      ip.w.assign(history_dim + obs_dim, 0.0);
      if (gating == GatingKind::SoftAnd) ip.axis_b.assign(obs_dim, 0.0);
      policy.inner[id] = std::move(ip);
    }
  }
  return policy;
}

inline TreeTopology single_leaf_topology() {
  TreeTopology topo;
  topo.nodes.push_back(TreeNode{});
  return topo;
}

// Root with two leaf children (ids 1, 2).
inline TreeTopology depth1_topology() { return complete_tree(1); }

// Root -> (leaf 1, inner 2 -> (leaf 3, leaf 4)).
inline TreeTopology chain_topology() {
  TreeTopology topo;
  topo.nodes = {TreeNode{1, 2, 0}, TreeNode{-1, -1, 1}, TreeNode{3, 4, 1}, TreeNode{-1, -1, 2},
                TreeNode{-1, -1, 2}};
  return topo;
}

// Random topology grown by splitting random leaves; parent ids < child ids.
inline TreeTopology random_topology(Rng& rng, int max_depth, int target_leaves) {
  TreeTopology topo = single_leaf_topology();
  while (topo.leaf_count() < target_leaves) {
    const auto leaves = topo.leaf_ids();
    std::vector<int> can_split;
    for (int id : leaves) {
      if (topo.nodes[id].depth < max_depth) can_split.push_back(id);
    }
    if (can_split.empty()) break;
    const int id = can_split[rng.uniform_int(static_cast<int>(can_split.size()))];
    const int l = topo.node_count();
    topo.nodes.push_back(TreeNode{-1, -1, topo.nodes[id].depth + 1});
    topo.nodes.push_back(TreeNode{-1, -1, topo.nodes[id].depth + 1});
    topo.nodes[id].left = l;
    topo.nodes[id].right = l + 1;
  }
  return topo;
}

inline void randomize_params(TreePolicy& policy, Rng& rng, double scale = 0.8) {
  Vec flat = flatten_params(policy);
  for (double& v : flat) v = rng.normal(0.0, scale);
  unflatten_params(policy, flat);
}

inline TreePolicy random_policy(Rng& rng, int obs_dim, int action_count, int history_dim,
                                Recurrence recurrence, int max_depth = 3, int leaves = 4,
                                GatingKind gating = GatingKind::Dense, double scale = 0.8) {
  TreePolicy policy = blank_policy(random_topology(rng, max_depth, leaves), obs_dim, action_count,
                                   history_dim, recurrence, gating);
  randomize_params(policy, rng, scale);
  return policy;
}

inline Trajectory random_trajectory(Rng& rng, int obs_dim, int action_count, int length) {
  Trajectory traj;
  for (int t = 0; t < length; ++t) {
    traj.observations.push_back(rng.normal_vec(obs_dim, 1.0));
    traj.actions.push_back(rng.uniform_int(action_count));
  }
  return traj;
}

// Central finite differences of the batch loss, with the KL stop-gradient
// targets frozen at the base point.
inline Vec finite_difference_gradient(const TreePolicy& policy, const Dataset& batch,
                                      const TrainingConfig& config, double eps = 1e-5) {
  std::vector<std::vector<Vec>> frozen(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) frozen[i] = kl_targets(policy, batch[i]);

  TreePolicy probe = policy;
  Vec flat = flatten_params(policy);
  Vec grad(flat.size(), 0.0);
  for (size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + eps;
    unflatten_params(probe, flat);
    const double up = batch_loss(probe, batch, config, &frozen).total;
    flat[i] = saved - eps;
    unflatten_params(probe, flat);
    const double down = batch_loss(probe, batch, config, &frozen).total;
    flat[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  unflatten_params(probe, flat);
  return grad;
}

// Worst relative error, with differences below 1e-6 treated as exact.
inline double grad_error(const Vec& analytic, const Vec& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::fabs(analytic[i] - numeric[i]);
    if (diff <= 1e-6) continue;
    const double denom = std::max(std::fabs(analytic[i]), std::fabs(numeric[i]));
    worst = std::max(worst, diff / denom);
  }
  return worst;
}

}  // namespace rdt::test

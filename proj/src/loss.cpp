#include "rdt/loss.hpp"

#include <cmath>

namespace rdt {

namespace {

int onehot_index(const Vec& target) {
  int idx = -1;
  for (size_t k = 0; k < target.size(); ++k) {
    if (target[k] == 1.0) {
      if (idx >= 0) throw DataError("target must be one-hot");
      idx = static_cast<int>(k);
    } else if (target[k] != 0.0) {
      throw DataError("target must be one-hot");
    }
  }
  if (idx < 0) throw DataError("target must be one-hot");
  return idx;
}

double step_action_loss(const TreePolicy& policy, const Vec& x, int target, ActionLossKind kind) {
  const Vec node_probs = node_path_probabilities(policy, x);
  switch (kind) {
    case ActionLossKind::PerLeaf: {
      double loss = 0.0;
      for (int id = 0; id < policy.topo.node_count(); ++id) {
        if (!policy.topo.nodes[id].is_leaf()) continue;
        const Vec a = leaf_action_distribution(policy.leaf[id]);
        loss -= node_probs[id] * clamped_log(a[target]);
      }
      return loss;
    }
    case ActionLossKind::Mixture: {
      double p = 0.0;
      for (int id = 0; id < policy.topo.node_count(); ++id) {
        if (!policy.topo.nodes[id].is_leaf()) continue;
        p += node_probs[id] * leaf_action_distribution(policy.leaf[id])[target];
      }
      return -clamped_log(p);
    }
    case ActionLossKind::MaxLeaf: {
      int best = -1;
      double best_p = -1.0;
      for (int id = 0; id < policy.topo.node_count(); ++id) {
        if (!policy.topo.nodes[id].is_leaf()) continue;
        if (node_probs[id] > best_p) {
          best_p = node_probs[id];
          best = id;
        }
      }
      return -clamped_log(leaf_action_distribution(policy.leaf[best])[target]);
    }
  }
  return 0.0;
}

Vec make_input(const TreePolicy& policy, const Vec& h, const Vec& z_norm) {
  Vec x(policy.input_dim());
  std::copy(h.begin(), h.end(), x.begin());
  std::copy(z_norm.begin(), z_norm.end(), x.begin() + policy.history_dim);
  return x;
}

double kl_divergence(const Vec& q, const Vec& p) {
  double kl = 0.0;
  for (size_t k = 0; k < q.size(); ++k) {
    if (q[k] <= 0.0) continue;
    kl += q[k] * (std::log(q[k]) - clamped_log(p[k]));
  }
  return kl;
}

}  // namespace

double action_loss(const TreePolicy& policy, const Vec& h, const Vec& z_raw, const Vec& target_onehot,
                   ActionLossKind kind) {
  if (static_cast<int>(target_onehot.size()) != policy.action_count) {
    throw DataError("target has wrong length");
  }
  const int target = onehot_index(target_onehot);
  const Vec x = make_input(policy, h, normalize_obs(policy, z_raw));
  return step_action_loss(policy, x, target, kind);
}

EvolutionLoss evolution_loss(const TreePolicy& policy, const Vec& h, const Vec& z_raw, const Vec& z_next_raw) {
  const StepOutput step = forward_step(policy, h, z_raw);
  const Vec z_next = normalize_obs(policy, z_next_raw);

  EvolutionLoss out;
  for (int i = 0; i < policy.obs_dim; ++i) {
    const double d = z_next[i] - step.z_pred[i];
    out.mse += d * d;
  }
  const StepOutput true_next = forward_step_normalized(policy, step.h_next, z_next);
  const StepOutput pred_next = forward_step_normalized(policy, step.h_next, step.z_pred);
  out.kl = kl_divergence(true_next.action_dist, pred_next.action_dist);
  return out;
}

double split_regularizer(const TreePolicy& policy, const std::vector<std::pair<Vec, Vec>>& steps,
                         double lambda) {
  if (steps.empty()) throw DataError("split regularizer needs at least one step input");
  if (lambda == 0.0) return 0.0;

  const int n = policy.topo.node_count();
  Vec gate_mass(n, 0.0);   // sum_x P^n(x) * p_gate^n(x)
  Vec total_mass(n, 0.0);  // sum_x P^n(x)
  for (const auto& [h, z_norm] : steps) {
    const Vec x = make_input(policy, h, z_norm);
    const Vec probs = node_path_probabilities(policy, x);
    for (int id = 0; id < n; ++id) {
      if (policy.topo.nodes[id].is_leaf()) continue;
      total_mass[id] += probs[id];
      gate_mass[id] += probs[policy.topo.nodes[id].right];
    }
  }
  double loss = 0.0;
  for (int id = 0; id < n; ++id) {
    if (policy.topo.nodes[id].is_leaf() || total_mass[id] <= 0.0) continue;
    double alpha = gate_mass[id] / total_mass[id];
    alpha = std::min(std::max(alpha, 1e-6), 1.0 - 1e-6);
    const double decay = std::pow(2.0, -policy.topo.nodes[id].depth);
    loss -= lambda * decay * (0.5 * std::log(alpha) + 0.5 * std::log(1.0 - alpha));
  }
  return loss;
}

double l1_penalty(const TreePolicy& policy) {
  double sum = 0.0;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) continue;
    for (double w : policy.inner[id].w) sum += std::fabs(w);
  }
  return sum;
}

std::vector<Vec> kl_targets(const TreePolicy& policy, const Trajectory& traj) {
  const std::vector<StepOutput> steps = rollout(policy, traj, RolloutMode::Soft);
  std::vector<Vec> targets;
  for (size_t t = 0; t + 1 < steps.size(); ++t) targets.push_back(steps[t + 1].action_dist);
  return targets;
}

LossBreakdown trajectory_loss(const TreePolicy& policy, const Trajectory& traj, const TrainingConfig& config,
                              const std::vector<Vec>* frozen_kl_targets) {
  const size_t len = traj.length();
  if (len == 0) throw DataError("cannot score an empty trajectory");
  if (traj.actions.size() != len) throw DataError("trajectory has mismatched action count");

  LossBreakdown out;
  std::vector<std::pair<Vec, Vec>> step_inputs;
  step_inputs.reserve(len);

  Vec h = policy.zero_history();
  std::vector<StepOutput> steps;
  steps.reserve(len);
  std::vector<Vec> z_norms(len);
  for (size_t t = 0; t < len; ++t) {
    z_norms[t] = normalize_obs(policy, traj.observations[t]);
    step_inputs.emplace_back(h, z_norms[t]);
    const Vec x = make_input(policy, h, z_norms[t]);
    out.action_loss += step_action_loss(policy, x, traj.actions[t], config.action_loss);
    steps.push_back(forward_step_normalized(policy, h, z_norms[t]));
    h = steps.back().h_next;
  }
  for (size_t t = 0; t + 1 < len; ++t) {
    const Vec& z_pred = steps[t].z_pred;
    for (int i = 0; i < policy.obs_dim; ++i) {
      const double d = z_norms[t + 1][i] - z_pred[i];
      out.evolution_mse += d * d;
    }
    const Vec& q = frozen_kl_targets ? (*frozen_kl_targets)[t] : steps[t + 1].action_dist;
    const StepOutput pred_next = forward_step_normalized(policy, steps[t].h_next, z_pred);
    double kl = 0.0;
    for (int k = 0; k < policy.action_count; ++k) {
      if (q[k] <= 0.0) continue;
      kl += q[k] * (std::log(q[k]) - clamped_log(pred_next.action_dist[k]));
    }
    out.evolution_kl += kl;
  }
  const double inv_len = 1.0 / static_cast<double>(len);
  out.action_loss *= inv_len;
  out.evolution_mse *= inv_len;
  out.evolution_kl *= inv_len;
  out.split_loss = config.lambda == 0.0 ? 0.0 : split_regularizer(policy, step_inputs, config.lambda);
  out.l1_loss = l1_penalty(policy);
  out.total = out.action_loss + config.delta1 * out.evolution_mse + config.delta2 * out.evolution_kl +
              out.split_loss + config.l1_weight * out.l1_loss;
  return out;
}

LossBreakdown batch_loss(const TreePolicy& policy, const Dataset& batch, const TrainingConfig& config,
                         const std::vector<std::vector<Vec>>* frozen_kl_targets) {
  if (batch.empty()) throw DataError("cannot score an empty batch");
  LossBreakdown sum;
  for (size_t i = 0; i < batch.size(); ++i) {
    sum += trajectory_loss(policy, batch[i], config,
                           frozen_kl_targets ? &(*frozen_kl_targets)[i] : nullptr);
  }
  sum.scale(1.0 / static_cast<double>(batch.size()));
  // Recombine so the decomposition identity holds exactly on the means.
  sum.total = sum.action_loss + config.delta1 * sum.evolution_mse + config.delta2 * sum.evolution_kl +
              sum.split_loss + config.l1_weight * sum.l1_loss;
  return sum;
}

}  // namespace rdt

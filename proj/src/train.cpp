#include "rdt/train.hpp"

#include <algorithm>
#include <cmath>

#include "rdt/adam.hpp"
#include "rdt/metrics.hpp"
#include "rdt/rng.hpp"

namespace rdt {

namespace {

// Positive-class scores and labels over every step of every trajectory.
void soft_scores(const TreePolicy& policy, const Dataset& data, std::vector<double>& scores,
                 std::vector<int>& labels) {
  scores.clear();
  labels.clear();
  for (const auto& traj : data) {
    const auto steps = rollout(policy, traj, RolloutMode::Soft);
    for (size_t t = 0; t < steps.size(); ++t) {
      scores.push_back(steps[t].action_dist[1]);
      labels.push_back(traj.actions[t] != 0 ? 1 : 0);
    }
  }
}

// Mean log-likelihood of the demonstrated actions under the soft mixture;
// total-ordered, so early stopping still sees progress where AUROC is
// undefined (single-class splits) or inapplicable (more than two actions).
double mean_loglik_soft(const TreePolicy& policy, const Dataset& data) {
  double sum = 0.0;
  size_t total = 0;
  for (const auto& traj : data) {
    const auto steps = rollout(policy, traj, RolloutMode::Soft);
    for (size_t t = 0; t < steps.size(); ++t) {
      sum += clamped_log(steps[t].action_dist[traj.actions[t]]);
      ++total;
    }
  }
  return total == 0 ? 0.0 : sum / static_cast<double>(total);
}

double effective_l1(const TrainingConfig& config, int epoch) {
  if (!config.l1_ramp) return config.l1_weight;
  const double frac = std::min(1.0, static_cast<double>(epoch) /
                                        static_cast<double>(std::max(1, config.l1_ramp_epochs)));
  return std::exp(std::log(config.l1_ramp_from) +
                  frac * (std::log(config.l1_ramp_to) - std::log(config.l1_ramp_from)));
}

void randomize_scope(TreePolicy& policy, const std::vector<int>& scope_nodes, Rng& rng) {
  for (int id : scope_nodes) {
    if (policy.topo.nodes[id].is_leaf()) {
      LeafParams& lf = policy.leaf[id];
      for (double& v : lf.theta_a) v = rng.normal(0.0, 0.1);
      for (double& v : lf.theta_h) v = rng.normal(0.0, 0.1);
      for (double& v : lf.theta_z) v = rng.normal(0.0, 0.1);
      for (double& v : lf.theta_r) v = rng.normal(0.0, 0.1);
      for (double& v : lf.theta_rm.data) v = rng.normal(0.0, 0.1);
      for (double& v : lf.theta_f.data) v = rng.normal(0.0, 0.1);
    } else {
      InnerParams& ip = policy.inner[id];
      for (double& v : ip.w) v = rng.normal(0.0, 0.1);
      ip.b = 0.0;
      for (double& v : ip.axis_b) v = 0.0;
    }
  }
}

}  // namespace

double validation_metric(const TreePolicy& policy, const Dataset& val) {
  if (policy.action_count == 2) {
    std::vector<double> scores;
    std::vector<int> labels;
    soft_scores(policy, val, scores, labels);
    if (const auto roc = auroc(scores, labels)) return *roc;
  }
  return mean_loglik_soft(policy, val);
}

TrainResult train_fixed_topology(const TreePolicy& init, const Dataset& train, const Dataset& val,
                                 const TrainingConfig& config, TrainScope scope, int subtree_root) {
  if (train.empty() || val.empty()) throw DataError("training needs non-empty train and validation sets");

  // Frozen-parameter mask over the flat vector.
  const auto spans = node_param_spans(init);
  std::vector<int> scope_nodes;
  if (scope == TrainScope::Subtree) {
    if (subtree_root < 0 || subtree_root >= init.topo.node_count()) {
      throw StructuralError("subtree scope needs a valid root id");
    }
    scope_nodes = init.topo.subtree_ids(subtree_root);
  } else {
    scope_nodes.resize(init.topo.node_count());
    for (int i = 0; i < init.topo.node_count(); ++i) scope_nodes[i] = i;
  }
  std::vector<uint8_t> trainable(flatten_params(init).size(), 0);
  for (int id : scope_nodes) {
    for (size_t i = spans[id].first; i < spans[id].second; ++i) trainable[i] = 1;
  }

  TrainResult result;
  result.policy = init;
  result.best_val = validation_metric(init, val);

  Rng shuffle_rng(sub_seed(config.seed, 0x7261696e));
  Rng restart_rng(sub_seed(config.seed, 0x72657374));

  std::vector<int> order(train.size());
  for (size_t i = 0; i < train.size(); ++i) order[i] = static_cast<int>(i);

  int attempt = 0;
  while (true) {
    TreePolicy policy = init;
    if (attempt > 0) randomize_scope(policy, scope_nodes, restart_rng);

    Vec flat = flatten_params(policy);
    AdamState adam(flat.size());
    TrainingConfig cfg = config;

    double attempt_best = validation_metric(policy, val);
    Vec attempt_best_flat = flat;
    int64_t updates = 0;
    int64_t last_improve = 0;
    double first_epoch_loss = 0.0;
    bool stop = false;
    bool restart = false;
    double last_val = attempt_best;

    for (int epoch = 1; epoch <= config.max_epochs && !stop && !restart; ++epoch) {
      cfg.l1_weight = effective_l1(config, epoch - 1);
      shuffle_rng.shuffle(order);
      LossBreakdown epoch_loss;
      int batches = 0;
      for (size_t start = 0; start < order.size() && !stop; start += config.batch_size) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
        const std::vector<int> batch(order.begin() + start, order.begin() + end);
        GradientResult gr = compute_gradients(policy, train, batch, cfg);
        epoch_loss += gr.loss;
        ++batches;

        Vec grads = flatten_grads(policy, gr.grads);
        for (size_t i = 0; i < grads.size(); ++i) {
          if (!trainable[i]) grads[i] = 0.0;
        }
        adam_step(flat, grads, adam, config.learning_rate);
        unflatten_params(policy, flat);

        ++updates;
        if (updates % config.val_every == 0) {
          last_val = validation_metric(policy, val);
          if (last_val > attempt_best) {
            attempt_best = last_val;
            attempt_best_flat = flat;
            last_improve = updates;
          }
          if (updates - last_improve >= config.patience) stop = true;
        }
      }
      epoch_loss.scale(1.0 / std::max(1, batches));
      result.history.push_back({epoch, epoch_loss, last_val});
      if (epoch == 1) first_epoch_loss = epoch_loss.total;
      if (epoch == config.restart_window_epochs && !stop) {
        const bool decreased =
            epoch_loss.total < (1.0 - config.restart_threshold) * first_epoch_loss;
        if (!decreased) {
          if (attempt < config.max_restarts) {
            restart = true;
          } else {
            result.stalled = true;  // keep training; report best found
          }
        }
      }
    }

    if (attempt_best > result.best_val) {
      result.best_val = attempt_best;
      TreePolicy best = init;
      unflatten_params(best, attempt_best_flat);
      result.policy = std::move(best);
    }
    if (!restart) break;
    ++attempt;
    result.restarts_used = attempt;
  }
  return result;
}

}  // namespace rdt

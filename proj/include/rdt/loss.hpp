#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "rdt/tree.hpp"

namespace rdt {

// Action-loss variants: the default weighs each leaf's cross-entropy by its
// path probability; the alternatives score the mixture or the
// maximum-probability leaf.
enum class ActionLossKind { PerLeaf, Mixture, MaxLeaf };

struct TrainingConfig {
  double delta1 = 1e-2;        // evolution MSE weight
  double delta2 = 1e-3;        // evolution KL weight
  double lambda = 1e-1;        // balanced-split penalty weight
  double l1_weight = 0.0;      // gate-weight sparsity
  double learning_rate = 1e-3;
  int batch_size = 32;
  int patience = 50;           // update iterations without validation improvement
  int val_every = 10;          // updates between validation checks
  int max_restarts = 3;        // random re-inits when early loss stalls
  double restart_threshold = 0.05;  // required relative loss decrease
  int restart_window_epochs = 5;    // epochs over which the decrease is measured
  int max_epochs = 300;
  ActionLossKind action_loss = ActionLossKind::PerLeaf;
  // Optional log-linear ramp of the L1 weight across epochs.
  bool l1_ramp = false;
  double l1_ramp_from = 1e-5;
  double l1_ramp_to = 1e-1;
  int l1_ramp_epochs = 30;
  uint64_t seed = 0;
};

struct LossBreakdown {
  double action_loss = 0.0;
  double evolution_mse = 0.0;
  double evolution_kl = 0.0;
  double split_loss = 0.0;  // includes the lambda weight
  double l1_loss = 0.0;     // raw sum of |w|, weighted only in `total`
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    action_loss += o.action_loss;
    evolution_mse += o.evolution_mse;
    evolution_kl += o.evolution_kl;
    split_loss += o.split_loss;
    l1_loss += o.l1_loss;
    total += o.total;
    return *this;
  }
  void scale(double s) {
    action_loss *= s;
    evolution_mse *= s;
    evolution_kl *= s;
    split_loss *= s;
    l1_loss *= s;
    total *= s;
  }
};

// Path-probability-weighted cross-entropy of one step against a one-hot target.
double action_loss(const TreePolicy& policy, const Vec& h, const Vec& z_raw, const Vec& target_onehot,
                   ActionLossKind kind = ActionLossKind::PerLeaf);

// Evolution consistency of one step: squared prediction error on the next
// observation (normalized space) and the KL between the action distributions
// under the true and the predicted next observation, both at history h_next.
// The true-observation distribution is a constant target.
struct EvolutionLoss {
  double mse = 0.0;
  double kl = 0.0;
};
EvolutionLoss evolution_loss(const TreePolicy& policy, const Vec& h, const Vec& z_raw, const Vec& z_next_raw);

// Balanced-split penalty over a set of step inputs (h, z_norm); decays with
// node depth.  Returns the penalty with `lambda` already applied.
double split_regularizer(const TreePolicy& policy, const std::vector<std::pair<Vec, Vec>>& steps,
                         double lambda);

// Sum of |w_i| over all inner-node gate weights (biases excluded).
double l1_penalty(const TreePolicy& policy);

// Loss of one trajectory: per-step action and evolution terms averaged over
// the trajectory length, split and L1 terms added once.
// `frozen_kl_targets`, when given, supplies the constant KL target
// distribution for each step t in [0, len-2]; used to probe the gradient
// with the stop-gradient target held fixed.
LossBreakdown trajectory_loss(const TreePolicy& policy, const Trajectory& traj, const TrainingConfig& config,
                              const std::vector<Vec>* frozen_kl_targets = nullptr);

// Mean trajectory loss over a batch.
LossBreakdown batch_loss(const TreePolicy& policy, const Dataset& batch, const TrainingConfig& config,
                         const std::vector<std::vector<Vec>>* frozen_kl_targets = nullptr);

// KL target distributions (the action distribution at each step t+1 of the
// soft rollout) used to freeze the stop-gradient side of the evolution loss.
std::vector<Vec> kl_targets(const TreePolicy& policy, const Trajectory& traj);

}  // namespace rdt

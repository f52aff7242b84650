#pragma once

#include <vector>

#include "rdt/grad.hpp"
#include "rdt/loss.hpp"

namespace rdt {

enum class TrainScope { All, Subtree };

struct TrainHistoryRow {
  int epoch = 0;
  LossBreakdown loss;      // mean over the epoch's updates
  double val_metric = 0.0; // last validation value seen this epoch
};

struct TrainResult {
  TreePolicy policy;  // best-validation snapshot
  std::vector<TrainHistoryRow> history;
  double best_val = 0.0;
  int restarts_used = 0;
  bool stalled = false;  // loss never left the plateau and restarts ran out
};

// Validation score used for early stopping and split acceptance: soft-mode
// AUROC of the positive class for binary actions, accuracy otherwise (also
// the fallback when the validation split is single-class).
double validation_metric(const TreePolicy& policy, const Dataset& val);

// Minibatch Adam on a fixed topology until the validation metric stops
// improving for `patience` updates.  scope=Subtree freezes every parameter
// outside the subtree rooted at `subtree_root`.  If the training loss fails
// to drop by more than restart_threshold over the first restart_window
// epochs, the trainable parameters are re-drawn, up to max_restarts times.
TrainResult train_fixed_topology(const TreePolicy& init, const Dataset& train, const Dataset& val,
                                 const TrainingConfig& config, TrainScope scope = TrainScope::All,
                                 int subtree_root = -1);

}  // namespace rdt

#pragma once

#include <string>
#include <vector>

#include "rdt/rng.hpp"
#include "rdt/train.hpp"
#include "rdt/tree.hpp"

namespace rdt {

struct GrowthConfig {
  int max_depth = 5;
  int init_depth = 2;            // complete-tree depth at initialization
  double prune_threshold = 0.05; // minimum validation path probability
  double accept_margin = 0.0;    // required validation improvement per split
};

struct ModelSpec {
  int history_dim = 8;
  Recurrence recurrence = Recurrence::FixedTanh;
  GatingKind gating = GatingKind::Dense;
};

struct GrowthEvent {
  std::string event;  // "split" | "reject" | "prune"
  int node = -1;
  int depth = 0;
  double val_before = 0.0;
  double val_after = 0.0;
};

struct GrowthResult {
  TreePolicy policy;    // after pruning
  TreePolicy unpruned;  // after global optimization, before pruning
  std::vector<GrowthEvent> log;
  std::vector<TrainHistoryRow> loss_history;  // all phases, concatenated
  double val_metric = 0.0;                    // after pruning
  int restarts_used = 0;
};

// Complete tree of the given depth with small random parameters; gates start
// near 0.5 so path mass is spread evenly.
TreePolicy initialize_tree(int obs_dim, int action_count, int history_dim, Recurrence recurrence,
                           Rng& rng, int depth = 2, GatingKind gating = GatingKind::Dense);

double split_noise_sigma(int child_depth);

// Replaces the leaf with an inner node and two child leaves.  Children copy
// the parent's parameters plus Gaussian noise of variance 1/depth (scaled by
// noise_scale; 0 gives a behavior-preserving split).  max_depth, when
// non-negative, rejects splits whose children would exceed it.
void split_leaf(TreePolicy& policy, int leaf_id, Rng& rng, double noise_scale = 1.0,
                int max_depth = -1);

// Mean path probability of every leaf over the validation rollouts,
// keyed by node id.
Vec validation_leaf_mass(const TreePolicy& policy, const Dataset& val);

// Iteratively removes leaves whose validation path mass is below p_min,
// collapsing their parent onto the surviving sibling.  Never removes the
// final leaf.
TreePolicy prune_low_probability(const TreePolicy& policy, const Dataset& val, double p_min,
                                 std::vector<GrowthEvent>* log = nullptr);

// Full growth procedure: optimize a shallow tree, repeatedly split the
// highest-mass suboptimal leaf with local optimization, keep splits that
// improve validation, then optimize globally and prune.
GrowthResult grow(const Dataset& train, const Dataset& val, const GrowthConfig& gcfg,
                  const TrainingConfig& tcfg, const ModelSpec& spec, uint64_t seed);

}  // namespace rdt

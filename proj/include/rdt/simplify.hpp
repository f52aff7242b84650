#pragma once

#include <vector>

#include "rdt/tree.hpp"

namespace rdt {

// Per-timestep hard decision tree with one observation feature tested per
// node.  Thresholds are kept in both normalized and raw observation units.
struct AxisNode {
  int left = -1;
  int right = -1;
  int feature = -1;           // observation dimension tested (inner nodes)
  double threshold_norm = 0.0;
  double threshold_raw = 0.0;
  bool greater = true;        // right branch taken when z[feature] > threshold
  bool degenerate = false;    // gate had no observation weight
  bool degenerate_right = false;  // branch a degenerate node always takes
  int action = -1;            // leaves: most likely action
  double action_prob = 0.0;
  double mass = 0.0;          // validation path mass (filled by pruning)
  int source_node = -1;       // node id in the soft policy
  bool is_leaf() const { return left < 0; }
};

struct AxisAlignedTree {
  std::vector<AxisNode> nodes;
  int root = 0;
  int timestep = 0;  // 1-based step this view corresponds to
  Vec history;       // h_t the tree was conditioned on
  int leaf_count() const;
};

// History marginalization: per-inner-node effective bias
// b' = b + w_h . h_t, keyed by node id.
Vec marginalized_biases(const TreePolicy& policy, const Vec& h);

// Gate probability reconstructed from a marginalized bias; equals the
// original gate at the same (h, z_norm).
double marginalized_gate(const TreePolicy& policy, int node, double b_prime, const Vec& z_norm);

// Unidimensional conversion: each node keeps its largest-magnitude
// observation weight; threshold = -b' / w_max with direction by sign.
AxisAlignedTree to_axis_aligned(const TreePolicy& policy, const Vec& h, int timestep = 1);

// Same, but the dropped observation dimensions are filled with the predicted
// observation z_pred (normalized space) instead of being ignored.
AxisAlignedTree to_axis_aligned_adjusted(const TreePolicy& policy, const Vec& h, const Vec& z_pred_norm,
                                         int timestep = 1);

struct FeatureRanges {
  Vec min;
  Vec max;
};
FeatureRanges feature_ranges(const Dataset& data);

// Removes branches unreachable within the feature ranges or contradicting an
// ancestor's test on the same feature, then leaves with validation path mass
// below p_min; collapses single-child parents.  The highest-mass leaf always
// survives.
AxisAlignedTree prune_axis_aligned(const AxisAlignedTree& tree, const FeatureRanges& ranges,
                                   const std::vector<Vec>& val_obs_raw, double p_min);

// Hard traversal; returns the leaf's action.
int axis_classify(const AxisAlignedTree& tree, const Vec& z_raw);
int axis_classify_leaf(const AxisAlignedTree& tree, const Vec& z_raw);  // leaf index

// Action-matching accuracy when decisions come from the per-timestep
// axis-aligned views (history still rolled through the soft policy).
double axis_aligned_accuracy(const TreePolicy& policy, const Dataset& data,
                             bool evolution_adjust = false);

}  // namespace rdt

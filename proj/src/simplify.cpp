#include "rdt/simplify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rdt {

namespace {

int argmax_abs(const Vec& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (std::fabs(v[i]) > std::fabs(v[best])) best = static_cast<int>(i);
  }
  return best;
}

AxisAlignedTree convert(const TreePolicy& policy, const Vec& h, const Vec* z_fill, int timestep) {
  if (static_cast<int>(h.size()) != policy.history_dim) {
    throw StructuralError("history vector has wrong length");
  }
  const Vec biases = marginalized_biases(policy, h);
  const int m = policy.history_dim;

  AxisAlignedTree out;
  out.root = policy.topo.root;
  out.timestep = timestep;
  out.history = h;
  out.nodes.resize(policy.topo.node_count());
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    AxisNode& node = out.nodes[id];
    node.source_node = id;
    const TreeNode& src = policy.topo.nodes[id];
    if (src.is_leaf()) {
      const Vec dist = leaf_action_distribution(policy.leaf[id]);
      node.action = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      node.action_prob = dist[node.action];
      continue;
    }
    node.left = src.left;
    node.right = src.right;
    const InnerParams& ip = policy.inner[id];
    Vec wz(ip.w.begin() + m, ip.w.end());
    const int imax = argmax_abs(wz);
    node.feature = imax;
    const double wmax = wz[imax];
    if (wmax == 0.0) {
      node.degenerate = true;
      node.degenerate_right = biases[id] > 0.0;
      continue;
    }
    double bias = biases[id];
    if (policy.gating == GatingKind::SoftAnd) {
      // Each soft-AND factor already is an axis threshold; keep the dominant
      // dimension's own factor.
      bias = ip.axis_b[imax];
    } else if (z_fill) {
      for (int i = 0; i < policy.obs_dim; ++i) {
        if (i != imax) bias += wz[i] * (*z_fill)[i];
      }
    }
    node.threshold_norm = -bias / wmax;
    node.threshold_raw = policy.norm.mean[imax] + policy.norm.stddev[imax] * node.threshold_norm;
    node.greater = wmax > 0.0;
  }
  return out;
}

// Compact rebuild of an axis tree after structural edits expressed as a
// child-redirect function.
AxisAlignedTree rebuild(const AxisAlignedTree& tree, int new_root) {
  AxisAlignedTree out;
  out.timestep = tree.timestep;
  out.history = tree.history;
  out.root = 0;
  std::vector<int> queue{new_root};
  std::vector<int> old_ids;
  std::vector<int> new_of(tree.nodes.size(), -1);
  size_t qi = 0;
  while (qi < queue.size()) {
    const int old_id = queue[qi++];
    new_of[old_id] = static_cast<int>(old_ids.size());
    old_ids.push_back(old_id);
    const AxisNode& node = tree.nodes[old_id];
    if (!node.is_leaf()) {
      queue.push_back(node.left);
      queue.push_back(node.right);
    }
  }
  out.nodes.resize(old_ids.size());
  for (size_t i = 0; i < old_ids.size(); ++i) {
    AxisNode node = tree.nodes[old_ids[i]];
    if (!node.is_leaf()) {
      node.left = new_of[node.left];
      node.right = new_of[node.right];
    }
    out.nodes[i] = node;
  }
  return out;
}

struct Interval {
  double lo;
  double hi;
};

// Recursively drops branches whose feature interval is empty.  Returns the id
// of the subtree that survives at this position (within `tree`), mutating
// nothing; the caller rebuilds from the returned root.
int interval_collapse(const AxisAlignedTree& tree, std::vector<AxisNode>& nodes, int id,
                      std::vector<Interval> intervals) {
  AxisNode node = nodes[id];
  if (node.is_leaf()) return id;
  if (node.degenerate) {
    return interval_collapse(tree, nodes, node.degenerate_right ? node.right : node.left,
                             std::move(intervals));
  }
  const Interval box = intervals[node.feature];
  bool right_empty, left_empty;
  Interval right_box = box, left_box = box;
  if (node.greater) {
    right_box.lo = std::max(box.lo, node.threshold_raw);
    left_box.hi = std::min(box.hi, node.threshold_raw);
    right_empty = node.threshold_raw >= box.hi;
    left_empty = node.threshold_raw < box.lo;
  } else {
    right_box.hi = std::min(box.hi, node.threshold_raw);
    left_box.lo = std::max(box.lo, node.threshold_raw);
    right_empty = node.threshold_raw <= box.lo;
    left_empty = node.threshold_raw > box.hi;
  }
  if (right_empty && left_empty) right_empty = false;  // keep something
  if (right_empty) {
    intervals[node.feature] = left_box;
    return interval_collapse(tree, nodes, node.left, std::move(intervals));
  }
  if (left_empty) {
    intervals[node.feature] = right_box;
    return interval_collapse(tree, nodes, node.right, std::move(intervals));
  }
  auto left_intervals = intervals;
  left_intervals[node.feature] = left_box;
  const int l = interval_collapse(tree, nodes, node.left, std::move(left_intervals));
  intervals[node.feature] = right_box;
  const int r = interval_collapse(tree, nodes, node.right, std::move(intervals));
  nodes[id].left = l;
  nodes[id].right = r;
  return id;
}

int route(const std::vector<AxisNode>& nodes, int root, const Vec& z_raw) {
  int id = root;
  while (!nodes[id].is_leaf()) {
    const AxisNode& node = nodes[id];
    bool go_right;
    if (node.degenerate) {
      go_right = node.degenerate_right;
    } else if (node.greater) {
      go_right = z_raw[node.feature] > node.threshold_raw;
    } else {
      go_right = z_raw[node.feature] < node.threshold_raw;
    }
    id = go_right ? node.right : node.left;
  }
  return id;
}

}  // namespace

int AxisAlignedTree::leaf_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.is_leaf() ? 1 : 0;
  return n;
}

Vec marginalized_biases(const TreePolicy& policy, const Vec& h) {
  if (static_cast<int>(h.size()) != policy.history_dim) {
    throw StructuralError("history vector has wrong length");
  }
  Vec biases(policy.topo.node_count(), 0.0);
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) continue;
    double b = policy.inner[id].b;
    for (int i = 0; i < policy.history_dim; ++i) b += policy.inner[id].w[i] * h[i];
    biases[id] = b;
  }
  return biases;
}

double marginalized_gate(const TreePolicy& policy, int node, double b_prime, const Vec& z_norm) {
  const InnerParams& ip = policy.inner[node];
  const int m = policy.history_dim;
  if (policy.gating == GatingKind::Dense) {
    double s = b_prime;
    for (int i = 0; i < policy.obs_dim; ++i) s += ip.w[m + i] * z_norm[i];
    return sigmoid(s);
  }
  double p = m > 0 ? sigmoid(b_prime) : 1.0;
  for (int i = 0; i < policy.obs_dim; ++i) {
    p *= sigmoid(z_norm[i] * ip.w[m + i] + ip.axis_b[i]);
  }
  return p;
}

AxisAlignedTree to_axis_aligned(const TreePolicy& policy, const Vec& h, int timestep) {
  return convert(policy, h, nullptr, timestep);
}

AxisAlignedTree to_axis_aligned_adjusted(const TreePolicy& policy, const Vec& h, const Vec& z_pred_norm,
                                         int timestep) {
  if (static_cast<int>(z_pred_norm.size()) != policy.obs_dim) {
    throw StructuralError("predicted observation has wrong length");
  }
  return convert(policy, h, &z_pred_norm, timestep);
}

FeatureRanges feature_ranges(const Dataset& data) {
  const int dim = infer_obs_dim(data);
  FeatureRanges ranges;
  ranges.min.assign(dim, std::numeric_limits<double>::infinity());
  ranges.max.assign(dim, -std::numeric_limits<double>::infinity());
  for (const auto& traj : data) {
    for (const auto& z : traj.observations) {
      for (int i = 0; i < dim; ++i) {
        ranges.min[i] = std::min(ranges.min[i], z[i]);
        ranges.max[i] = std::max(ranges.max[i], z[i]);
      }
    }
  }
  return ranges;
}

AxisAlignedTree prune_axis_aligned(const AxisAlignedTree& tree, const FeatureRanges& ranges,
                                   const std::vector<Vec>& val_obs_raw, double p_min) {
  // 1) Structural pruning: out-of-range and contradictory branches.
  std::vector<Interval> intervals(ranges.min.size());
  for (size_t i = 0; i < intervals.size(); ++i) intervals[i] = {ranges.min[i], ranges.max[i]};
  std::vector<AxisNode> scratch = tree.nodes;
  const int root = interval_collapse(tree, scratch, tree.root, intervals);
  AxisAlignedTree pruned = rebuild(AxisAlignedTree{scratch, tree.root, tree.timestep, tree.history}, root);

  // 2) Validation-mass pruning.
  while (true) {
    std::vector<double> mass(pruned.nodes.size(), 0.0);
    if (!val_obs_raw.empty()) {
      for (const Vec& z : val_obs_raw) mass[route(pruned.nodes, pruned.root, z)] += 1.0;
      for (double& v : mass) v /= static_cast<double>(val_obs_raw.size());
    }
    for (size_t i = 0; i < pruned.nodes.size(); ++i) {
      if (pruned.nodes[i].is_leaf()) pruned.nodes[i].mass = mass[i];
    }
    if (pruned.leaf_count() <= 1 || p_min <= 0.0) break;
    int worst = -1;
    double worst_mass = 2.0;
    for (size_t i = 0; i < pruned.nodes.size(); ++i) {
      if (!pruned.nodes[i].is_leaf()) continue;
      if (mass[i] < worst_mass) {
        worst_mass = mass[i];
        worst = static_cast<int>(i);
      }
    }
    if (worst < 0 || worst_mass >= p_min) break;
    // Collapse the parent onto the sibling.
    int parent = -1, sibling = -1;
    for (size_t i = 0; i < pruned.nodes.size(); ++i) {
      if (pruned.nodes[i].left == worst || pruned.nodes[i].right == worst) {
        parent = static_cast<int>(i);
        sibling = pruned.nodes[i].left == worst ? pruned.nodes[i].right : pruned.nodes[i].left;
        break;
      }
    }
    if (parent < 0) break;  // worst is the root leaf
    std::vector<AxisNode> edited = pruned.nodes;
    int new_root = pruned.root;
    if (pruned.root == parent) {
      new_root = sibling;
    } else {
      for (auto& node : edited) {
        if (node.left == parent) node.left = sibling;
        if (node.right == parent) node.right = sibling;
      }
    }
    pruned = rebuild(AxisAlignedTree{edited, new_root, pruned.timestep, pruned.history}, new_root);
  }
  return pruned;
}

int axis_classify_leaf(const AxisAlignedTree& tree, const Vec& z_raw) {
  return route(tree.nodes, tree.root, z_raw);
}

int axis_classify(const AxisAlignedTree& tree, const Vec& z_raw) {
  return tree.nodes[route(tree.nodes, tree.root, z_raw)].action;
}

double axis_aligned_accuracy(const TreePolicy& policy, const Dataset& data, bool evolution_adjust) {
  size_t hits = 0, total = 0;
  for (const auto& traj : data) {
    const auto steps = rollout(policy, traj, RolloutMode::Soft);
    Vec h = policy.zero_history();
    for (size_t t = 0; t < steps.size(); ++t) {
      AxisAlignedTree tree;
      if (evolution_adjust && t > 0) {
        tree = to_axis_aligned_adjusted(policy, h, steps[t - 1].z_pred, static_cast<int>(t) + 1);
      } else {
        tree = to_axis_aligned(policy, h, static_cast<int>(t) + 1);
      }
      const int pred = axis_classify(tree, traj.observations[t]);
      hits += (pred == traj.actions[t]) ? 1 : 0;
      ++total;
      h = steps[t].h_next;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace rdt

#include "rdt/growth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rdt {

namespace {

LeafParams make_leaf(int obs_dim, int action_count, int history_dim, Recurrence recurrence) {
  LeafParams lf;
  lf.theta_a.assign(action_count, 0.0);
  lf.theta_h.assign(history_dim, 0.0);
  lf.theta_z.assign(obs_dim, 0.0);
  switch (recurrence) {
    case Recurrence::VecHist:
    case Recurrence::RnnVecHist:
      lf.theta_r.assign(history_dim, 0.0);
      break;
    case Recurrence::MatrixHist:
    case Recurrence::Rnn:
      lf.theta_rm = Mat(history_dim, history_dim);
      break;
    default:
      break;
  }
  switch (recurrence) {
    case Recurrence::MatrixObs:
    case Recurrence::RnnVecHist:
    case Recurrence::Rnn:
      lf.theta_f = Mat(history_dim, obs_dim);
      break;
    default:
      break;
  }
  return lf;
}

void fill_leaf_noise(LeafParams& lf, Rng& rng, double sigma, const LeafParams* base) {
  auto fill = [&](Vec& dst, const Vec* src) {
    for (size_t i = 0; i < dst.size(); ++i) {
      dst[i] = (src ? (*src)[i] : 0.0) + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
    }
  };
  fill(lf.theta_a, base ? &base->theta_a : nullptr);
  fill(lf.theta_h, base ? &base->theta_h : nullptr);
  fill(lf.theta_z, base ? &base->theta_z : nullptr);
  fill(lf.theta_r, base ? &base->theta_r : nullptr);
  fill(lf.theta_rm.data, base ? &base->theta_rm.data : nullptr);
  fill(lf.theta_f.data, base ? &base->theta_f.data : nullptr);
}

// Removes one leaf: the parent collapses onto the sibling subtree and node
// ids are renumbered breadth-first.
TreePolicy remove_leaf(const TreePolicy& policy, int leaf_id) {
  const int parent = policy.topo.parent_of(leaf_id);
  if (parent < 0) return policy;  // single-leaf tree, nothing to remove
  const int sibling = policy.topo.nodes[parent].left == leaf_id ? policy.topo.nodes[parent].right
                                                                : policy.topo.nodes[parent].left;

  TreePolicy out;
  out.recurrence = policy.recurrence;
  out.gating = policy.gating;
  out.obs_dim = policy.obs_dim;
  out.action_count = policy.action_count;
  out.history_dim = policy.history_dim;
  out.norm = policy.norm;

  // Breadth-first copy, skipping the collapsed parent and the removed leaf.
  int new_root = policy.topo.root == parent ? sibling : policy.topo.root;
  std::vector<std::pair<int, int>> queue{{new_root, 0}};  // (old id, new depth)
  std::vector<int> old_ids;
  std::vector<int> new_of(policy.topo.node_count(), -1);
  while (!queue.empty()) {
    auto [old_id, depth] = queue.front();
    queue.erase(queue.begin());
    const int new_id = static_cast<int>(old_ids.size());
    old_ids.push_back(old_id);
    new_of[old_id] = new_id;
    out.topo.nodes.push_back(TreeNode{-1, -1, depth});
    const TreeNode& node = policy.topo.nodes[old_id];
    if (!node.is_leaf()) {
      int l = node.left, r = node.right;
      if (l == parent) l = sibling;
      if (r == parent) r = sibling;
      queue.push_back({l, depth + 1});
      queue.push_back({r, depth + 1});
    }
  }
  out.topo.root = 0;
  out.inner.resize(out.topo.node_count());
  out.leaf.resize(out.topo.node_count());
  for (int new_id = 0; new_id < out.topo.node_count(); ++new_id) {
    const int old_id = old_ids[new_id];
    const TreeNode& node = policy.topo.nodes[old_id];
    if (!node.is_leaf()) {
      int l = node.left, r = node.right;
      if (l == parent) l = sibling;
      if (r == parent) r = sibling;
      out.topo.nodes[new_id].left = new_of[l];
      out.topo.nodes[new_id].right = new_of[r];
      out.inner[new_id] = policy.inner[old_id];
    } else {
      out.leaf[new_id] = policy.leaf[old_id];
    }
  }
  out.topo.validate();
  return out;
}

}  // namespace

TreePolicy initialize_tree(int obs_dim, int action_count, int history_dim, Recurrence recurrence,
                           Rng& rng, int depth, GatingKind gating) {
  if (obs_dim <= 0 || action_count <= 0 || history_dim < 0) {
    throw StructuralError("tree dimensions must be positive");
  }
  TreePolicy policy;
  policy.topo = complete_tree(depth);
  policy.recurrence = recurrence;
  policy.gating = gating;
  policy.obs_dim = obs_dim;
  policy.action_count = action_count;
  policy.history_dim = history_dim;
  policy.norm.mean.assign(obs_dim, 0.0);
  policy.norm.stddev.assign(obs_dim, 1.0);
  policy.inner.resize(policy.topo.node_count());
  policy.leaf.resize(policy.topo.node_count());
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      LeafParams lf = make_leaf(obs_dim, action_count, history_dim, recurrence);
      fill_leaf_noise(lf, rng, 0.1, nullptr);
      policy.leaf[id] = std::move(lf);
    } else {
      InnerParams ip;
      ip.w = rng.normal_vec(policy.input_dim(), 0.1);
      ip.b = 0.0;
      if (gating == GatingKind::SoftAnd) ip.axis_b.assign(obs_dim, 0.0);
      policy.inner[id] = std::move(ip);
    }
  }
  return policy;
}

double split_noise_sigma(int child_depth) { return 1.0 / std::sqrt(static_cast<double>(child_depth)); }

void split_leaf(TreePolicy& policy, int leaf_id, Rng& rng, double noise_scale, int max_depth) {
  if (leaf_id < 0 || leaf_id >= policy.topo.node_count() || !policy.topo.nodes[leaf_id].is_leaf()) {
    throw StructuralError("split target must be a leaf");
  }
  const int child_depth = policy.topo.nodes[leaf_id].depth + 1;
  if (max_depth >= 0 && child_depth > max_depth) {
    throw StructuralError("split would exceed the depth limit");
  }
  const double sigma = noise_scale * split_noise_sigma(child_depth);
  const LeafParams parent = policy.leaf[leaf_id];

  const int l = policy.topo.node_count();
  const int r = l + 1;
  policy.topo.nodes.push_back(TreeNode{-1, -1, child_depth});
  policy.topo.nodes.push_back(TreeNode{-1, -1, child_depth});
  policy.topo.nodes[leaf_id].left = l;
  policy.topo.nodes[leaf_id].right = r;

  InnerParams gate;
  gate.w.assign(policy.input_dim(), 0.0);
  for (double& v : gate.w) v = noise_scale > 0.0 ? rng.normal(0.0, sigma) : 0.0;
  gate.b = 0.0;
  if (policy.gating == GatingKind::SoftAnd) gate.axis_b.assign(policy.obs_dim, 0.0);
  policy.inner.resize(policy.topo.node_count());
  policy.leaf.resize(policy.topo.node_count());
  policy.inner[leaf_id] = std::move(gate);
  policy.leaf[leaf_id] = LeafParams{};

  for (int child : {l, r}) {
    LeafParams lf = make_leaf(policy.obs_dim, policy.action_count, policy.history_dim, policy.recurrence);
    fill_leaf_noise(lf, rng, noise_scale > 0.0 ? sigma : 0.0, &parent);
    policy.leaf[child] = std::move(lf);
  }
}

Vec validation_leaf_mass(const TreePolicy& policy, const Dataset& val) {
  Vec mass(policy.topo.node_count(), 0.0);
  size_t steps_total = 0;
  const auto leaves = policy.topo.leaf_ids();
  for (const auto& traj : val) {
    const auto steps = rollout(policy, traj, RolloutMode::Soft);
    for (const auto& step : steps) {
      for (size_t i = 0; i < leaves.size(); ++i) mass[leaves[i]] += step.leaf_path_probs[i];
      ++steps_total;
    }
  }
  if (steps_total > 0) {
    for (double& m : mass) m /= static_cast<double>(steps_total);
  }
  return mass;
}

TreePolicy prune_low_probability(const TreePolicy& policy, const Dataset& val, double p_min,
                                 std::vector<GrowthEvent>* log) {
  if (val.empty()) throw DataError("pruning needs a non-empty validation set");
  TreePolicy current = policy;
  while (current.topo.leaf_count() > 1) {
    const Vec mass = validation_leaf_mass(current, val);
    int worst = -1;
    double worst_mass = 2.0;
    for (int id : current.topo.leaf_ids()) {
      if (mass[id] < worst_mass) {
        worst_mass = mass[id];
        worst = id;
      }
    }
    if (worst < 0 || worst_mass >= p_min) break;
    if (log) {
      log->push_back({"prune", worst, current.topo.nodes[worst].depth, worst_mass, 0.0});
    }
    current = remove_leaf(current, worst);
  }
  return current;
}

GrowthResult grow(const Dataset& train, const Dataset& val, const GrowthConfig& gcfg,
                  const TrainingConfig& tcfg, const ModelSpec& spec, uint64_t seed) {
  if (train.empty() || val.empty()) throw DataError("growth needs non-empty datasets");
  const int obs_dim = infer_obs_dim(train);
  const int action_count = std::max(infer_action_count(train), 2);

  Rng init_rng(sub_seed(seed, 0x696e6974));
  Rng split_rng(sub_seed(seed, 0x73706c74));

  GrowthResult result;
  TreePolicy policy = initialize_tree(obs_dim, action_count, spec.history_dim, spec.recurrence,
                                      init_rng, gcfg.init_depth, spec.gating);
  policy.norm = compute_normalization(train);

  TrainingConfig phase_cfg = tcfg;
  phase_cfg.seed = sub_seed(seed, 0x67726f77);
  TrainResult full = train_fixed_topology(policy, train, val, phase_cfg);
  policy = full.policy;
  result.restarts_used += full.restarts_used;
  result.loss_history = std::move(full.history);
  double best_val = validation_metric(policy, val);

  std::set<int> optimal;  // leaves whose split was rejected or that hit max depth
  int split_counter = 0;
  while (true) {
    // Highest validation mass first: focus capacity where the data flows.
    const Vec mass = validation_leaf_mass(policy, val);
    int target = -1;
    double target_mass = -1.0;
    for (int id : policy.topo.leaf_ids()) {
      if (optimal.count(id)) continue;
      if (mass[id] > target_mass) {
        target_mass = mass[id];
        target = id;
      }
    }
    if (target < 0) break;
    if (policy.topo.nodes[target].depth >= gcfg.max_depth) {
      optimal.insert(target);
      continue;
    }

    const TreePolicy snapshot = policy;
    split_leaf(policy, target, split_rng, 1.0, gcfg.max_depth);
    TrainingConfig local_cfg = tcfg;
    local_cfg.seed = sub_seed(seed, 0x6c6f0000 + static_cast<uint64_t>(split_counter++));
    TrainResult local = train_fixed_topology(policy, train, val, local_cfg, TrainScope::Subtree, target);
    result.restarts_used += local.restarts_used;
    const double val_after = local.best_val;
    if (val_after > best_val + gcfg.accept_margin) {
      policy = local.policy;
      result.log.push_back({"split", target, policy.topo.nodes[target].depth, best_val, val_after});
      for (auto& row : local.history) result.loss_history.push_back(row);
      best_val = val_after;
      // The two fresh leaves remain suboptimal and may be split further.
    } else {
      result.log.push_back({"reject", target, policy.topo.nodes[target].depth, best_val, val_after});
      policy = snapshot;
      optimal.insert(target);
    }
  }

  TrainingConfig global_cfg = tcfg;
  global_cfg.seed = sub_seed(seed, 0x676c6f62);
  TrainResult global = train_fixed_topology(policy, train, val, global_cfg);
  policy = global.policy;
  result.restarts_used += global.restarts_used;
  for (auto& row : global.history) result.loss_history.push_back(row);

  result.unpruned = policy;
  result.policy = prune_low_probability(policy, val, gcfg.prune_threshold, &result.log);
  result.val_metric = validation_metric(result.policy, val);
  return result;
}

}  // namespace rdt

#include "rdt/tree.hpp"

#include <algorithm>
#include <cmath>

namespace rdt {

int TreeTopology::leaf_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.is_leaf() ? 1 : 0;
  return n;
}

int TreeTopology::inner_count() const { return node_count() - leaf_count(); }

std::vector<int> TreeTopology::leaf_ids() const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i) {
    if (nodes[i].is_leaf()) out.push_back(i);
  }
  return out;
}

std::vector<int> TreeTopology::inner_ids() const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i) {
    if (!nodes[i].is_leaf()) out.push_back(i);
  }
  return out;
}

int TreeTopology::depth() const {
  int d = 0;
  for (const auto& node : nodes) d = std::max(d, node.depth);
  return d;
}

int TreeTopology::parent_of(int id) const {
  for (int i = 0; i < node_count(); ++i) {
    if (nodes[i].left == id || nodes[i].right == id) return i;
  }
  return -1;
}

std::vector<int> TreeTopology::subtree_ids(int id) const {
  std::vector<int> out;
  std::vector<int> stack{id};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    out.push_back(n);
    if (!nodes[n].is_leaf()) {
      stack.push_back(nodes[n].left);
      stack.push_back(nodes[n].right);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void TreeTopology::recompute_depths() {
  nodes[root].depth = 0;
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    if (!nodes[n].is_leaf()) {
      nodes[nodes[n].left].depth = nodes[n].depth + 1;
      nodes[nodes[n].right].depth = nodes[n].depth + 1;
      stack.push_back(nodes[n].left);
      stack.push_back(nodes[n].right);
    }
  }
}

void TreeTopology::validate() const {
  if (nodes.empty()) throw StructuralError("tree has no nodes");
  if (root < 0 || root >= node_count()) throw StructuralError("root id out of range");
  std::vector<int> indegree(nodes.size(), 0);
  for (int i = 0; i < node_count(); ++i) {
    const auto& node = nodes[i];
    const bool has_left = node.left >= 0;
    const bool has_right = node.right >= 0;
    if (has_left != has_right) throw StructuralError("inner node must have two children");
    if (!has_left) continue;
    if (node.left >= node_count() || node.right >= node_count() || node.left == node.right) {
      throw StructuralError("bad child ids on node " + std::to_string(i));
    }
    if (node.left <= i || node.right <= i) {
      throw StructuralError("child id must exceed parent id");
    }
    ++indegree[node.left];
    ++indegree[node.right];
  }
  int roots = 0;
  for (int i = 0; i < node_count(); ++i) {
    if (indegree[i] == 0) {
      ++roots;
      if (i != root) throw StructuralError("orphan node " + std::to_string(i));
    } else if (indegree[i] != 1) {
      throw StructuralError("node " + std::to_string(i) + " has multiple parents");
    }
  }
  if (roots != 1) throw StructuralError("tree must have exactly one root");
}

TreeTopology complete_tree(int depth) {
  TreeTopology topo;
  topo.root = 0;
  topo.nodes.push_back(TreeNode{});
  // Breadth-first: split every frontier node until the requested depth.
  std::vector<int> frontier{0};
  for (int d = 0; d < depth; ++d) {
    std::vector<int> next;
    for (int id : frontier) {
      const int l = topo.node_count();
      topo.nodes.push_back(TreeNode{-1, -1, d + 1});
      const int r = topo.node_count();
      topo.nodes.push_back(TreeNode{-1, -1, d + 1});
      topo.nodes[id].left = l;
      topo.nodes[id].right = r;
      next.push_back(l);
      next.push_back(r);
    }
    frontier = std::move(next);
  }
  return topo;
}

Normalization compute_normalization(const Dataset& data) {
  const int dim = infer_obs_dim(data);
  Normalization norm;
  norm.mean.assign(dim, 0.0);
  norm.stddev.assign(dim, 0.0);
  size_t count = 0;
  for (const auto& traj : data) {
    for (const auto& z : traj.observations) {
      if (static_cast<int>(z.size()) != dim) throw DataError("inconsistent observation dimension");
      for (int i = 0; i < dim; ++i) norm.mean[i] += z[i];
      ++count;
    }
  }
  for (int i = 0; i < dim; ++i) norm.mean[i] /= static_cast<double>(count);
  for (const auto& traj : data) {
    for (const auto& z : traj.observations) {
      for (int i = 0; i < dim; ++i) {
        const double d = z[i] - norm.mean[i];
        norm.stddev[i] += d * d;
      }
    }
  }
  for (int i = 0; i < dim; ++i) {
    norm.stddev[i] = std::sqrt(norm.stddev[i] / static_cast<double>(count));
    if (!(norm.stddev[i] > 1e-12)) norm.stddev[i] = 1.0;  // constant feature
  }
  return norm;
}

void TreePolicy::validate() const {
  topo.validate();
  if (static_cast<int>(inner.size()) != topo.node_count() ||
      static_cast<int>(leaf.size()) != topo.node_count()) {
    throw StructuralError("parameter arrays must be keyed by node id");
  }
  for (int id = 0; id < topo.node_count(); ++id) {
    if (topo.nodes[id].is_leaf()) {
      if (static_cast<int>(leaf[id].theta_a.size()) != action_count) {
        throw StructuralError("leaf action logits must have length K");
      }
      if (static_cast<int>(leaf[id].theta_h.size()) != history_dim ||
          static_cast<int>(leaf[id].theta_z.size()) != obs_dim) {
        throw StructuralError("leaf parameter shape mismatch");
      }
    } else {
      if (static_cast<int>(inner[id].w.size()) != input_dim()) {
        throw StructuralError("gate weight length must be M+D");
      }
      if (gating == GatingKind::SoftAnd &&
          static_cast<int>(inner[id].axis_b.size()) != obs_dim) {
        throw StructuralError("soft-AND gate needs one bias per observation dimension");
      }
    }
  }
  if (static_cast<int>(norm.mean.size()) != obs_dim ||
      static_cast<int>(norm.stddev.size()) != obs_dim) {
    throw StructuralError("normalization stats must have D entries");
  }
  for (double s : norm.stddev) {
    if (!(s > 0.0)) throw StructuralError("normalization stddev must be positive");
  }
}

double gate_probability(const InnerParams& params, const Vec& x) {
  if (params.w.size() != x.size()) {
    throw StructuralError("gate input dimension mismatch");
  }
  return sigmoid(dot(params.w, x) + params.b);
}

double soft_and_gate(const Vec& w, const Vec& b, const Vec& x) {
  if (w.size() != x.size() || b.size() != x.size()) {
    throw StructuralError("soft-AND gate dimension mismatch");
  }
  double p = 1.0;
  for (size_t i = 0; i < x.size(); ++i) p *= sigmoid(x[i] * w[i] + b[i]);
  return p;
}

double node_gate(const TreePolicy& policy, int id, const Vec& x) {
  const InnerParams& params = policy.inner[id];
  if (policy.gating == GatingKind::Dense) {
    return gate_probability(params, x);
  }
  // Soft AND over observation dimensions; the history slice keeps a single
  // multidimensional sigmoid factor (marginalized away at interpretation time).
  const int m = policy.history_dim;
  double p = 1.0;
  if (m > 0) {
    double s = params.b;
    for (int i = 0; i < m; ++i) s += params.w[i] * x[i];
    p = sigmoid(s);
  }
  for (int i = 0; i < policy.obs_dim; ++i) {
    p *= sigmoid(x[m + i] * params.w[m + i] + params.axis_b[i]);
  }
  return p;
}

Vec node_path_probabilities(const TreePolicy& policy, const Vec& x) {
  Vec probs(policy.topo.node_count(), 0.0);
  probs[policy.topo.root] = 1.0;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    const auto& node = policy.topo.nodes[id];
    if (node.is_leaf()) continue;
    const double g = node_gate(policy, id, x);
    probs[node.right] = probs[id] * g;
    probs[node.left] = probs[id] * (1.0 - g);
  }
  return probs;
}

Vec path_probabilities(const TreePolicy& policy, const Vec& x) {
  if (static_cast<int>(x.size()) != policy.input_dim()) {
    throw StructuralError("path probability input must have length M+D");
  }
  const Vec node_probs = node_path_probabilities(policy, x);
  Vec out;
  out.reserve(policy.topo.leaf_count());
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) out.push_back(node_probs[id]);
  }
  return out;
}

Vec leaf_action_distribution(const LeafParams& leaf) { return softmax(leaf.theta_a); }

Vec leaf_history(const LeafParams& leaf, Recurrence model, const Vec& h_prev, const Vec& z_prev) {
  const size_t m = leaf.theta_h.size();
  if (model == Recurrence::FixedSoftmax) return softmax(leaf.theta_h);

  Vec pre = leaf.theta_h;
  switch (model) {
    case Recurrence::FixedTanh:
      break;
    case Recurrence::VecHist:
      if (leaf.theta_r.size() != m || h_prev.size() != m) throw StructuralError("VecHist shape mismatch");
      for (size_t i = 0; i < m; ++i) pre[i] += leaf.theta_r[i] * h_prev[i];
      break;
    case Recurrence::MatrixObs:
      if (leaf.theta_f.rows != static_cast<int>(m)) throw StructuralError("MatrixObs shape mismatch");
      for (size_t i = 0; i < m; ++i) {
        for (int j = 0; j < leaf.theta_f.cols; ++j) pre[i] += leaf.theta_f.at(static_cast<int>(i), j) * z_prev[j];
      }
      break;
    case Recurrence::RnnVecHist:
      if (leaf.theta_r.size() != m || h_prev.size() != m) throw StructuralError("RnnVecHist shape mismatch");
      for (size_t i = 0; i < m; ++i) pre[i] += leaf.theta_r[i] * h_prev[i];
      for (size_t i = 0; i < m; ++i) {
        for (int j = 0; j < leaf.theta_f.cols; ++j) pre[i] += leaf.theta_f.at(static_cast<int>(i), j) * z_prev[j];
      }
      break;
    case Recurrence::MatrixHist:
      if (leaf.theta_rm.rows != static_cast<int>(m) || h_prev.size() != m) throw StructuralError("MatrixHist shape mismatch");
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < m; ++j) pre[i] += leaf.theta_rm.at(static_cast<int>(i), static_cast<int>(j)) * h_prev[j];
      }
      break;
    case Recurrence::Rnn:
      if (leaf.theta_rm.rows != static_cast<int>(m) || h_prev.size() != m) throw StructuralError("Rnn shape mismatch");
      for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < m; ++j) pre[i] += leaf.theta_rm.at(static_cast<int>(i), static_cast<int>(j)) * h_prev[j];
      }
      for (size_t i = 0; i < m; ++i) {
        for (int j = 0; j < leaf.theta_f.cols; ++j) pre[i] += leaf.theta_f.at(static_cast<int>(i), j) * z_prev[j];
      }
      break;
    default:
      break;
  }
  for (double& v : pre) v = std::tanh(v);
  return pre;
}

Vec normalize_obs(const TreePolicy& policy, const Vec& z_raw) {
  if (static_cast<int>(z_raw.size()) != policy.obs_dim) {
    throw DataError("observation has wrong dimension");
  }
  Vec z(policy.obs_dim);
  for (int i = 0; i < policy.obs_dim; ++i) {
    if (!std::isfinite(z_raw[i])) throw DataError("non-finite observation entry");
    z[i] = (z_raw[i] - policy.norm.mean[i]) / policy.norm.stddev[i];
  }
  return z;
}

Vec denormalize_obs(const TreePolicy& policy, const Vec& z_norm) {
  Vec z(policy.obs_dim);
  for (int i = 0; i < policy.obs_dim; ++i) {
    z[i] = policy.norm.mean[i] + policy.norm.stddev[i] * z_norm[i];
  }
  return z;
}

StepOutput forward_step_normalized(const TreePolicy& policy, const Vec& h, const Vec& z_norm) {
  Vec x(policy.input_dim());
  std::copy(h.begin(), h.end(), x.begin());
  std::copy(z_norm.begin(), z_norm.end(), x.begin() + policy.history_dim);

  const Vec node_probs = node_path_probabilities(policy, x);

  StepOutput out;
  out.leaf_path_probs.reserve(policy.topo.leaf_count());
  out.action_dist.assign(policy.action_count, 0.0);
  out.h_next.assign(policy.history_dim, 0.0);
  out.z_pred.assign(policy.obs_dim, 0.0);

  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (!policy.topo.nodes[id].is_leaf()) continue;
    const double p = node_probs[id];
    out.leaf_path_probs.push_back(p);
    const LeafParams& lf = policy.leaf[id];
    const Vec a = leaf_action_distribution(lf);
    for (int k = 0; k < policy.action_count; ++k) out.action_dist[k] += p * a[k];
    const Vec hn = leaf_history(lf, policy.recurrence, h, z_norm);
    for (int i = 0; i < policy.history_dim; ++i) out.h_next[i] += p * hn[i];
    for (int i = 0; i < policy.obs_dim; ++i) out.z_pred[i] += p * std::tanh(lf.theta_z[i]);
  }
  return out;
}

StepOutput forward_step(const TreePolicy& policy, const Vec& h, const Vec& z_raw) {
  return forward_step_normalized(policy, h, normalize_obs(policy, z_raw));
}

HardStepOutput hard_forward_step(const TreePolicy& policy, const Vec& h, const Vec& z_raw) {
  const Vec z_norm = normalize_obs(policy, z_raw);
  Vec x(policy.input_dim());
  std::copy(h.begin(), h.end(), x.begin());
  std::copy(z_norm.begin(), z_norm.end(), x.begin() + policy.history_dim);

  const Vec node_probs = node_path_probabilities(policy, x);
  int best = -1;
  double best_p = -1.0;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (!policy.topo.nodes[id].is_leaf()) continue;
    if (node_probs[id] > best_p) {  // strict: ties keep the lowest id
      best_p = node_probs[id];
      best = id;
    }
  }
  HardStepOutput out;
  out.leaf_id = best;
  const LeafParams& lf = policy.leaf[best];
  out.action_dist = leaf_action_distribution(lf);
  out.h_next = leaf_history(lf, policy.recurrence, h, z_norm);
  out.z_pred.resize(policy.obs_dim);
  for (int i = 0; i < policy.obs_dim; ++i) out.z_pred[i] = std::tanh(lf.theta_z[i]);
  return out;
}

std::vector<StepOutput> rollout(const TreePolicy& policy, const Trajectory& traj, RolloutMode mode) {
  if (traj.observations.empty()) throw DataError("cannot roll out an empty trajectory");
  std::vector<StepOutput> steps;
  steps.reserve(traj.observations.size());
  Vec h = policy.zero_history();
  for (const Vec& z : traj.observations) {
    if (mode == RolloutMode::Soft) {
      steps.push_back(forward_step(policy, h, z));
    } else {
      const HardStepOutput hard = hard_forward_step(policy, h, z);
      StepOutput step;
      step.leaf_path_probs = path_probabilities(
          policy, [&] {
            Vec x(policy.input_dim());
            std::copy(h.begin(), h.end(), x.begin());
            const Vec zn = normalize_obs(policy, z);
            std::copy(zn.begin(), zn.end(), x.begin() + policy.history_dim);
            return x;
          }());
      step.action_dist = hard.action_dist;
      step.h_next = hard.h_next;
      step.z_pred = hard.z_pred;
      steps.push_back(std::move(step));
    }
    h = steps.back().h_next;
  }
  return steps;
}

size_t param_count(const TreePolicy& policy) {
  size_t n = 0;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      const LeafParams& lf = policy.leaf[id];
      n += lf.theta_a.size() + lf.theta_h.size() + lf.theta_z.size();
      n += lf.theta_r.size() + lf.theta_rm.size() + lf.theta_f.size();
    } else {
      n += policy.inner[id].w.size() + 1 + policy.inner[id].axis_b.size();
    }
  }
  return n;
}

}  // namespace rdt

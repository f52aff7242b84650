#pragma once

#include <vector>

#include "rdt/common.hpp"

namespace rdt {

// Leaf recurrence families, ordered by parameter count.  FixedTanh is the
// parsimonious default; MatrixHist is needed when the history must carry
// several steps of past observations.
enum class Recurrence {
  FixedSoftmax,  // h' = softmax(theta_h)
  FixedTanh,     // h' = tanh(theta_h)
  VecHist,       // h' = tanh(theta_h + theta_r . h)        (elementwise)
  MatrixObs,     // h' = tanh(theta_h + Theta_f z)
  RnnVecHist,    // h' = tanh(theta_h + theta_r . h + Theta_f z)
  MatrixHist,    // h' = tanh(theta_h + Theta_r h)
  Rnn,           // h' = tanh(theta_h + Theta_r h + Theta_f z)
};

// Inner-node gate form: a single multidimensional sigmoid, or a soft AND of
// per-observation-dimension thresholds (history kept multidimensional).
enum class GatingKind { Dense, SoftAnd };

struct TreeNode {
  int left = -1;
  int right = -1;
  int depth = 0;
  bool is_leaf() const { return left < 0; }
};

// Single rooted binary tree stored as an id-indexed node array.  Invariant:
// every parent id is smaller than its children's ids, so a reverse id sweep
// visits children before parents.
struct TreeTopology {
  std::vector<TreeNode> nodes;
  int root = 0;

  int node_count() const { return static_cast<int>(nodes.size()); }
  int leaf_count() const;
  int inner_count() const;
  std::vector<int> leaf_ids() const;   // ascending
  std::vector<int> inner_ids() const;  // ascending
  int depth() const;
  int parent_of(int id) const;  // -1 for root
  // Node ids inside the subtree rooted at `id`, including `id`.
  std::vector<int> subtree_ids(int id) const;
  void recompute_depths();
  void validate() const;  // throws StructuralError
};

TreeTopology complete_tree(int depth);

struct InnerParams {
  Vec w;          // gate weights over [h; z], length M+D
  double b = 0.0; // gate bias
  Vec axis_b;     // per-observation-dimension biases, SoftAnd gating only (length D)
};

struct LeafParams {
  Vec theta_a;  // action logits, length K
  Vec theta_h;  // history parameters, length M
  Vec theta_z;  // evolution logits, length D
  Vec theta_r;  // elementwise history recurrence, length M (VecHist/RnnVecHist)
  Mat theta_rm; // matrix history recurrence, M x M (MatrixHist/Rnn)
  Mat theta_f;  // observation recurrence, M x D (MatrixObs/RnnVecHist/Rnn)
};

// Per-dimension z-score statistics of the training observations.
struct Normalization {
  Vec mean;
  Vec stddev;
};

Normalization compute_normalization(const Dataset& data);

// A recurrent soft decision tree policy.  Immutable during inference; the
// trainer owns it exclusively while optimizing.
struct TreePolicy {
  TreeTopology topo;
  std::vector<InnerParams> inner;  // indexed by node id, unused slots empty
  std::vector<LeafParams> leaf;    // indexed by node id, unused slots empty
  Recurrence recurrence = Recurrence::FixedTanh;
  GatingKind gating = GatingKind::Dense;
  int obs_dim = 0;      // D
  int action_count = 0; // K
  int history_dim = 0;  // M; 0 disables the history channel (static tree)
  Normalization norm;

  int input_dim() const { return history_dim + obs_dim; }
  Vec zero_history() const { return Vec(history_dim, 0.0); }
  void validate() const;
};

struct StepOutput {
  Vec leaf_path_probs;  // over leaves in ascending node-id order
  Vec action_dist;      // K-simplex
  Vec h_next;           // length M
  Vec z_pred;           // predicted next observation, normalized space
};

struct HardStepOutput {
  int leaf_id = -1;
  Vec action_dist;
  Vec h_next;
  Vec z_pred;
};

enum class RolloutMode { Soft, Hard };

// sigma(w.x + b) for a dense gate; strictly inside (0,1).
double gate_probability(const InnerParams& params, const Vec& x);

// prod_i sigma(x_i w_i + b_i): a soft AND over axis-aligned thresholds.
double soft_and_gate(const Vec& w, const Vec& b, const Vec& x);

// Gate of node `id` under the policy's gating kind, input x = [h; z_norm].
double node_gate(const TreePolicy& policy, int id, const Vec& x);

// Leaf path probabilities (ascending leaf id) for input x = [h; z_norm].
Vec path_probabilities(const TreePolicy& policy, const Vec& x);

// Path probability of every node id (inner and leaf), root = 1.
Vec node_path_probabilities(const TreePolicy& policy, const Vec& x);

Vec leaf_action_distribution(const LeafParams& leaf);

Vec leaf_history(const LeafParams& leaf, Recurrence model, const Vec& h_prev, const Vec& z_prev);

Vec normalize_obs(const TreePolicy& policy, const Vec& z_raw);
Vec denormalize_obs(const TreePolicy& policy, const Vec& z_norm);

// One soft step on an already-normalized observation.
StepOutput forward_step_normalized(const TreePolicy& policy, const Vec& h, const Vec& z_norm);

// One soft step: normalizes z_raw, mixes every leaf output by path probability.
StepOutput forward_step(const TreePolicy& policy, const Vec& h, const Vec& z_raw);

// One hard step: outputs of the maximum-path-probability leaf only.
// Ties break toward the lowest node id.
HardStepOutput hard_forward_step(const TreePolicy& policy, const Vec& h, const Vec& z_raw);

// Unrolls the policy over a trajectory starting from h = 0.
std::vector<StepOutput> rollout(const TreePolicy& policy, const Trajectory& traj,
                                RolloutMode mode = RolloutMode::Soft);

// Number of trainable parameters.
size_t param_count(const TreePolicy& policy);

}  // namespace rdt

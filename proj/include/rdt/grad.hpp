#pragma once

#include <utility>
#include <vector>

#include "rdt/loss.hpp"
#include "rdt/tree.hpp"

namespace rdt {

// Gradient container with the same shapes and node keys as the policy's
// parameters.
struct GradBuffer {
  std::vector<InnerParams> inner;
  std::vector<LeafParams> leaf;

  void add_scaled(const GradBuffer& other, double scale);
  void scale(double s);
};

GradBuffer zero_grads(const TreePolicy& policy);

struct GradientResult {
  GradBuffer grads;
  LossBreakdown loss;
};

// Exact reverse-mode gradient of one trajectory's loss (backpropagation
// through time along the history chain, full unroll).
GradientResult trajectory_gradient(const TreePolicy& policy, const Trajectory& traj,
                                   const TrainingConfig& config);

// Mean loss and gradient over a batch.  The serial version is the reference;
// the default fans trajectories out across OpenMP threads and reduces in
// fixed batch order, so both produce bitwise-identical results.
GradientResult compute_gradients_serial(const TreePolicy& policy, const Dataset& batch,
                                        const TrainingConfig& config);
GradientResult compute_gradients(const TreePolicy& policy, const Dataset& batch,
                                 const TrainingConfig& config);
// Same, over the subset data[indices[0]], data[indices[1]], ...
GradientResult compute_gradients(const TreePolicy& policy, const Dataset& data,
                                 const std::vector<int>& indices, const TrainingConfig& config);

// Flat parameter views in stable node-id order, used by the optimizer and by
// finite-difference probes.
Vec flatten_params(const TreePolicy& policy);
void unflatten_params(TreePolicy& policy, const Vec& flat);
Vec flatten_grads(const TreePolicy& policy, const GradBuffer& grads);
// [begin, end) of each node's slice in the flat vector, indexed by node id.
std::vector<std::pair<size_t, size_t>> node_param_spans(const TreePolicy& policy);

}  // namespace rdt

#pragma once

#include <optional>
#include <vector>

#include "rdt/metrics.hpp"
#include "rdt/tree.hpp"

namespace rdt {

struct StepFlag {
  int traj = 0;        // index within the evaluated dataset
  int t = 0;           // 0-based timestep
  bool anomalous = false;
  bool corrected = false;
  bool low_value = false;
};

struct EvaluationReport {
  double accuracy = 0.0;
  std::optional<double> auroc;
  std::optional<double> auprc;
  double brier = 0.0;
  double evolution_relative_error = 0.0;
  std::vector<std::vector<double>> confidence;  // per trajectory, per step: chosen-action probability
  std::vector<StepFlag> anomalies;              // only flagged steps
  std::vector<StepFlag> low_value;              // only flagged steps
};

// Action probabilities of the soft mixture; identical to forward_step's
// action distribution.
Vec policy_confidence(const TreePolicy& policy, const Vec& h, const Vec& z_raw);

// Entropy of the leaf path probabilities at one input (natural log).
double path_entropy(const TreePolicy& policy, const Vec& h, const Vec& z_raw);

// Mean entropy of the leaf action distributions.
double leaf_entropy(const TreePolicy& policy);

// A step is anomalous when the policy's most likely action has probability at
// least `threshold` but the demonstration differs; corrected when the next
// demonstrated action equals the action the policy had predicted.
std::vector<StepFlag> detect_anomalies(const TreePolicy& policy, const Dataset& data,
                                       double threshold = 0.9);

// An active action is low-value when both the realized observation change and
// the change the policy had already predicted fall below the dataset's mean
// change minus one standard deviation (normalized space).
std::vector<StepFlag> low_value_actions(const TreePolicy& policy, const Dataset& data,
                                        const std::vector<int>& active_actions = {1});

EvaluationReport evaluate(const TreePolicy& policy, const Dataset& data,
                          double anomaly_threshold = 0.9,
                          const std::vector<int>& active_actions = {1});

}  // namespace rdt

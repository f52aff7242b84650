#include "rdt/analysis.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rdt {

namespace {

int argmax(const Vec& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double norm2(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Mean and standard deviation of per-step observation change over the whole
// dataset (normalized space).
std::pair<double, double> change_stats(const TreePolicy& policy, const Dataset& data) {
  double sum = 0.0, sum2 = 0.0;
  size_t count = 0;
  for (const auto& traj : data) {
    for (size_t t = 0; t + 1 < traj.length(); ++t) {
      const double c = norm2(normalize_obs(policy, traj.observations[t + 1]),
                             normalize_obs(policy, traj.observations[t]));
      sum += c;
      sum2 += c * c;
      ++count;
    }
  }
  if (count == 0) return {0.0, 0.0};
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sum2 / static_cast<double>(count) - mean * mean);
  return {mean, std::sqrt(var)};
}

}  // namespace

Vec policy_confidence(const TreePolicy& policy, const Vec& h, const Vec& z_raw) {
  return forward_step(policy, h, z_raw).action_dist;
}

double path_entropy(const TreePolicy& policy, const Vec& h, const Vec& z_raw) {
  const StepOutput step = forward_step(policy, h, z_raw);
  double ent = 0.0;
  for (double p : step.leaf_path_probs) {
    if (p > 0.0) ent -= p * std::log(p);
  }
  return ent;
}

double leaf_entropy(const TreePolicy& policy) {
  double ent = 0.0;
  int leaves = 0;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (!policy.topo.nodes[id].is_leaf()) continue;
    const Vec dist = leaf_action_distribution(policy.leaf[id]);
    for (double p : dist) {
      if (p > 0.0) ent -= p * std::log(p);
    }
    ++leaves;
  }
  return leaves == 0 ? 0.0 : ent / static_cast<double>(leaves);
}

std::vector<StepFlag> detect_anomalies(const TreePolicy& policy, const Dataset& data, double threshold) {
  std::vector<StepFlag> flags;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto steps = rollout(policy, data[i], RolloutMode::Soft);
    for (size_t t = 0; t < steps.size(); ++t) {
      const int predicted = argmax(steps[t].action_dist);
      if (steps[t].action_dist[predicted] < threshold) continue;
      if (data[i].actions[t] == predicted) continue;
      StepFlag flag;
      flag.traj = static_cast<int>(i);
      flag.t = static_cast<int>(t);
      flag.anomalous = true;
      flag.corrected = t + 1 < steps.size() && data[i].actions[t + 1] == predicted;
      flags.push_back(flag);
    }
  }
  return flags;
}

std::vector<StepFlag> low_value_actions(const TreePolicy& policy, const Dataset& data,
                                        const std::vector<int>& active_actions) {
  const auto [mean_change, std_change] = change_stats(policy, data);
  const double bound = mean_change - std_change;
  std::vector<StepFlag> flags;
  if (bound <= 0.0) return flags;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].length() < 2) continue;
    const auto steps = rollout(policy, data[i], RolloutMode::Soft);
    for (size_t t = 0; t + 1 < steps.size(); ++t) {
      const int action = data[i].actions[t];
      if (std::find(active_actions.begin(), active_actions.end(), action) == active_actions.end()) {
        continue;
      }
      const Vec z_t = normalize_obs(policy, data[i].observations[t]);
      const Vec z_next = normalize_obs(policy, data[i].observations[t + 1]);
      const double realized = norm2(z_next, z_t);
      const double foreseen = norm2(steps[t].z_pred, z_t);
      if (realized < bound && foreseen < bound) {
        StepFlag flag;
        flag.traj = static_cast<int>(i);
        flag.t = static_cast<int>(t);
        flag.low_value = true;
        flags.push_back(flag);
      }
    }
  }
  return flags;
}

EvaluationReport evaluate(const TreePolicy& policy, const Dataset& data, double anomaly_threshold,
                          const std::vector<int>& active_actions) {
  if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
  EvaluationReport report;

  std::vector<std::vector<double>> scores(data.size());
  std::vector<std::vector<int>> labels(data.size());
  std::vector<std::vector<int>> hard_preds(data.size());
  std::vector<double> rel_err_sum(data.size(), 0.0);
  std::vector<int> rel_err_count(data.size(), 0);
  report.confidence.resize(data.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (long i = 0; i < static_cast<long>(data.size()); ++i) {
    const auto& traj = data[i];
    const auto soft = rollout(policy, traj, RolloutMode::Soft);
    const auto hard = rollout(policy, traj, RolloutMode::Hard);
    for (size_t t = 0; t < soft.size(); ++t) {
      if (policy.action_count == 2) {
        scores[i].push_back(soft[t].action_dist[1]);
        labels[i].push_back(traj.actions[t] != 0 ? 1 : 0);
      }
      hard_preds[i].push_back(argmax(hard[t].action_dist));
      report.confidence[i].push_back(soft[t].action_dist[argmax(soft[t].action_dist)]);
      if (t + 1 < soft.size()) {
        const Vec z_next = normalize_obs(policy, traj.observations[t + 1]);
        double denom = 0.0;
        for (double v : z_next) denom += v * v;
        denom = std::max(std::sqrt(denom), 1e-6);
        rel_err_sum[i] += norm2(z_next, soft[t].z_pred) / denom;
        ++rel_err_count[i];
      }
    }
  }

  std::vector<double> all_scores;
  std::vector<int> all_labels, all_preds, all_actual;
  double rel_sum = 0.0;
  int rel_count = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    all_scores.insert(all_scores.end(), scores[i].begin(), scores[i].end());
    all_labels.insert(all_labels.end(), labels[i].begin(), labels[i].end());
    all_preds.insert(all_preds.end(), hard_preds[i].begin(), hard_preds[i].end());
    for (int a : data[i].actions) all_actual.push_back(a);
    rel_sum += rel_err_sum[i];
    rel_count += rel_err_count[i];
  }
  report.accuracy = accuracy(all_preds, all_actual);
  if (policy.action_count == 2) {
    report.auroc = auroc(all_scores, all_labels);
    report.auprc = auprc(all_scores, all_labels);
    report.brier = brier(all_scores, all_labels);
  }
  report.evolution_relative_error = rel_count == 0 ? 0.0 : rel_sum / static_cast<double>(rel_count);
  report.anomalies = detect_anomalies(policy, data, anomaly_threshold);
  report.low_value = low_value_actions(policy, data, active_actions);
  return report;
}

}  // namespace rdt

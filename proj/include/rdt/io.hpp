#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rdt/analysis.hpp"
#include "rdt/growth.hpp"
#include "rdt/simplify.hpp"
#include "rdt/train.hpp"
#include "rdt/tree.hpp"

namespace rdt {

using json = nlohmann::json;

// Model file: JSON with dims, recurrence/gating tags, normalization stats,
// topology, per-node parameter arrays and free-form metadata.  Numbers are
// written with shortest round-trip precision, so serialize/deserialize is
// bit-exact on every parameter.
json model_to_json(const TreePolicy& policy, const json& metadata = json::object());
TreePolicy model_from_json(const json& doc);
void save_model(const std::string& path, const TreePolicy& policy, const json& metadata = json::object());
TreePolicy load_model(const std::string& path);
json model_metadata(const std::string& path);

// Trajectory files: one JSON object per line
// {"id":.., "observations":[[..],..], "actions":[..], "hidden":[..]?}.
void write_trajectories(const std::string& path, const Dataset& data);
Dataset read_trajectories(const std::string& path);

std::string recurrence_name(Recurrence r);
Recurrence recurrence_from_name(const std::string& name);
std::string gating_name(GatingKind g);
GatingKind gating_from_name(const std::string& name);

// DOT rendering of one per-timestep axis-aligned view.
std::string axis_tree_to_dot(const AxisAlignedTree& tree,
                             const std::vector<std::string>& feature_names = {},
                             const std::vector<std::string>& action_names = {});
json axis_tree_to_json(const AxisAlignedTree& tree,
                       const std::vector<std::string>& feature_names = {},
                       const std::vector<std::string>& action_names = {});

json report_to_json(const EvaluationReport& report);

// epoch,total,action,mse,kl,split,val_auroc
void write_loss_history_csv(const std::string& path, const std::vector<TrainHistoryRow>& history);
// One JSON object per line: {event, node, depth, val_before, val_after}.
void write_growth_log(const std::string& path, const std::vector<GrowthEvent>& log);
// traj,t,anomalous,corrected,low_value
void write_flags_csv(const std::string& path, const std::vector<StepFlag>& anomalies,
                     const std::vector<StepFlag>& low_value);

}  // namespace rdt

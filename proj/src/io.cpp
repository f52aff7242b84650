#include "rdt/io.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace rdt {

namespace {

constexpr int kFormatVersion = 1;

json vec_to_json(const Vec& v) { return json(v); }

Vec vec_from_json(const json& j) { return j.get<Vec>(); }

json mat_to_json(const Mat& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Mat mat_from_json(const json& j) {
  Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.data = j.at("data").get<Vec>();
  if (m.data.size() != static_cast<size_t>(m.rows) * m.cols) {
    throw DataError("matrix payload has wrong size");
  }
  return m;
}

std::string feature_label(int i, const std::vector<std::string>& names) {
  if (i >= 0 && i < static_cast<int>(names.size())) return names[i];
  return "z" + std::to_string(i);
}

std::string action_label(int k, const std::vector<std::string>& names) {
  if (k >= 0 && k < static_cast<int>(names.size())) return names[k];
  return "action " + std::to_string(k);
}

std::string escape_dot(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string format_threshold(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

std::string recurrence_name(Recurrence r) {
  switch (r) {
    case Recurrence::FixedSoftmax: return "fixed_softmax";
    case Recurrence::FixedTanh: return "fixed_tanh";
    case Recurrence::VecHist: return "vec_hist";
    case Recurrence::MatrixObs: return "matrix_obs";
    case Recurrence::RnnVecHist: return "rnn_vec_hist";
    case Recurrence::MatrixHist: return "matrix_hist";
    case Recurrence::Rnn: return "rnn";
  }
  return "fixed_tanh";
}

Recurrence recurrence_from_name(const std::string& name) {
  if (name == "fixed_softmax") return Recurrence::FixedSoftmax;
  if (name == "fixed_tanh") return Recurrence::FixedTanh;
  if (name == "vec_hist") return Recurrence::VecHist;
  if (name == "matrix_obs") return Recurrence::MatrixObs;
  if (name == "rnn_vec_hist") return Recurrence::RnnVecHist;
  if (name == "matrix_hist") return Recurrence::MatrixHist;
  if (name == "rnn") return Recurrence::Rnn;
  throw DataError("unknown recurrence model: " + name);
}

std::string gating_name(GatingKind g) {
  return g == GatingKind::Dense ? "dense" : "soft_and";
}

GatingKind gating_from_name(const std::string& name) {
  if (name == "dense") return GatingKind::Dense;
  if (name == "soft_and") return GatingKind::SoftAnd;
  throw DataError("unknown gating kind: " + name);
}

json model_to_json(const TreePolicy& policy, const json& metadata) {
  json nodes = json::array();
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    const TreeNode& node = policy.topo.nodes[id];
    json rec{{"id", id}};
    if (node.is_leaf()) {
      rec["kind"] = "leaf";
      const LeafParams& lf = policy.leaf[id];
      rec["theta_a"] = vec_to_json(lf.theta_a);
      rec["theta_h"] = vec_to_json(lf.theta_h);
      rec["theta_z"] = vec_to_json(lf.theta_z);
      if (!lf.theta_r.empty()) rec["theta_r"] = vec_to_json(lf.theta_r);
      if (!lf.theta_rm.empty()) rec["theta_rm"] = mat_to_json(lf.theta_rm);
      if (!lf.theta_f.empty()) rec["theta_f"] = mat_to_json(lf.theta_f);
    } else {
      rec["kind"] = "inner";
      rec["left"] = node.left;
      rec["right"] = node.right;
      const InnerParams& ip = policy.inner[id];
      rec["w"] = vec_to_json(ip.w);
      rec["b"] = ip.b;
      if (!ip.axis_b.empty()) rec["axis_b"] = vec_to_json(ip.axis_b);
    }
    nodes.push_back(std::move(rec));
  }
  return json{
      {"format_version", kFormatVersion},
      {"dims", {{"obs", policy.obs_dim}, {"actions", policy.action_count}, {"history", policy.history_dim}}},
      {"recurrence", recurrence_name(policy.recurrence)},
      {"gating", gating_name(policy.gating)},
      {"normalization", {{"mean", policy.norm.mean}, {"stddev", policy.norm.stddev}}},
      {"root", policy.topo.root},
      {"nodes", std::move(nodes)},
      {"metadata", metadata},
  };
}

TreePolicy model_from_json(const json& doc) {
  if (doc.at("format_version").get<int>() != kFormatVersion) {
    throw DataError("unsupported model format version");
  }
  TreePolicy policy;
  policy.obs_dim = doc.at("dims").at("obs").get<int>();
  policy.action_count = doc.at("dims").at("actions").get<int>();
  policy.history_dim = doc.at("dims").at("history").get<int>();
  policy.recurrence = recurrence_from_name(doc.at("recurrence").get<std::string>());
  policy.gating = gating_from_name(doc.at("gating").get<std::string>());
  policy.norm.mean = vec_from_json(doc.at("normalization").at("mean"));
  policy.norm.stddev = vec_from_json(doc.at("normalization").at("stddev"));
  policy.topo.root = doc.at("root").get<int>();

  const json& nodes = doc.at("nodes");
  policy.topo.nodes.resize(nodes.size());
  policy.inner.resize(nodes.size());
  policy.leaf.resize(nodes.size());
  for (const json& rec : nodes) {
    const int id = rec.at("id").get<int>();
    if (id < 0 || id >= static_cast<int>(nodes.size())) throw DataError("node id out of range");
    if (rec.at("kind").get<std::string>() == "leaf") {
      LeafParams lf;
      lf.theta_a = vec_from_json(rec.at("theta_a"));
      lf.theta_h = vec_from_json(rec.at("theta_h"));
      lf.theta_z = vec_from_json(rec.at("theta_z"));
      if (rec.contains("theta_r")) lf.theta_r = vec_from_json(rec.at("theta_r"));
      if (rec.contains("theta_rm")) lf.theta_rm = mat_from_json(rec.at("theta_rm"));
      if (rec.contains("theta_f")) lf.theta_f = mat_from_json(rec.at("theta_f"));
      policy.leaf[id] = std::move(lf);
    } else {
      policy.topo.nodes[id].left = rec.at("left").get<int>();
      policy.topo.nodes[id].right = rec.at("right").get<int>();
      InnerParams ip;
      ip.w = vec_from_json(rec.at("w"));
      ip.b = rec.at("b").get<double>();
      if (rec.contains("axis_b")) ip.axis_b = vec_from_json(rec.at("axis_b"));
      policy.inner[id] = std::move(ip);
    }
  }
  policy.topo.recompute_depths();
  policy.validate();
  return policy;
}

void save_model(const std::string& path, const TreePolicy& policy, const json& metadata) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path);
  out << model_to_json(policy, metadata).dump(2) << "\n";
}

TreePolicy load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read model file: " + path);
  json doc;
  in >> doc;
  return model_from_json(doc);
}

json model_metadata(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read model file: " + path);
  json doc;
  in >> doc;
  return doc.value("metadata", json::object());
}

void write_trajectories(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectory file: " + path);
  for (const auto& traj : data) {
    json rec{{"id", traj.id}, {"observations", traj.observations}, {"actions", traj.actions}};
    if (!traj.hidden.empty()) rec["hidden"] = traj.hidden;
    out << rec.dump() << "\n";
  }
}

Dataset read_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read trajectory file: " + path);
  Dataset data;
  std::string line;
  int line_no = 0;
  int dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Trajectory traj;
    traj.id = rec.value("id", line_no - 1);
    for (const auto& obs : rec.at("observations")) {
      traj.observations.push_back(obs.get<Vec>());
      if (dim < 0) dim = static_cast<int>(traj.observations.back().size());
      if (static_cast<int>(traj.observations.back().size()) != dim) {
        throw DataError("line " + std::to_string(line_no) + ": observation dimension " +
                        std::to_string(traj.observations.back().size()) + " does not match " +
                        std::to_string(dim));
      }
    }
    traj.actions = rec.at("actions").get<std::vector<int>>();
    if (rec.contains("hidden")) traj.hidden = rec.at("hidden").get<std::vector<int>>();
    if (traj.observations.empty() || traj.observations.size() != traj.actions.size()) {
      throw DataError("line " + std::to_string(line_no) + ": observations and actions must align");
    }
    data.push_back(std::move(traj));
  }
  if (data.empty()) throw DataError("trajectory file is empty: " + path);
  return data;
}

std::string axis_tree_to_dot(const AxisAlignedTree& tree, const std::vector<std::string>& feature_names,
                             const std::vector<std::string>& action_names) {
  std::ostringstream os;
  os << "digraph policy_t" << tree.timestep << " {\n";
  os << "  node [fontname=\"Helvetica\"];\n";
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const AxisNode& node = tree.nodes[i];
    if (node.is_leaf()) {
      std::ostringstream label;
      label << action_label(node.action, action_names) << "\\np=" << format_threshold(node.action_prob);
      os << "  n" << i << " [shape=ellipse, label=\"" << escape_dot(label.str()) << "\"];\n";
    } else {
      std::ostringstream label;
      if (node.degenerate) {
        label << "always " << (node.degenerate_right ? "yes" : "no") << " (no observation weight)";
      } else {
        label << feature_label(node.feature, feature_names) << (node.greater ? " > " : " < ")
              << format_threshold(node.threshold_raw);
      }
      os << "  n" << i << " [shape=box, label=\"" << escape_dot(label.str()) << "\"];\n";
      os << "  n" << i << " -> n" << node.left << " [label=\"no\", style=dashed];\n";
      os << "  n" << i << " -> n" << node.right << " [label=\"yes\"];\n";
    }
  }
  os << "}\n";
  return os.str();
}

json axis_tree_to_json(const AxisAlignedTree& tree, const std::vector<std::string>& feature_names,
                       const std::vector<std::string>& action_names) {
  json nodes = json::array();
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    const AxisNode& node = tree.nodes[i];
    json rec{{"id", static_cast<int>(i)}, {"source_node", node.source_node}};
    if (node.is_leaf()) {
      rec["kind"] = "action";
      rec["action"] = node.action;
      rec["label"] = action_label(node.action, action_names);
      rec["probability"] = node.action_prob;
      rec["mass"] = node.mass;
    } else {
      rec["kind"] = "test";
      rec["left"] = node.left;
      rec["right"] = node.right;
      if (node.degenerate) {
        rec["degenerate"] = true;
        rec["always_right"] = node.degenerate_right;
      } else {
        rec["feature"] = node.feature;
        rec["feature_label"] = feature_label(node.feature, feature_names);
        rec["threshold"] = node.threshold_raw;
        rec["threshold_normalized"] = node.threshold_norm;
        rec["direction"] = node.greater ? ">" : "<";
      }
    }
    nodes.push_back(std::move(rec));
  }
  return json{{"timestep", tree.timestep}, {"history", tree.history}, {"root", tree.root},
              {"nodes", std::move(nodes)}};
}

json report_to_json(const EvaluationReport& report) {
  json flags = json::array();
  for (const auto& f : report.anomalies) {
    flags.push_back({{"traj", f.traj}, {"t", f.t}, {"corrected", f.corrected}});
  }
  json low = json::array();
  for (const auto& f : report.low_value) {
    low.push_back({{"traj", f.traj}, {"t", f.t}});
  }
  json doc{
      {"accuracy", report.accuracy},
      {"brier", report.brier},
      {"evolution_relative_error", report.evolution_relative_error},
      {"confidence", report.confidence},
      {"anomalies", std::move(flags)},
      {"low_value", std::move(low)},
  };
  doc["auroc"] = report.auroc ? json(*report.auroc) : json(nullptr);
  doc["auprc"] = report.auprc ? json(*report.auprc) : json(nullptr);
  return doc;
}

void write_loss_history_csv(const std::string& path, const std::vector<TrainHistoryRow>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss history: " + path);
  out << "epoch,total,action,mse,kl,split,val_auroc\n";
  out.precision(10);
  for (const auto& row : history) {
    out << row.epoch << ',' << row.loss.total << ',' << row.loss.action_loss << ','
        << row.loss.evolution_mse << ',' << row.loss.evolution_kl << ',' << row.loss.split_loss << ','
        << row.val_metric << "\n";
  }
}

void write_growth_log(const std::string& path, const std::vector<GrowthEvent>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write growth log: " + path);
  for (const auto& event : log) {
    json rec{{"event", event.event},
             {"node", event.node},
             {"depth", event.depth},
             {"val_auroc_before", event.val_before},
             {"val_auroc_after", event.val_after}};
    out << rec.dump() << "\n";
  }
}

void write_flags_csv(const std::string& path, const std::vector<StepFlag>& anomalies,
                     const std::vector<StepFlag>& low_value) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write flags: " + path);
  out << "traj,t,anomalous,corrected,low_value\n";
  // Merge both flag streams onto one row per (traj, t).
  std::map<std::pair<int, int>, StepFlag> merged;
  for (const auto& f : anomalies) {
    auto& slot = merged[{f.traj, f.t}];
    slot.traj = f.traj;
    slot.t = f.t;
    slot.anomalous = true;
    slot.corrected = f.corrected;
  }
  for (const auto& f : low_value) {
    auto& slot = merged[{f.traj, f.t}];
    slot.traj = f.traj;
    slot.t = f.t;
    slot.low_value = true;
  }
  for (const auto& [key, f] : merged) {
    out << f.traj << ',' << f.t << ',' << (f.anomalous ? 1 : 0) << ',' << (f.corrected ? 1 : 0) << ','
        << (f.low_value ? 1 : 0) << "\n";
  }
}

}  // namespace rdt

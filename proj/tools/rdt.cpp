// Command-line front end: simulate demonstration data, train a recurrent
// tree policy, evaluate it, and export per-timestep explanations.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "rdt/analysis.hpp"
#include "rdt/growth.hpp"
#include "rdt/io.hpp"
#include "rdt/synth.hpp"

namespace {

using rdt::json;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct TrainOptions {
  std::string data_path;
  std::string config_path;
  std::string out_model = "model.json";
  std::string log_path;
  std::string growth_log_path;
  double val_frac = 0.1;
  uint64_t seed = 0;
  std::string recurrence = "fixed_tanh";
  std::string gating = "dense";
  int history_dim = 8;
  bool static_tree = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent decision tree policy learning"};
  app.require_subcommand(1);

  // ---- simulate ----
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic demonstration trajectories");
  rdt::SynthConfig synth_cfg;
  std::string sim_out = "trajectories.jsonl";
  simulate->add_option("--patients", synth_cfg.n_patients, "Number of trajectories");
  simulate->add_option("--horizon", synth_cfg.horizon, "Steps per trajectory");
  simulate->add_option("--noise-dims", synth_cfg.n_noise_dims, "Irrelevant observation dimensions");
  simulate->add_option("--seed", synth_cfg.seed, "Random seed");
  simulate->add_option("--out", sim_out, "Output trajectory file (JSON lines)");

  // ---- train ----
  auto* train = app.add_subcommand("train", "Grow and optimize a tree policy");
  TrainOptions topt;
  train->add_option("--data", topt.data_path, "Training trajectory file")->required();
  train->add_option("--val-frac", topt.val_frac, "Fraction of data held out for validation");
  train->add_option("--config", topt.config_path, "JSON file overriding training hyperparameters");
  train->add_option("--seed", topt.seed, "Random seed");
  train->add_option("--out-model", topt.out_model, "Where to write the trained model");
  train->add_option("--log", topt.log_path, "Loss history CSV");
  train->add_option("--growth-log", topt.growth_log_path, "Growth event log (JSON lines)");
  train->add_option("--recurrence", topt.recurrence,
                    "fixed_softmax|fixed_tanh|vec_hist|matrix_obs|rnn_vec_hist|matrix_hist|rnn");
  train->add_option("--gating", topt.gating, "dense|soft_and");
  train->add_option("--history-dim", topt.history_dim, "History embedding size");
  train->add_flag("--static", topt.static_tree, "Disable the history channel (static tree)");

  // ---- evaluate ----
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on a trajectory file");
  std::string eval_model, eval_data, eval_report = "report.json", eval_flags;
  double anomaly_threshold = 0.9;
  evaluate->add_option("--model", eval_model)->required();
  evaluate->add_option("--data", eval_data)->required();
  evaluate->add_option("--out-report", eval_report, "Evaluation report JSON");
  evaluate->add_option("--out-flags", eval_flags, "Per-step anomaly/low-value CSV");
  evaluate->add_option("--anomaly-threshold", anomaly_threshold, "Confidence for anomaly flags");

  // ---- explain ----
  auto* explain = app.add_subcommand("explain", "Export per-timestep axis-aligned trees");
  std::string exp_model, exp_data, exp_outdir = ".", feature_names_csv, action_names_csv;
  int exp_traj = 0;
  std::vector<int> exp_steps;
  bool evolution_adjust = false;
  bool no_prune = false;
  explain->add_option("--model", exp_model)->required();
  explain->add_option("--data", exp_data, "Trajectory file (history source and pruning data)")->required();
  explain->add_option("--trajectory-id", exp_traj, "Trajectory whose history to follow");
  explain->add_option("--timestep", exp_steps, "1-based timesteps (default: all)");
  explain->add_flag("--evolution-adjust", evolution_adjust, "Fill dropped dimensions with predictions");
  explain->add_flag("--no-prune", no_prune, "Skip axis-aligned pruning");
  explain->add_option("--out-dot", exp_outdir, "Output directory for DOT/JSON files");
  explain->add_option("--feature-names", feature_names_csv, "Comma-separated observation names");
  explain->add_option("--action-names", action_names_csv, "Comma-separated action names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const rdt::Dataset data = rdt::generate_dataset(synth_cfg);
      rdt::write_trajectories(sim_out, data);
      size_t steps = 0, treated = 0, prevalence = 0;
      for (const auto& traj : data) {
        for (size_t t = 0; t < traj.length(); ++t) {
          ++steps;
          treated += traj.actions[t];
          prevalence += traj.hidden.empty() ? 0 : traj.hidden[t];
        }
      }
      std::cout << "wrote " << data.size() << " trajectories to " << sim_out
                << " (action rate " << static_cast<double>(treated) / steps
                << ", disease prevalence " << static_cast<double>(prevalence) / steps << ")\n";
      return 0;
    }

    if (train->parsed()) {
      const rdt::Dataset data = rdt::read_trajectories(topt.data_path);

      rdt::TrainingConfig tcfg;
      rdt::GrowthConfig gcfg;
      if (!topt.config_path.empty()) {
        std::ifstream in(topt.config_path);
        if (!in) throw rdt::DataError("cannot read config: " + topt.config_path);
        json cfg;
        in >> cfg;
        tcfg.delta1 = cfg.value("delta1", tcfg.delta1);
        tcfg.delta2 = cfg.value("delta2", tcfg.delta2);
        tcfg.lambda = cfg.value("lambda", tcfg.lambda);
        tcfg.l1_weight = cfg.value("l1_weight", tcfg.l1_weight);
        tcfg.learning_rate = cfg.value("learning_rate", tcfg.learning_rate);
        tcfg.batch_size = cfg.value("batch_size", tcfg.batch_size);
        tcfg.patience = cfg.value("patience", tcfg.patience);
        tcfg.max_restarts = cfg.value("max_restarts", tcfg.max_restarts);
        tcfg.max_epochs = cfg.value("max_epochs", tcfg.max_epochs);
        tcfg.l1_ramp = cfg.value("l1_ramp", tcfg.l1_ramp);
        gcfg.max_depth = cfg.value("max_depth", gcfg.max_depth);
        gcfg.init_depth = cfg.value("init_depth", gcfg.init_depth);
        gcfg.prune_threshold = cfg.value("prune_threshold", gcfg.prune_threshold);
        if (cfg.contains("action_loss")) {
          const std::string v = cfg["action_loss"].get<std::string>();
          tcfg.action_loss = v == "mixture"  ? rdt::ActionLossKind::Mixture
                             : v == "max_leaf" ? rdt::ActionLossKind::MaxLeaf
                                               : rdt::ActionLossKind::PerLeaf;
        }
        topt.recurrence = cfg.value("recurrence", topt.recurrence);
        topt.gating = cfg.value("gating", topt.gating);
        topt.history_dim = cfg.value("history_dim", topt.history_dim);
      }

      rdt::ModelSpec spec;
      spec.history_dim = topt.static_tree ? 0 : topt.history_dim;
      spec.recurrence = rdt::recurrence_from_name(topt.recurrence);
      spec.gating = rdt::gating_from_name(topt.gating);

      // Validation split: shuffled by seed, last fraction held out.
      std::vector<int> order(data.size());
      for (size_t i = 0; i < data.size(); ++i) order[i] = static_cast<int>(i);
      rdt::Rng split_rng(rdt::sub_seed(topt.seed, 0x73706c69));
      split_rng.shuffle(order);
      const size_t n_val = std::max<size_t>(1, static_cast<size_t>(topt.val_frac * data.size()));
      rdt::Dataset train_set, val_set;
      for (size_t i = 0; i < order.size(); ++i) {
        (i + n_val < order.size() ? train_set : val_set).push_back(data[order[i]]);
      }

      tcfg.seed = topt.seed;
      const rdt::GrowthResult grown = rdt::grow(train_set, val_set, gcfg, tcfg, spec, topt.seed);

      const rdt::EvaluationReport train_report = rdt::evaluate(grown.policy, train_set);
      json metadata{{"seed", topt.seed},
                    {"val_metric", grown.val_metric},
                    {"restarts", grown.restarts_used},
                    {"train_accuracy", train_report.accuracy},
                    {"config",
                     {{"delta1", tcfg.delta1},
                      {"delta2", tcfg.delta2},
                      {"lambda", tcfg.lambda},
                      {"l1_weight", tcfg.l1_weight},
                      {"learning_rate", tcfg.learning_rate},
                      {"batch_size", tcfg.batch_size},
                      {"patience", tcfg.patience},
                      {"max_depth", gcfg.max_depth},
                      {"init_depth", gcfg.init_depth},
                      {"prune_threshold", gcfg.prune_threshold},
                      {"recurrence", topt.recurrence},
                      {"gating", topt.gating},
                      {"history_dim", spec.history_dim}}}};
      rdt::save_model(topt.out_model, grown.policy, metadata);
      if (!topt.log_path.empty()) rdt::write_loss_history_csv(topt.log_path, grown.loss_history);
      if (!topt.growth_log_path.empty()) rdt::write_growth_log(topt.growth_log_path, grown.log);
      std::cout << "model written to " << topt.out_model << " (validation " << grown.val_metric
                << ", leaves " << grown.policy.topo.leaf_count() << ", depth "
                << grown.policy.topo.depth() << ")\n";
      return 0;
    }

    if (evaluate->parsed()) {
      const rdt::TreePolicy policy = rdt::load_model(eval_model);
      const rdt::Dataset data = rdt::read_trajectories(eval_data);
      const rdt::EvaluationReport report = rdt::evaluate(policy, data, anomaly_threshold);
      std::ofstream out(eval_report);
      if (!out) throw rdt::DataError("cannot write report: " + eval_report);
      out << rdt::report_to_json(report).dump(2) << "\n";
      if (!eval_flags.empty()) rdt::write_flags_csv(eval_flags, report.anomalies, report.low_value);
      std::cout << "accuracy " << report.accuracy;
      if (report.auroc) std::cout << ", auroc " << *report.auroc;
      if (report.auprc) std::cout << ", auprc " << *report.auprc;
      std::cout << ", brier " << report.brier << "\n";
      return 0;
    }

    if (explain->parsed()) {
      const rdt::TreePolicy policy = rdt::load_model(exp_model);
      const rdt::Dataset data = rdt::read_trajectories(exp_data);
      const auto names_z = split_csv(feature_names_csv);
      const auto names_a = split_csv(action_names_csv);

      const rdt::Trajectory* traj = nullptr;
      for (const auto& t : data) {
        if (t.id == exp_traj) traj = &t;
      }
      if (!traj) throw rdt::DataError("trajectory id not found: " + std::to_string(exp_traj));

      std::vector<int> steps = exp_steps;
      if (steps.empty()) {
        for (size_t t = 1; t <= traj->length(); ++t) steps.push_back(static_cast<int>(t));
      }

      const rdt::FeatureRanges ranges = rdt::feature_ranges(data);
      std::vector<rdt::Vec> val_obs;
      for (const auto& t : data) {
        for (const auto& z : t.observations) val_obs.push_back(z);
      }

      const auto soft = rdt::rollout(policy, *traj, rdt::RolloutMode::Soft);
      std::filesystem::create_directories(exp_outdir);
      for (int t : steps) {
        if (t < 1 || t > static_cast<int>(traj->length())) {
          throw rdt::DataError("timestep out of range: " + std::to_string(t));
        }
        const rdt::Vec h = t == 1 ? policy.zero_history() : soft[t - 2].h_next;
        rdt::AxisAlignedTree tree;
        if (evolution_adjust && t > 1) {
          tree = rdt::to_axis_aligned_adjusted(policy, h, soft[t - 2].z_pred, t);
        } else {
          tree = rdt::to_axis_aligned(policy, h, t);
        }
        if (!no_prune) tree = rdt::prune_axis_aligned(tree, ranges, val_obs, 0.05);
        const std::string base = exp_outdir + "/policy_t" + std::to_string(t);
        {
          std::ofstream out(base + ".dot");
          if (!out) throw rdt::DataError("cannot write " + base + ".dot");
          out << rdt::axis_tree_to_dot(tree, names_z, names_a);
        }
        {
          std::ofstream out(base + ".json");
          out << rdt::axis_tree_to_json(tree, names_z, names_a).dump(2) << "\n";
        }
        std::cout << "wrote " << base << ".dot\n";
      }
      return 0;
    }
  } catch (const rdt::DataError& e) {
    print_error("data", e.what());
    return 2;
  } catch (const rdt::StructuralError& e) {
    print_error("structure", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}

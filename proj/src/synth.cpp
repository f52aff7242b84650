#include "rdt/synth.hpp"

#include "rdt/rng.hpp"

namespace rdt {

namespace {

Trajectory simulate_patient(const SynthConfig& config, int patient, Rng& rng) {
  Trajectory traj;
  traj.id = patient;
  traj.observations.reserve(config.horizon);
  traj.actions.reserve(config.horizon);
  traj.hidden.reserve(config.horizon);

  bool diseased = rng.bernoulli(config.p_init_diseased);
  std::vector<int> window;
  for (int t = 0; t < config.horizon; ++t) {
    const double p_pos = diseased ? config.test_precision : config.false_alarm;
    const int test = rng.bernoulli(p_pos) ? 1 : 0;

    Vec obs(config.obs_dim());
    obs[0] = static_cast<double>(test);
    for (int i = 0; i < config.n_noise_dims; ++i) obs[1 + i] = rng.normal();

    window.push_back(test);
    if (static_cast<int>(window.size()) > config.expert_window) window.erase(window.begin());
    const int action = expert_action(window);

    traj.observations.push_back(std::move(obs));
    traj.actions.push_back(action);
    traj.hidden.push_back(diseased ? 1 : 0);

    // Treatment applied now takes effect before the next observation; no
    // spontaneous state changes otherwise.
    if (diseased && action == 1 && rng.bernoulli(config.treatment_efficacy)) {
      diseased = false;
    }
  }
  return traj;
}

}  // namespace

int expert_action(const std::vector<int>& window) {
  if (window.empty() || window.size() > 3) throw DataError("expert window must hold 1 to 3 results");
  for (int test : window) {
    if (test != 0) return 1;
  }
  return 0;
}

Dataset generate_dataset_serial(const SynthConfig& config) {
  Dataset data(config.n_patients);
  for (int p = 0; p < config.n_patients; ++p) {
    Rng rng(sub_seed(config.seed, static_cast<uint64_t>(p)));
    data[p] = simulate_patient(config, p, rng);
  }
  return data;
}

Dataset generate_dataset(const SynthConfig& config) {
  Dataset data(config.n_patients);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int p = 0; p < config.n_patients; ++p) {
    Rng rng(sub_seed(config.seed, static_cast<uint64_t>(p)));
    data[p] = simulate_patient(config, p, rng);
  }
  return data;
}

}  // namespace rdt

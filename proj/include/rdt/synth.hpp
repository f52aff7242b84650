#pragma once

#include <cstdint>

#include "rdt/common.hpp"

namespace rdt {

// Partially observable simulator: a binary disease state observed through a
// noisy diagnostic test (dimension 0) plus independent standard-normal noise
// dimensions, with a scripted expert that treats on any positive test in the
// last `expert_window` steps.
struct SynthConfig {
  int n_patients = 1000;
  int horizon = 9;
  double p_init_diseased = 0.8;
  double treatment_efficacy = 0.4;  // cure probability per treated step
  double test_precision = 0.99;     // P(positive | diseased)
  double false_alarm = 0.05;        // P(positive | healthy)
  int n_noise_dims = 10;
  int expert_window = 3;
  uint64_t seed = 0;

  int obs_dim() const { return 1 + n_noise_dims; }
};

// Expert rule on the last (up to expert_window) test results, newest last:
// treat if any of them was positive.
int expert_action(const std::vector<int>& window);

// One trajectory per patient; per-patient sub-seeds keep generation
// reproducible regardless of parallelism.
Dataset generate_dataset(const SynthConfig& config);
Dataset generate_dataset_serial(const SynthConfig& config);

}  // namespace rdt

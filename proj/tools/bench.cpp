// Compares the serial reference batch-gradient kernel against the
// OpenMP-parallel one: verifies bitwise agreement, then times both.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rdt/grad.hpp"
#include "rdt/growth.hpp"
#include "rdt/synth.hpp"

using Clock = std::chrono::steady_clock;

static double time_ms(const std::function<void()>& fn, int reps) {
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

int main(int argc, char** argv) {
  int batch_size = 64;
  int reps = 20;
  if (argc > 1) batch_size = std::atoi(argv[1]);
  if (argc > 2) reps = std::atoi(argv[2]);

  rdt::SynthConfig synth;
  synth.n_patients = batch_size;
  synth.seed = 7;
  const rdt::Dataset batch = rdt::generate_dataset(synth);

  rdt::Rng rng(42);
  rdt::TreePolicy policy = rdt::initialize_tree(synth.obs_dim(), 2, 8, rdt::Recurrence::MatrixHist,
                                                rng, 4);
  policy.norm = rdt::compute_normalization(batch);

  rdt::TrainingConfig cfg;
  const auto serial = rdt::compute_gradients_serial(policy, batch, cfg);
  const auto parallel = rdt::compute_gradients(policy, batch, cfg);
  const rdt::Vec a = rdt::flatten_grads(policy, serial.grads);
  const rdt::Vec b = rdt::flatten_grads(policy, parallel.grads);
  bool identical = a.size() == b.size();
  for (size_t i = 0; identical && i < a.size(); ++i) identical = a[i] == b[i];
  std::printf("gradient agreement: %s (%zu parameters)\n", identical ? "bitwise" : "MISMATCH",
              a.size());
  if (!identical) return 1;

  const double t_serial =
      time_ms([&] { rdt::compute_gradients_serial(policy, batch, cfg); }, reps);
  const double t_parallel = time_ms([&] { rdt::compute_gradients(policy, batch, cfg); }, reps);
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("batch %d x %d steps\n", batch_size, synth.horizon);
  std::printf("serial:   %8.3f ms/batch\n", t_serial);
  std::printf("parallel: %8.3f ms/batch  (speedup %.2fx)\n", t_parallel, t_serial / t_parallel);
  return 0;
}

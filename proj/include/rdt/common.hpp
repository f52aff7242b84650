#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdt {

using Vec = std::vector<double>;

// Dense row-major matrix, only used for the matrix-valued leaf parameters.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  bool empty() const { return data.empty(); }
  size_t size() const { return data.size(); }
};

// Malformed tree structure, bad node ids, dimension mismatches.
struct StructuralError : std::runtime_error {
  explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data: non-finite observations, ragged files, invalid targets.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced during optimization.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double sigmoid(double s) {
  if (s >= 0.0) {
    return 1.0 / (1.0 + std::exp(-s));
  }
  const double e = std::exp(s);
  return e / (1.0 + e);
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// log with the probability clamped away from zero.
inline double clamped_log(double p, double floor = 1e-12) {
  return std::log(p < floor ? floor : p);
}

inline Vec softmax(const Vec& logits) {
  Vec out(logits.size());
  double mx = logits.empty() ? 0.0 : logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// One demonstrated sequence of (observation, action) pairs.  `hidden` keeps
// the simulator's latent state for diagnostics and may be empty.
struct Trajectory {
  int id = 0;
  std::vector<Vec> observations;
  std::vector<int> actions;
  std::vector<int> hidden;

  size_t length() const { return observations.size(); }
};

using Dataset = std::vector<Trajectory>;

inline int infer_obs_dim(const Dataset& data) {
  if (data.empty() || data.front().observations.empty()) {
    throw DataError("cannot infer observation dimension from an empty dataset");
  }
  return static_cast<int>(data.front().observations.front().size());
}

inline int infer_action_count(const Dataset& data) {
  int mx = -1;
  for (const auto& traj : data) {
    for (int a : traj.actions) mx = std::max(mx, a);
  }
  if (mx < 0) throw DataError("cannot infer action count from an empty dataset");
  return mx + 1;
}

}  // namespace rdt

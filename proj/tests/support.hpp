#pragma once

#include "pulsid/model.hpp"
#include "pulsid/numerics.hpp"
#include "pulsid/regressor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace pulsid::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Noise-free data with impulses on sampling instants. The first impulse sits
/// on the first sample, later ones follow after `min_gap` plus up to `extra_gap`
/// samples, and `tail` samples close the record.
struct SparseData {
  SystemParams params;
  ImpulseTrain train;
  std::vector<double> times;
  SampledSignal y;
  std::vector<bool> on_support; ///< per theta index; index 0 (x2_init) is false
};

struct SparseOptions {
  double dt = 0.25;
  std::size_t n_impulses = 3;
  std::size_t first_index = 0;
  std::size_t min_gap = 4;
  std::size_t extra_gap = 16;
  std::size_t tail = 20;
  Interval b1{0.4, 1.4};
  Interval gap{0.3, 1.3};
  Interval weight{0.1, 1.0};
};

inline SparseData sparse_data(std::mt19937_64& rng, const SparseOptions& o = {}) {
  SparseData s;
  s.params.b1 = uniform(rng, o.b1.lo, o.b1.hi);
  s.params.b2 = s.params.b1 + uniform(rng, o.gap.lo, o.gap.hi);
  std::size_t idx = o.first_index;
  std::vector<std::size_t> at;
  for (std::size_t k = 0; k < o.n_impulses; ++k) {
    at.push_back(idx);
    idx += o.min_gap + static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(o.extra_gap) + 1.0));
  }
  const std::size_t n = at.back() + o.tail + 1;
  for (std::size_t i = 0; i < n; ++i) s.times.push_back(o.dt * static_cast<double>(i));
  for (auto i : at) s.train.impulses.push_back({s.times[i], uniform(rng, o.weight.lo, o.weight.hi)});
  s.y = simulate_output(s.params, s.train, 0.0, s.times);
  s.on_support.assign(n, false);
  for (auto i : at) s.on_support[i + 1] = true;
  return s;
}

/// Exhaustive NNLS: every subset of the constrained coordinates is tried as
/// the passive set; the best feasible unconstrained fit wins.
inline Eigen::VectorXd brute_force_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        const std::vector<bool>& free) {
  const auto n = a.cols();
  std::vector<Eigen::Index> constrained, always;
  for (Eigen::Index j = 0; j < n; ++j) (free[j] ? always : constrained).push_back(j);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = Eigen::VectorXd::Zero(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << constrained.size()); ++mask) {
    std::vector<Eigen::Index> cols = always;
    for (std::size_t k = 0; k < constrained.size(); ++k)
      if (mask >> k & 1U) cols.push_back(constrained[k]);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (!cols.empty()) {
      Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(cols[c]);
      const Eigen::VectorXd xs = sub.colPivHouseholderQr().solve(b);
      bool feasible = true;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        x(cols[c]) = xs(static_cast<Eigen::Index>(c));
        if (!free[cols[c]] && xs(static_cast<Eigen::Index>(c)) < 0.0) feasible = false;
      }
      if (!feasible) continue;
    }
    const double r = (b - a * x).squaredNorm();
    if (r < best) {
      best = r;
      best_x = x;
    }
  }
  return best_x;
}

/// Sign changes of f along the grid, ignoring exact zeros.
inline std::size_t sign_changes(const std::vector<double>& f) {
  std::size_t n = 0;
  int last = 0;
  for (double v : f) {
    const int s = (v > 0.0) - (v < 0.0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++n;
    last = s;
  }
  return n;
}

} // namespace pulsid::testing

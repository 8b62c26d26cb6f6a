#pragma once

// Second-order compartmental plant driven by a positively weighted impulse
// train:
//
//   x1' = -b1 x1 + sum_k d_k delta(t - tau_k)
//   x2' = g1 x1 - b2 x2,        y = x2,   g1 = 1
//
// Closed-form sampled output plus a fixed-step RK4 reference integrator.

#include "pulsid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pulsid {

struct SystemParams {
  double b1 = 0.0;
  double b2 = 0.0;
  static constexpr double g1 = 1.0;

  bool admissible() const noexcept {
    return std::isfinite(b1) && std::isfinite(b2) && b1 > 0.0 && b2 > 0.0 && b1 < b2;
  }

  void validate() const {
    if (!admissible())
      throw ContractError("system parameters require 0 < b1 < b2 (got b1=" +
                          std::to_string(b1) + ", b2=" + std::to_string(b2) + ")");
  }
};

struct Impulse {
  double tau = 0.0;
  double d = 0.0;

  friend bool operator==(const Impulse&, const Impulse&) = default;
};

/// Ordered (tau, d) pairs. Ground-truth trains carry strictly positive weights;
/// intermediate estimates may hold zeros.
struct ImpulseTrain {
  std::vector<Impulse> impulses;

  std::size_t size() const noexcept { return impulses.size(); }
  bool empty() const noexcept { return impulses.empty(); }
  auto begin() const noexcept { return impulses.begin(); }
  auto end() const noexcept { return impulses.end(); }

  void validate(bool require_positive = false) const {
    for (std::size_t i = 0; i < impulses.size(); ++i) {
      const auto& imp = impulses[i];
      if (!std::isfinite(imp.tau) || !std::isfinite(imp.d))
        throw DomainError("impulse " + std::to_string(i) + " is not finite");
      if (imp.d < 0.0 || (require_positive && imp.d <= 0.0))
        throw ContractError("impulse " + std::to_string(i) + " has nonpositive weight");
      if (i > 0 && !(impulses[i - 1].tau < imp.tau))
        throw ContractError("impulse times must be strictly increasing");
    }
  }

  friend bool operator==(const ImpulseTrain&, const ImpulseTrain&) = default;
};

struct SampledSignal {
  std::vector<double> times;
  std::vector<double> values;
  std::optional<double> sigma;

  std::size_t size() const noexcept { return times.size(); }

  void validate() const {
    if (times.size() != values.size())
      throw ContractError("sample times and values differ in length");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!std::isfinite(times[i]) || !std::isfinite(values[i]))
        throw DomainError("sample " + std::to_string(i) + " is not finite");
      if (i > 0 && !(times[i - 1] < times[i]))
        throw ContractError("sample times must be strictly increasing");
    }
  }
};

struct StateVector {
  double x1 = 0.0;
  double x2 = 0.0;
};

namespace detail {

inline void require_increasing(std::span<const double> times) {
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i - 1] < times[i]))
      throw ContractError("sample times must be strictly increasing");
}

} // namespace detail

/// Rates closer than this (relative) are treated as equal in kernel_z.
inline constexpr double kDegenerateRateTol = 1e-9;

/// Impulse response of x2: (e^{-b2 t} - e^{-b1 t}) / (b1 - b2) for t > 0, else 0.
/// Symmetric in (b1, b2). Falls back to the limit t e^{-b t} for b1 ~ b2.
inline double kernel_z(double b1, double b2, double t) {
  if (!std::isfinite(b1) || !std::isfinite(b2) || !std::isfinite(t))
    throw DomainError("kernel_z: non-finite argument");
  if (t <= 0.0) return 0.0;
  const double diff = b1 - b2;
  if (std::abs(diff) < kDegenerateRateTol * std::max(std::abs(b1), std::abs(b2))) {
    const double b = 0.5 * (b1 + b2);
    return t * std::exp(-b * t);
  }
  // e^{-b2 t} - e^{-b1 t} = e^{-b1 t} expm1((b1 - b2) t); no cancellation for close rates.
  return std::exp(-b1 * t) * std::expm1(diff * t) / diff;
}

/// y(t_i) = x2_init e^{-b2 (t_i - t_1)} + sum_k d_k z(t_i - tau_k).
/// An impulse exactly at t_i does not contribute to y(t_i).
inline SampledSignal simulate_output(const SystemParams& params, const ImpulseTrain& train,
                                     double x2_init, std::span<const double> times) {
  params.validate();
  detail::require_increasing(times);
  SampledSignal out;
  out.times.assign(times.begin(), times.end());
  out.values.resize(times.size());
  if (times.empty()) return out;
  const double t1 = times.front();
  for (std::size_t i = 0; i < times.size(); ++i) {
    double y = x2_init * std::exp(-params.b2 * (times[i] - t1));
    for (const auto& imp : train)
      y += SystemParams::g1 * imp.d * kernel_z(params.b1, params.b2, times[i] - imp.tau);
    out.values[i] = y;
  }
  return out;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
};

namespace detail {

inline StateVector rk4_step(const SystemParams& p, StateVector x, double h) {
  auto f = [&](const StateVector& s) {
    return StateVector{-p.b1 * s.x1, SystemParams::g1 * s.x1 - p.b2 * s.x2};
  };
  const auto k1 = f(x);
  const auto k2 = f({x.x1 + 0.5 * h * k1.x1, x.x2 + 0.5 * h * k1.x2});
  const auto k3 = f({x.x1 + 0.5 * h * k2.x1, x.x2 + 0.5 * h * k2.x2});
  const auto k4 = f({x.x1 + h * k3.x1, x.x2 + h * k3.x2});
  return {x.x1 + h / 6.0 * (k1.x1 + 2.0 * k2.x1 + 2.0 * k3.x1 + k4.x1),
          x.x2 + h / 6.0 * (k1.x2 + 2.0 * k2.x2 + 2.0 * k3.x2 + k4.x2)};
}

} // namespace detail

/// Fixed-step RK4 integration from t_start to t_end. Steps are split at impulse
/// times and at every requested sample time, so each of those lands exactly on
/// a recorded point. At an impulse time two points are recorded: the state
/// before the jump, then the state after x1 += d.
inline Trajectory simulate_ode(const SystemParams& params, const ImpulseTrain& train,
                               StateVector x0, double t_start, double t_end, double dt,
                               std::span<const double> sample_times = {}) {
  params.validate();
  train.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("simulate_ode: dt must be positive");
  if (!(t_end >= t_start)) throw ContractError("simulate_ode: t_end before t_start");

  std::vector<double> breaks;
  for (const auto& imp : train)
    if (imp.tau >= t_start && imp.tau <= t_end) breaks.push_back(imp.tau);
  for (double t : sample_times)
    if (t >= t_start && t <= t_end) breaks.push_back(t);
  breaks.push_back(t_end);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  Trajectory traj;
  StateVector x = x0;
  double t = t_start;
  std::size_t next_impulse = 0;
  while (next_impulse < train.size() && train.impulses[next_impulse].tau < t_start) ++next_impulse;

  auto apply_jumps = [&] {
    while (next_impulse < train.size() && train.impulses[next_impulse].tau == t) {
      traj.times.push_back(t);
      traj.states.push_back(x);
      x.x1 += train.impulses[next_impulse].d;
      ++next_impulse;
    }
  };

  apply_jumps();
  traj.times.push_back(t);
  traj.states.push_back(x);
  for (double target : breaks) {
    if (target <= t) continue;
    const double span = target - t;
    const auto n = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
    const double h = span / static_cast<double>(std::max<std::size_t>(n, 1));
    for (std::size_t s = 0; s < std::max<std::size_t>(n, 1); ++s) {
      x = detail::rk4_step(params, x, h);
      t = (s + 1 == std::max<std::size_t>(n, 1)) ? target : t + h;
      traj.times.push_back(t);
      traj.states.push_back(x);
    }
    if (next_impulse < train.size() && train.impulses[next_impulse].tau == t) {
      traj.times.pop_back();
      traj.states.pop_back();
      apply_jumps();
      traj.times.push_back(t);
      traj.states.push_back(x);
    }
  }
  return traj;
}

/// x2 read off an ODE trajectory at the given times (pre-jump value at impulse times).
inline std::vector<double> sample_trajectory(const Trajectory& traj, std::span<const double> times) {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t);
    if (it == traj.times.end() || *it != t)
      throw ContractError("sample time not on trajectory");
    out.push_back(traj.states[static_cast<std::size_t>(it - traj.times.begin())].x2);
  }
  return out;
}

/// Adds i.i.d. N(0, sigma^2) noise. Deterministic in seed.
inline SampledSignal add_noise(const SampledSignal& signal, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ContractError("add_noise: sigma must be >= 0");
  SampledSignal out = signal;
  out.sigma = sigma;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.values) v += noise(rng);
  return out;
}

} // namespace pulsid

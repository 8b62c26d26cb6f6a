#pragma once

// Synthetic-data experiments: randomized plants and three-impulse trains,
// Gaussian measurement noise, and accuracy metrics for the estimators.

#include "pulsid/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <tuple>
#include <string>
#include <vector>

namespace pulsid {

enum class Regime : std::uint8_t { A, B };

inline const char* to_string(Regime r) { return r == Regime::A ? "A" : "B"; }

struct ExperimentConfig {
  Regime regime = Regime::A;
  std::size_t n_realizations = 100;
  std::uint64_t seed = 1;

  Interval b1_true_range{0.4, 1.4};
  Interval b2_minus_b1_range{0.3, 1.3};
  Interval weight_range{0.1, 1.0};
  Interval delta_tau_range{1.0, 5.0};
  std::size_t n_impulses = 3;
  double sigma = 2e-4;
  double delta_t = 0.25;
  double tau_end = 5.0;

  double delta_b = 0.02;
  double d_min_frac = 0.05;
  double pi_frac = 0.5;

  static ExperimentConfig regime_a() { return {}; }

  static ExperimentConfig regime_b() {
    ExperimentConfig c;
    c.regime = Regime::B;
    c.sigma = 0.0015;
    c.delta_t = 0.5;
    return c;
  }

  void validate() const {
    if (!(sigma >= 0.0)) throw ContractError("experiment: sigma must be >= 0");
    if (!(delta_t > 0.0)) throw ContractError("experiment: delta_t must be positive");
    if (!(tau_end >= 0.0)) throw ContractError("experiment: tau_end must be >= 0");
    if (n_impulses == 0) throw ContractError("experiment: need at least one impulse");
    if (!(b1_true_range.lo > 0.0) || !(b2_minus_b1_range.lo > 0.0) || !(weight_range.lo > 0.0) ||
        !(delta_tau_range.lo > 0.0))
      throw ContractError("experiment: distribution ranges must be positive");
    for (auto r : {b1_true_range, b2_minus_b1_range, weight_range, delta_tau_range})
      if (r.hi < r.lo) throw ContractError("experiment: empty distribution range");
  }
};

struct Truth {
  SystemParams params;
  ImpulseTrain train;
};

struct Realization {
  Truth truth;
  SampledSignal clean;
  SampledSignal data;
};

/// Independent stream per (seed, index); any realization can be regenerated alone.
inline std::mt19937_64 realization_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

/// First sample at t = 0; impulse i at the cumulative sum of the Delta tau draws;
/// samples every delta_t up to tau_end past the last impulse; zero initial state.
inline Realization generate_realization(const ExperimentConfig& cfg, std::uint64_t index) {
  cfg.validate();
  auto rng = realization_stream(cfg.seed, index);
  auto uniform = [&](Interval r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };

  Realization out;
  out.truth.params.b1 = uniform(cfg.b1_true_range);
  out.truth.params.b2 = out.truth.params.b1 + uniform(cfg.b2_minus_b1_range);
  double tau = 0.0;
  for (std::size_t i = 0; i < cfg.n_impulses; ++i) {
    tau += uniform(cfg.delta_tau_range);
    out.truth.train.impulses.push_back({tau, uniform(cfg.weight_range)});
  }
  const double horizon = tau + cfg.tau_end;
  std::vector<double> times;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * cfg.delta_t;
    if (t > horizon + 1e-12) break;
    times.push_back(t);
  }
  out.clean = simulate_output(out.truth.params, out.truth.train, 0.0, times);
  out.clean.sigma = 0.0;
  out.data = out.clean;
  out.data.sigma = cfg.sigma;
  if (cfg.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.sigma);
    for (double& v : out.data.values) v += noise(rng);
  }
  return out;
}

struct ImpulseMatching {
  struct Pair {
    std::size_t estimated = 0;
    std::size_t truth = 0;
  };
  std::vector<Pair> pairs;
  std::size_t n_extra = 0;  ///< estimated impulses without a partner
  std::size_t n_missed = 0; ///< true impulses without a partner
};

/// Greedy one-to-one assignment: closest pairs in time first, within +-window.
inline ImpulseMatching match_impulses(const ImpulseTrain& estimated, const ImpulseTrain& truth, double window) {
  if (!(window > 0.0)) throw ContractError("match_impulses: window must be positive");
  struct Candidate {
    double gap;
    std::size_t e, t;
  };
  std::vector<Candidate> cands;
  for (std::size_t e = 0; e < estimated.size(); ++e)
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double gap = std::abs(estimated.impulses[e].tau - truth.impulses[t].tau);
      if (gap <= window) cands.push_back({gap, e, t});
    }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.gap, a.e, a.t) < std::tie(b.gap, b.e, b.t);
  });
  std::vector<bool> used_e(estimated.size(), false), used_t(truth.size(), false);
  ImpulseMatching m;
  for (const auto& c : cands) {
    if (used_e[c.e] || used_t[c.t]) continue;
    used_e[c.e] = used_t[c.t] = true;
    m.pairs.push_back({c.e, c.t});
  }
  std::sort(m.pairs.begin(), m.pairs.end(), [](auto a, auto b) { return a.truth < b.truth; });
  m.n_extra = estimated.size() - m.pairs.size();
  m.n_missed = truth.size() - m.pairs.size();
  return m;
}

/// Minimum Euclidean distance from a point to a polyline (segments included).
inline double distance_to_curve(ParamPoint p, const BoundaryCurve& curve) {
  if (curve.empty()) throw ContractError("distance_to_curve: empty curve");
  double best = distance(p, curve.points.front());
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto a = curve.points[i - 1], b = curve.points[i];
    const double vx = b.b1 - a.b1, vy = b.b2 - a.b2;
    const double len2 = vx * vx + vy * vy;
    double s = len2 > 0.0 ? ((p.b1 - a.b1) * vx + (p.b2 - a.b2) * vy) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    best = std::min(best, distance(p, {a.b1 + s * vx, a.b2 + s * vy}));
  }
  return best;
}

struct RealizationRecord {
  std::size_t index = 0;
  double b1_true = 0.0;
  double b2_true = 0.0;
  std::size_t n_samples = 0;
  std::string status = "ok";
  double b1_hat = std::numeric_limits<double>::quiet_NaN();
  double b2_hat = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_true = 0;
  std::size_t n_estimated = 0;
  std::size_t n_matched = 0;
  std::size_t n_extra = 0;
  double gamma_p_distance = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> weight_errors;
  std::vector<double> time_errors;

  bool ok() const { return status == "ok"; }
};

struct ExperimentReport {
  Regime regime = Regime::A;
  std::size_t n_realizations = 0;
  std::size_t n_failures = 0;
  double rmse_b1 = std::numeric_limits<double>::quiet_NaN();
  double rmse_b2 = std::numeric_limits<double>::quiet_NaN();
  double rmse_d = std::numeric_limits<double>::quiet_NaN();
  double rmse_tau = std::numeric_limits<double>::quiet_NaN();
  double frac_correct_count = std::numeric_limits<double>::quiet_NaN();
  /// Mean unmatched estimated impulses among realizations with a wrong count.
  double mean_extra_impulses = std::numeric_limits<double>::quiet_NaN();
  double mean_gamma_p_distance = std::numeric_limits<double>::quiet_NaN();
  std::vector<RealizationRecord> records;
};

using GridPolicy = std::function<GridSpec(const Truth&, std::size_t n_samples)>;

/// Truth-relative ranges, delta_b, d_min fraction and Pi = pi_frac * K from the config.
inline GridPolicy default_grid_policy(const ExperimentConfig& cfg) {
  return [cfg](const Truth& truth, std::size_t k) {
    GridSpec g = truth_relative_grid(truth.params.b1, truth.params.b2);
    g.delta_b = cfg.delta_b;
    g.d_min_frac = cfg.d_min_frac;
    g.pi = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.pi_frac * static_cast<double>(k)));
    return g;
  };
}

inline RealizationRecord run_realization(const ExperimentConfig& cfg, const GridPolicy& policy, std::size_t index) {
  const auto real = generate_realization(cfg, index);
  RealizationRecord rec;
  rec.index = index;
  rec.b1_true = real.truth.params.b1;
  rec.b2_true = real.truth.params.b2;
  rec.n_samples = real.data.size();
  rec.n_true = real.truth.train.size();
  const GridSpec grid = policy(real.truth, real.data.size());
  const ParamPoint truth{rec.b1_true, rec.b2_true};
  try {
    if (cfg.regime == Regime::A) {
      EstimatorConfig ec;
      ec.mode = EstimationMode::LowNoise;
      ec.grid = grid;
      const auto est = run_estimation(real.data, ec);
      rec.b1_hat = *est.b1_hat;
      rec.b2_hat = *est.b2_hat;
      rec.n_estimated = est.impulses.size();
      const auto m = match_impulses(est.impulses, real.truth.train, cfg.delta_t);
      rec.n_matched = m.pairs.size();
      rec.n_extra = m.n_extra;
      for (const auto& p : m.pairs) {
        rec.weight_errors.push_back(est.impulses.impulses[p.estimated].d - real.truth.train.impulses[p.truth].d);
        rec.time_errors.push_back(est.impulses.impulses[p.estimated].tau - real.truth.train.impulses[p.truth].tau);
      }
    } else {
      const auto est = estimate_gamma_p_hat(real.data, grid);
      if (est.curve.empty()) throw EstimationFailure("high-noise estimator: no b2 row has an eligible node");
      rec.gamma_p_distance = distance_to_curve(truth, est.curve);
    }
  } catch (const EstimationFailure& e) {
    rec.status = std::string("estimation-failure: ") + e.what();
  } catch (const SolverFailure& e) {
    rec.status = std::string("solver-failure: ") + e.what();
  }
  return rec;
}

/// Realizations run in parallel (each single-threaded); the reduction is
/// sequential in index order, so the report does not depend on `workers`.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const GridPolicy& policy = {},
                                       std::size_t workers = 1) {
  cfg.validate();
  const GridPolicy grid_policy = policy ? policy : default_grid_policy(cfg);
  ExperimentReport rep;
  rep.regime = cfg.regime;
  rep.n_realizations = cfg.n_realizations;
  rep.records.resize(cfg.n_realizations);
  parallel_for(cfg.n_realizations, workers,
               [&](std::size_t i) { rep.records[i] = run_realization(cfg, grid_policy, i); });

  auto rms = [](double sum_sq, std::size_t n) {
    return n ? std::sqrt(sum_sq / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
  };
  double sq_b1 = 0.0, sq_b2 = 0.0, sq_d = 0.0, sq_tau = 0.0, sum_dist = 0.0, extra_sum = 0.0;
  std::size_t n_ok = 0, n_pairs = 0, n_correct = 0, n_wrong = 0;
  for (const auto& r : rep.records) {
    if (!r.ok()) {
      ++rep.n_failures;
      continue;
    }
    ++n_ok;
    if (cfg.regime == Regime::A) {
      sq_b1 += (r.b1_hat - r.b1_true) * (r.b1_hat - r.b1_true);
      sq_b2 += (r.b2_hat - r.b2_true) * (r.b2_hat - r.b2_true);
      for (double e : r.weight_errors) sq_d += e * e;
      for (double e : r.time_errors) sq_tau += e * e;
      n_pairs += r.weight_errors.size();
      if (r.n_estimated == r.n_true) {
        ++n_correct;
      } else {
        ++n_wrong;
        extra_sum += static_cast<double>(r.n_extra);
      }
    } else {
      sum_dist += r.gamma_p_distance;
    }
  }
  if (cfg.regime == Regime::A) {
    rep.rmse_b1 = rms(sq_b1, n_ok);
    rep.rmse_b2 = rms(sq_b2, n_ok);
    rep.rmse_d = rms(sq_d, n_pairs);
    rep.rmse_tau = rms(sq_tau, n_pairs);
    if (n_ok) rep.frac_correct_count = static_cast<double>(n_correct) / static_cast<double>(n_ok);
    rep.mean_extra_impulses = n_wrong ? extra_sum / static_cast<double>(n_wrong) : 0.0;
  } else if (n_ok) {
    rep.mean_gamma_p_distance = sum_dist / static_cast<double>(n_ok);
  }
  return rep;
}

} // namespace pulsid

#pragma once

#include "pulsid/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

namespace pulsid {

/// Grid for the residual-surface estimators. b1 runs over [lo, hi), b2 over
/// [lo, hi]; nodes with b1 >= b2 are skipped.
struct GridSpec {
  Interval b1_range;
  Interval b2_range;
  double delta_b = 0.02;
  /// d_min = d_min_frac * (mean positive weight at the node).
  double d_min_frac = 0.05;
  /// Max impulse count; unset means half the number of samples.
  std::optional<std::size_t> pi{};

  std::size_t pi_for(std::size_t k) const { return pi.value_or(k / 2); }

  void validate() const {
    if (!(delta_b > 0.0)) throw ContractError("grid: delta_b must be positive");
    if (pi && *pi < 1) throw ContractError("grid: impulse bound must be >= 1");
    if (!(b1_range.lo > 0.0) || b1_range.hi < b1_range.lo || b2_range.hi < b2_range.lo)
      throw ContractError("grid: invalid parameter ranges");
  }

  std::vector<double> b1_axis() const { return axis_points(b1_range, delta_b, false); }
  std::vector<double> b2_axis() const { return axis_points(b2_range, delta_b, true); }
};

/// Truth-relative ranges used for the Monte Carlo experiments.
inline GridSpec truth_relative_grid(double b1_true, double b2_true) {
  GridSpec g;
  g.b1_range = {0.5 * b1_true, 0.5 * (b1_true + b2_true)};
  g.b2_range = {0.5 * (b1_true + b2_true), 1.5 * b2_true};
  return g;
}

/// Mean of the strictly positive impulse weights (x2(t_1) excluded); 0 if none.
inline double mean_positive_weight(const ThetaVector& theta) {
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index j = 1; j < theta.size(); ++j)
    if (theta.values(j) > 0.0) {
      sum += theta.values(j);
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline std::size_t count_above(const ThetaVector& theta, double d_min) {
  std::size_t n = 0;
  for (Eigen::Index j = 1; j < theta.size(); ++j)
    if (theta.values(j) > d_min) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Newton surrogate N_f = -f / f'. For f = c1 (x - x*)^2 + c2 the minimum over
// x < x* is sqrt(c2/c1), attained at x* - sqrt(c2/c1), so argmin + min = x*.

struct NewtonStep {
  std::size_t index = 0;
  double x_argmin = 0.0;
  double min_value = 0.0;
  double x_hat = 0.0;
};

/// Forward differences; the last point uses the backward difference.
inline std::vector<double> finite_difference(std::span<const double> x, std::span<const double> f) {
  const std::size_t n = x.size();
  std::vector<double> d(n, std::numeric_limits<double>::quiet_NaN());
  if (n < 2) return d;
  for (std::size_t i = 0; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i]) / (x[i + 1] - x[i]);
  d[n - 1] = (f[n - 1] - f[n - 2]) / (x[n - 1] - x[n - 2]);
  return d;
}

/// Minimizes N_f over points with allowed[i] and N_f > 0, then steps by the minimum.
inline std::optional<NewtonStep> newton_step_minimize(std::span<const double> x, std::span<const double> f,
                                                      std::span<const bool> allowed) {
  if (x.size() != f.size() || x.size() != allowed.size()) throw ContractError("newton_step_minimize: size mismatch");
  const auto df = finite_difference(x, f);
  std::optional<NewtonStep> best;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!allowed[i] || !(df[i] < 0.0)) continue;
    const double n = -f[i] / df[i];
    if (!(n > 0.0)) continue;
    if (!best || n < best->min_value) best = NewtonStep{i, x[i], n, x[i] + n};
  }
  return best;
}

// ---------------------------------------------------------------------------

struct NgNode {
  ParamPoint at;
  bool valid = false;       ///< b1 < b2
  double g = std::numeric_limits<double>::quiet_NaN();
  double dg_db1 = std::numeric_limits<double>::quiet_NaN();
  double n_g = std::numeric_limits<double>::quiet_NaN();
  double d_min = 0.0;
  std::size_t n_impulses = 0; ///< #{d_k > d_min}
  bool eligible = false;
};

/// Residual surface g and Newton surrogate N_g on a grid; node (i, j) for
/// b1 index i and b2 index j is stored at j * b1s.size() + i.
struct NgSurface {
  std::vector<double> b1s;
  std::vector<double> b2s;
  std::vector<NgNode> nodes;
  std::size_t impulse_bound = 0;

  const NgNode& node(std::size_t i, std::size_t j) const { return nodes[j * b1s.size() + i]; }
};

namespace detail {

// Fills rows of g along b1 (warm-starting NNLS from the previous node), then
// derivatives and eligibility.
inline void fill_row(NgSurface& s, std::size_t j, const SampledSignal& y, const GridSpec& grid) {
  const std::size_t nb1 = s.b1s.size();
  std::vector<Eigen::Index> warm;
  std::vector<double> xs, gs;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < nb1; ++i) {
    NgNode& node = s.nodes[j * nb1 + i];
    node.at = {s.b1s[i], s.b2s[j]};
    node.valid = node.at.b1 > 0.0 && node.at.b1 < node.at.b2;
    if (!node.valid) continue;
    NnlsOptions opts;
    opts.warm_passive = warm;
    const auto sol = solve_nnls(build_phi(node.at.b1, node.at.b2, y.times), y, opts);
    warm = support_of(sol);
    node.g = sol.residual_ss;
    node.d_min = grid.d_min_frac * mean_positive_weight(sol.theta);
    node.n_impulses = count_above(sol.theta, node.d_min);
    xs.push_back(node.at.b1);
    gs.push_back(node.g);
    idx.push_back(j * nb1 + i);
  }
  const auto dg = finite_difference(xs, gs);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    NgNode& node = s.nodes[idx[k]];
    node.dg_db1 = dg[k];
    node.n_g = -node.g / node.dg_db1;
    const bool has_forward = k + 1 < idx.size();
    node.eligible =
        has_forward && node.dg_db1 < 0.0 && node.n_g > 0.0 && node.n_impulses <= s.impulse_bound;
  }
}

inline bool lex_less(ParamPoint a, ParamPoint b) { return std::tie(a.b1, a.b2) < std::tie(b.b1, b.b2); }

} // namespace detail

/// g at every node, dg/db1 by forward differences along b1, N_g = -g / dg.
/// Rows are independent; each row is computed by one task, so the result does
/// not depend on the worker count.
inline NgSurface n_g_surface(const SampledSignal& y, const GridSpec& grid, std::size_t workers = 1) {
  y.validate();
  grid.validate();
  NgSurface s;
  s.b1s = grid.b1_axis();
  s.b2s = grid.b2_axis();
  s.impulse_bound = grid.pi_for(y.size());
  s.nodes.resize(s.b1s.size() * s.b2s.size());
  parallel_for(s.b2s.size(), workers, [&](std::size_t j) { detail::fill_row(s, j, y, grid); });
  return s;
}

struct LowNoiseEstimate {
  ParamPoint estimate;  ///< (argmin b1 + min N_g, argmin b2)
  ParamPoint node;      ///< grid node attaining min N_g
  double min_n_g = 0.0;
  NgSurface surface;
};

/// Global minimum of N_g over eligible nodes; the Newton step is applied to b1.
/// Ties go to the lexicographically smallest (b1, b2).
inline LowNoiseEstimate estimate_low_noise_from(NgSurface surface) {
  const NgNode* best = nullptr;
  for (const auto& n : surface.nodes) {
    if (!n.eligible) continue;
    if (!best || n.n_g < best->n_g || (n.n_g == best->n_g && detail::lex_less(n.at, best->at))) best = &n;
  }
  if (!best) throw EstimationFailure("low-noise estimator: no eligible grid node");
  LowNoiseEstimate est;
  est.node = best->at;
  est.min_n_g = best->n_g;
  est.estimate = {best->at.b1 + best->n_g, best->at.b2};
  est.surface = std::move(surface);
  return est;
}

inline LowNoiseEstimate estimate_low_noise(const SampledSignal& y, const GridSpec& grid, std::size_t workers = 1) {
  return estimate_low_noise_from(n_g_surface(y, grid, workers));
}

struct GammaPHatEstimate {
  BoundaryCurve curve; ///< one point per b2 row with an eligible node, in b2 order
  std::vector<double> min_n_g;
  NgSurface surface;
};

inline GammaPHatEstimate estimate_gamma_p_hat_from(NgSurface surface) {
  GammaPHatEstimate out;
  out.curve.kind = BoundaryKind::GammaPHat;
  const std::size_t nb1 = surface.b1s.size();
  for (std::size_t j = 0; j < surface.b2s.size(); ++j) {
    const NgNode* best = nullptr;
    for (std::size_t i = 0; i < nb1; ++i) {
      const auto& n = surface.nodes[j * nb1 + i];
      if (n.eligible && (!best || n.n_g < best->n_g)) best = &n;
    }
    if (!best) continue;
    out.curve.points.push_back({best->at.b1 + best->n_g, best->at.b2});
    out.min_n_g.push_back(best->n_g);
  }
  out.surface = std::move(surface);
  return out;
}

inline GammaPHatEstimate estimate_gamma_p_hat(const SampledSignal& y, const GridSpec& grid, std::size_t workers = 1) {
  return estimate_gamma_p_hat_from(n_g_surface(y, grid, workers));
}

// ---------------------------------------------------------------------------
// Noise-free estimator: along the line family b1 = slope * b2 + c, locate the
// gamma_P and gamma_N crossings by bisection on the sign predicates; their
// distance d(c) vanishes where the boundaries meet.

struct NoiseFreeOptions {
  Interval b1_range;
  Interval b2_range;
  double slope = 2.0;
  /// Offset range for c; unset means every c whose line meets the box.
  std::optional<Interval> c_range{};
  std::size_t scan_points = 41;
  double tol_bisect = 1e-7;
  double tol_c = 1e-7;
  ClassifyOptions classify{};
};

struct LineCrossings {
  double c = 0.0;
  std::optional<ParamPoint> gamma_p;
  std::optional<ParamPoint> gamma_n;

  bool feasible() const { return gamma_p && gamma_n; }
  double gap() const {
    return feasible() ? distance(*gamma_p, *gamma_n) : std::numeric_limits<double>::infinity();
  }
};

struct NoiseFreeEstimate {
  ParamPoint estimate;
  LineCrossings at_optimum;
  std::vector<LineCrossings> scan;
};

/// The segment of b1 = slope * b2 + c inside the box and below the diagonal b1 < b2.
inline std::optional<SweepLine> offset_line(double c, const NoiseFreeOptions& o) {
  if (!(o.slope > 1.0)) throw ContractError("noise-free estimator: slope must exceed 1");
  double lo = std::max(o.b2_range.lo, (o.b1_range.lo - c) / o.slope);
  double hi = std::min(o.b2_range.hi, (o.b1_range.hi - c) / o.slope);
  hi = std::min(hi, -c / (o.slope - 1.0) * (1.0 - 1e-9)); // b1 < b2
  lo = std::max(lo, -c / o.slope * (1.0 + 1e-12));      // b1 > 0
  if (!(hi > lo)) return std::nullopt;
  return SweepLine{{o.slope * lo + c, lo}, {o.slope * hi + c, hi}};
}

inline LineCrossings line_crossings(const SampledSignal& y, double c, const NoiseFreeOptions& o) {
  LineCrossings lc;
  lc.c = c;
  const auto line = offset_line(c, o);
  if (!line) return lc;
  lc.gamma_p = intersect_boundary(y, BoundaryKind::GammaP, *line, o.tol_bisect, o.classify);
  lc.gamma_n = intersect_boundary(y, BoundaryKind::GammaN, *line, o.tol_bisect, o.classify);
  return lc;
}

inline NoiseFreeEstimate estimate_noise_free(const SampledSignal& y, const NoiseFreeOptions& o,
                                             std::size_t workers = 1) {
  y.validate();
  const Interval cr = o.c_range.value_or(
      Interval{o.b1_range.lo - o.slope * o.b2_range.hi, o.b1_range.hi - o.slope * o.b2_range.lo});
  if (!(cr.hi > cr.lo) || o.scan_points < 3) throw ContractError("noise-free estimator: bad offset range");

  NoiseFreeEstimate est;
  est.scan.resize(o.scan_points);
  const double step = (cr.hi - cr.lo) / static_cast<double>(o.scan_points - 1);
  parallel_for(o.scan_points, workers, [&](std::size_t i) {
    est.scan[i] = line_crossings(y, cr.lo + step * static_cast<double>(i), o);
  });

  std::size_t best = o.scan_points;
  for (std::size_t i = 0; i < o.scan_points; ++i)
    if (est.scan[i].feasible() && (best == o.scan_points || est.scan[i].gap() < est.scan[best].gap())) best = i;
  if (best == o.scan_points) throw EstimationFailure("noise-free estimator: no offset crosses both boundaries");

  const double lo = est.scan[best].c - (best > 0 ? step : 0.0);
  const double hi = est.scan[best].c + (best + 1 < o.scan_points ? step : 0.0);
  const auto m = golden_section_minimize([&](double c) { return line_crossings(y, c, o).gap(); }, lo, hi, o.tol_c);
  LineCrossings opt = line_crossings(y, m.x, o);
  if (!opt.feasible() || est.scan[best].gap() < opt.gap()) opt = est.scan[best];
  est.at_optimum = opt;
  est.estimate = {0.5 * (opt.gamma_p->b1 + opt.gamma_n->b1), 0.5 * (opt.gamma_p->b2 + opt.gamma_n->b2)};
  return est;
}

// ---------------------------------------------------------------------------
// Impulse extraction.

/// Collapses runs of impulses on consecutive sampling instants, pairwise left
/// to right, into single impulses with identical contribution to every sample
/// at or after the run's last instant. Both modes e^{-b1 t}, e^{-b2 t} are
/// matched: d e^{b_i tau} = d_k e^{b_i t_k} + d_{k+1} e^{b_i t_{k+1}}.
inline Impulse merge_pair(Impulse first, Impulse second, double b1, double b2) {
  const double dt = second.tau - first.tau;
  const double c1 = first.d + second.d * std::exp(b1 * dt);
  const double c2 = first.d + second.d * std::exp(b2 * dt);
  const double rel = std::log(c1 / c2) / (b1 - b2);
  return {first.tau + rel, c1 * std::exp(-b1 * rel)};
}

inline ImpulseTrain merge_adjacent(const ImpulseTrain& train, std::span<const double> times, double b1, double b2) {
  if (!(b1 > 0.0 && b1 < b2)) throw ContractError("merge_adjacent: need 0 < b1 < b2");
  ImpulseTrain out;
  std::ptrdiff_t prev_index = -2;
  for (const auto& imp : train) {
    auto it = std::lower_bound(times.begin(), times.end(), imp.tau);
    if (it == times.end() || *it != imp.tau) throw ContractError("merge_adjacent: impulse not on a sampling instant");
    const auto k = static_cast<std::ptrdiff_t>(it - times.begin());
    if (imp.d > 0.0 && !out.empty() && k == prev_index + 1)
      out.impulses.back() = merge_pair(out.impulses.back(), imp, b1, b2);
    else if (imp.d > 0.0)
      out.impulses.push_back(imp);
    prev_index = imp.d > 0.0 ? k : -2;
  }
  return out;
}

struct ExtractResult {
  ImpulseTrain impulses;
  ImpulseTrain unmerged;
  double x2_init = 0.0;
  double residual_ss = 0.0;
};

/// NNLS at (b1, b2); impulses below d_min are pinned to zero and the rest is
/// re-solved until every surviving weight clears d_min; adjacent survivors are
/// optionally merged.
inline ExtractResult extract_impulses(const SampledSignal& y, double b1, double b2, double d_min, bool merge) {
  y.validate();
  const auto phi = build_phi(b1, b2, y.times);
  NnlsOptions opts;
  auto sol = solve_nnls(phi, y, opts);
  for (std::size_t round = 0; round <= static_cast<std::size_t>(phi.size()); ++round) {
    std::vector<Eigen::Index> small;
    for (Eigen::Index j = 1; j < sol.theta.size(); ++j)
      if (sol.theta.values(j) < d_min &&
          std::find(opts.fixed_zero.begin(), opts.fixed_zero.end(), j) == opts.fixed_zero.end())
        small.push_back(j);
    if (small.empty()) break;
    opts.fixed_zero.insert(opts.fixed_zero.end(), small.begin(), small.end());
    opts.warm_passive = support_of(sol);
    sol = solve_nnls(phi, y, opts);
  }
  ExtractResult out;
  out.unmerged = theta_to_train(sol.theta, y.times);
  out.impulses = merge ? merge_adjacent(out.unmerged, y.times, b1, b2) : out.unmerged;
  out.x2_init = sol.theta.x2_init();
  out.residual_ss = sol.residual_ss;
  return out;
}

// ---------------------------------------------------------------------------
// Full pipeline.

enum class EstimationMode : std::uint8_t { NoiseFree, LowNoise, HighNoise };

struct EstimatorConfig {
  EstimationMode mode = EstimationMode::LowNoise;
  GridSpec grid;
  bool merge = true;
  /// High-noise mode: row of gamma_P-hat from which impulses are extracted.
  std::optional<double> b2_fixed{};
  NoiseFreeOptions noise_free{};
};

struct EstimateResult {
  std::optional<double> b1_hat;
  std::optional<double> b2_hat;
  ImpulseTrain impulses;
  double x2_init = 0.0;
  double residual_ss = 0.0;
  double d_min = 0.0;
  std::optional<BoundaryCurve> gamma_p_hat;
  std::optional<NgSurface> surface;
  std::vector<LineCrossings> offset_scan;
};

/// d_min at (b1, b2): d_min_frac times the mean positive NNLS weight there.
inline double threshold_at(const SampledSignal& y, double b1, double b2, double d_min_frac) {
  return d_min_frac * mean_positive_weight(solve_nnls(build_phi(b1, b2, y.times), y).theta);
}

inline void attach_impulses(EstimateResult& r, const SampledSignal& y, double b1, double b2, const EstimatorConfig& cfg) {
  if (!(b1 > 0.0 && b1 < b2)) throw EstimationFailure("estimated rates violate 0 < b1 < b2");
  r.d_min = threshold_at(y, b1, b2, cfg.grid.d_min_frac);
  auto ex = extract_impulses(y, b1, b2, r.d_min, cfg.merge);
  r.impulses = std::move(ex.impulses);
  r.x2_init = ex.x2_init;
  r.residual_ss = ex.residual_ss;
}

/// Runs estimation in the configured mode. Throws EstimationFailure when no
/// admissible estimate exists; `partial` (if given) receives whatever
/// diagnostics were produced before the failure.
inline EstimateResult run_estimation(const SampledSignal& y, const EstimatorConfig& cfg, std::size_t workers = 1,
                                     EstimateResult* partial = nullptr) {
  EstimateResult r;
  switch (cfg.mode) {
  case EstimationMode::NoiseFree: {
    auto nf = estimate_noise_free(y, cfg.noise_free, workers);
    r.offset_scan = std::move(nf.scan);
    r.b1_hat = nf.estimate.b1;
    r.b2_hat = nf.estimate.b2;
    attach_impulses(r, y, *r.b1_hat, *r.b2_hat, cfg);
    break;
  }
  case EstimationMode::LowNoise: {
    auto surface = n_g_surface(y, cfg.grid, workers);
    if (partial) partial->surface = surface;
    auto est = estimate_low_noise_from(std::move(surface));
    r.b1_hat = est.estimate.b1;
    r.b2_hat = est.estimate.b2;
    r.surface = std::move(est.surface);
    attach_impulses(r, y, *r.b1_hat, *r.b2_hat, cfg);
    break;
  }
  case EstimationMode::HighNoise: {
    auto est = estimate_gamma_p_hat(y, cfg.grid, workers);
    r.surface = std::move(est.surface);
    r.gamma_p_hat = std::move(est.curve);
    if (partial) partial->surface = r.surface;
    if (r.gamma_p_hat->empty()) throw EstimationFailure("high-noise estimator: no b2 row has an eligible node");
    if (cfg.b2_fixed) {
      const auto& pts = r.gamma_p_hat->points;
      const auto it = std::min_element(pts.begin(), pts.end(), [&](ParamPoint a, ParamPoint b) {
        return std::abs(a.b2 - *cfg.b2_fixed) < std::abs(b.b2 - *cfg.b2_fixed);
      });
      r.b1_hat = it->b1;
      r.b2_hat = it->b2;
      attach_impulses(r, y, it->b1, it->b2, cfg);
    }
    break;
  }
  }
  return r;
}

} // namespace pulsid

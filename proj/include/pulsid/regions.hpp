#pragma once

// Sign structure of the unconstrained LS solution over the (b1, b2) plane.
//
// Above gamma_P every impulse weight is nonnegative; below gamma_N only the
// true support keeps positive weights. The two boundaries meet at the true
// parameters. Single-impulse analysis with three samples gives each boundary
// in closed form as a root of a determinant condition in w = e^{b1 - b2}.

#include "pulsid/numerics.hpp"
#include "pulsid/solvers.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pulsid {

enum class SignLabel : std::uint8_t { AllPositive, AllNonTrueNegative, Mixed };

inline const char* to_string(SignLabel l) {
  switch (l) {
  case SignLabel::AllPositive: return "AllPositive";
  case SignLabel::AllNonTrueNegative: return "AllNonTrueNegative";
  case SignLabel::Mixed: return "Mixed";
  }
  return "?";
}

struct SignClass {
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  SignLabel label = SignLabel::Mixed;
};

struct ClassifyOptions {
  /// Weights within sign_tol * max|weight| of zero count as neither sign.
  double sign_tol = 1e-9;
  /// Impulse-count bound for the gamma_N side; unset means half the sample count.
  std::optional<std::size_t> impulse_bound{};

  std::size_t bound_for(std::size_t k) const { return impulse_bound.value_or(k / 2); }
};

/// Counts signs of d_1..d_{K-1}; x2(t_1) is not an impulse and is ignored.
inline SignClass classify_weights(const ThetaVector& theta, double sign_tol, std::size_t impulse_bound) {
  SignClass sc;
  if (theta.size() <= 1) {
    sc.label = SignLabel::AllPositive;
    return sc;
  }
  const auto w = theta.weights();
  const double cut = sign_tol * w.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w(j) > cut) ++sc.n_positive;
    else if (w(j) < -cut) ++sc.n_negative;
  }
  if (sc.n_negative == 0) sc.label = SignLabel::AllPositive;
  else if (sc.n_positive <= impulse_bound) sc.label = SignLabel::AllNonTrueNegative;
  else sc.label = SignLabel::Mixed;
  return sc;
}

inline SignClass classify_point(double b1, double b2, const SampledSignal& y, const ClassifyOptions& opts = {}) {
  const auto sol = solve_unconstrained(build_phi(b1, b2, y.times), y);
  return classify_weights(sol.theta, opts.sign_tol, opts.bound_for(y.size()));
}

struct ParamPoint {
  double b1 = 0.0;
  double b2 = 0.0;

  friend bool operator==(const ParamPoint&, const ParamPoint&) = default;
};

inline double distance(ParamPoint a, ParamPoint b) { return std::hypot(a.b1 - b.b1, a.b2 - b.b2); }

struct RegionNode {
  ParamPoint at;
  SignClass sign;
  double residual = 0.0; ///< NNLS residual sum of squares g(b1, b2)
};

struct RegionMap {
  std::vector<RegionNode> nodes;
  double delta_b = 0.0;
};

/// Classifies every grid node with b1 < b2. Nodes are ordered by b2, then b1.
inline RegionMap sweep_region_map(const SampledSignal& y, Interval b1_range, Interval b2_range, double delta_b,
                                  const ClassifyOptions& opts = {}, std::size_t workers = 1) {
  y.validate();
  const auto b1s = axis_points(b1_range, delta_b, true);
  const auto b2s = axis_points(b2_range, delta_b, true);
  std::vector<ParamPoint> pts;
  for (double b2 : b2s)
    for (double b1 : b1s)
      if (b1 > 0.0 && b1 < b2) pts.push_back({b1, b2});

  RegionMap map;
  map.delta_b = delta_b;
  map.nodes.resize(pts.size());
  parallel_for(pts.size(), workers, [&](std::size_t i) {
    const auto phi = build_phi(pts[i].b1, pts[i].b2, y.times);
    const auto free_sol = solve_unconstrained(phi, y);
    map.nodes[i].at = pts[i];
    map.nodes[i].sign = classify_weights(free_sol.theta, opts.sign_tol, opts.bound_for(y.size()));
    map.nodes[i].residual = solve_nnls(phi, y).residual_ss;
  });
  return map;
}

enum class BoundaryKind : std::uint8_t { GammaP, GammaN, GammaPHat };

inline const char* to_string(BoundaryKind k) {
  switch (k) {
  case BoundaryKind::GammaP: return "gammaP";
  case BoundaryKind::GammaN: return "gammaN";
  case BoundaryKind::GammaPHat: return "gammaPhat";
  }
  return "?";
}

/// Polyline in the (b1, b2) plane, in the order of the lines that produced it.
struct BoundaryCurve {
  std::vector<ParamPoint> points;
  BoundaryKind kind = BoundaryKind::GammaP;

  bool empty() const noexcept { return points.empty(); }
  std::size_t size() const noexcept { return points.size(); }
};

/// Segment from `from` to `to` in the parameter plane.
struct SweepLine {
  ParamPoint from;
  ParamPoint to;

  ParamPoint at(double s) const { return {from.b1 + s * (to.b1 - from.b1), from.b2 + s * (to.b2 - from.b2)}; }
  double length() const { return distance(from, to); }
};

/// The binary predicate whose switch defines a boundary.
inline bool boundary_predicate(BoundaryKind kind, const SignClass& sc, std::size_t impulse_bound) {
  switch (kind) {
  case BoundaryKind::GammaP: return sc.n_negative == 0;
  case BoundaryKind::GammaN: return sc.n_positive <= impulse_bound;
  case BoundaryKind::GammaPHat: break;
  }
  throw ContractError("boundary_predicate: gammaPhat is estimated from residuals, not traced");
}

/// Intersection of one sweep line with a boundary, or nullopt when the
/// predicate agrees at both ends.
inline std::optional<ParamPoint> intersect_boundary(const SampledSignal& y, BoundaryKind kind, const SweepLine& line,
                                                    double tol_bisect, const ClassifyOptions& opts = {}) {
  const std::size_t bound = opts.bound_for(y.size());
  auto pred = [&](double s) {
    const auto p = line.at(s);
    return boundary_predicate(kind, classify_point(p.b1, p.b2, y, opts), bound);
  };
  const bool at_from = pred(0.0);
  if (at_from == pred(1.0)) return std::nullopt;
  const double len = line.length();
  const double s = bisect_predicate(pred, 0.0, 1.0, len > 0.0 ? tol_bisect / len : 1.0, at_from);
  return line.at(s);
}

struct BoundaryTrace {
  BoundaryCurve curve;
  /// Indices of lines on which the predicate did not switch.
  std::vector<std::size_t> skipped;
};

inline BoundaryTrace trace_boundary(const SampledSignal& y, BoundaryKind kind, const std::vector<SweepLine>& lines,
                                    double tol_bisect, const ClassifyOptions& opts = {}, std::size_t workers = 1) {
  if (!(tol_bisect > 0.0)) throw ContractError("trace_boundary: tolerance must be positive");
  y.validate();
  std::vector<std::optional<ParamPoint>> hits(lines.size());
  parallel_for(lines.size(), workers,
               [&](std::size_t i) { hits[i] = intersect_boundary(y, kind, lines[i], tol_bisect, opts); });
  BoundaryTrace out;
  out.curve.kind = kind;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (hits[i]) out.curve.points.push_back(*hits[i]);
    else out.skipped.push_back(i);
  }
  return out;
}

/// Vertical lines b1 = const spanning [b2_range.lo, b2_range.hi] (clipped to b2 > b1).
inline std::vector<SweepLine> vertical_lines(const std::vector<double>& b1_values, Interval b2_range) {
  std::vector<SweepLine> lines;
  for (double b1 : b1_values) {
    const double lo = std::max(b2_range.lo, b1 * (1.0 + 1e-9) + 1e-12);
    if (lo >= b2_range.hi) continue;
    lines.push_back({{b1, lo}, {b1, b2_range.hi}});
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Triplet boundary: single impulse at t = 0 through the true plant, sampled at
// tau < nu < mu. The candidate plant (b1, b2) with free initial x2 and one
// impulse reproduces all three samples iff
//
//   A(tau)(w^mu - w^nu) + A(nu)(w^tau - w^mu) + A(mu)(w^nu - w^tau) = 0,
//   A(t) = chi^t - psi^t,  chi = e^{b1 - b2*}, psi = e^{b1 - b1*}, w = e^{b1 - b2}.
//
// w = 1 (b1 = b2) always solves it and is discarded.

namespace detail {

// A(t) scaled by e^{-(b1 - b1*) tau}: e^{(b1-b1*)(t-tau)} expm1(-(b2*-b1*) t).
inline double triplet_a(double b1, double b1_true, double b2_true, double tau, double t) {
  return std::exp((b1 - b1_true) * (t - tau)) * std::expm1(-(b2_true - b1_true) * t);
}

} // namespace detail

/// Left side of the triplet condition divided by w^tau (w - 1) and a positive
/// scale, as a function of x = ln w < 0. Same sign and roots in (0, 1) as the
/// original, minus the spurious root at w = 1.
inline double triplet_condition(double x, double b1, double b1_true, double b2_true, double tau, double nu, double mu) {
  const double a_tau = detail::triplet_a(b1, b1_true, b2_true, tau, tau);
  const double a_nu = detail::triplet_a(b1, b1_true, b2_true, tau, nu);
  const double a_mu = detail::triplet_a(b1, b1_true, b2_true, tau, mu);
  const double d1 = std::exp((nu - tau) * x) * std::expm1((mu - nu) * x); // (w^mu - w^nu) / w^tau
  const double d2 = -std::expm1((mu - tau) * x);                          // (w^tau - w^mu) / w^tau
  const double d3 = std::expm1((nu - tau) * x);                           // (w^nu - w^tau) / w^tau
  return (a_tau * d1 + a_nu * d2 + a_mu * d3) / std::expm1(x);
}

struct TripletOptions {
  /// Search b2 in (b1, b1 + b2_span].
  double b2_span = 50.0;
  /// Keeps the bracket off the infeasible root w = 1.
  double root_margin = 1e-6;
};

/// b2 on the boundary through (b1, ?) for samples at tau < nu < mu, found by
/// bracketed root search in w = e^{b1 - b2}.
inline double boundary_triplet_numeric(double b1, double b1_true, double b2_true, double tau, double nu, double mu,
                                       const TripletOptions& opts = {}) {
  if (!(0.0 < tau && tau < nu && nu < mu)) throw ContractError("boundary_triplet_numeric: need 0 < tau < nu < mu");
  if (!(b1 > 0.0 && b1_true > 0.0 && b1_true < b2_true))
    throw ContractError("boundary_triplet_numeric: inadmissible rates");
  auto f = [&](double x) { return triplet_condition(x, b1, b1_true, b2_true, tau, nu, mu); };
  const double x_lo = -opts.b2_span;
  const double x_hi = std::log1p(-opts.root_margin);
  const double f_lo = f(x_lo), f_hi = f(x_hi);
  if (!(f_lo * f_hi < 0.0))
    throw DomainError("boundary_triplet_numeric: no feasible root for b1=" + std::to_string(b1));
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-15 * std::max(1.0, std::abs(a)); };
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, x_lo, x_hi, f_lo, f_hi, tol, iters);
  return b1 - 0.5 * (lo + hi);
}

namespace detail {

// omega_1, omega_2 of the equidistant closed form, both scaled by e^{-s}.
struct EquidistantTerms {
  double w1 = 0.0;
  double w2 = 0.0;
};

inline EquidistantTerms equidistant_terms(double b1, double b1_true, double b2_true, double tau, double c) {
  const double ec = (b1 - b2_true); // log chi
  const double ep = (b1 - b1_true); // log psi
  const double s = std::max(ec, ep) * tau;
  const double one_minus_chi_c = -std::expm1(ec * c);
  const double one_minus_psi_c = -std::expm1(ep * c);
  EquidistantTerms t;
  t.w1 = std::exp(ec * (tau + c) - s) * one_minus_chi_c - std::exp(ep * (tau + c) - s) * one_minus_psi_c;
  t.w2 = std::exp(ec * tau - s) * one_minus_chi_c - std::exp(ep * tau - s) * one_minus_psi_c;
  return t;
}

} // namespace detail

/// Closed-form triplet boundary for samples at tau, tau + c, tau + 2c:
/// b2 = b1 - ln(omega_1 / omega_2) / c. Points with b2 <= b1 are rejected.
inline double boundary_equidistant(double b1, double b1_true, double b2_true, double tau, double c) {
  if (!(c > 0.0)) throw ContractError("boundary_equidistant: c must be positive");
  if (!(tau > 0.0)) throw ContractError("boundary_equidistant: tau must be positive");
  if (!(b1_true > 0.0 && b1_true < b2_true)) throw ContractError("boundary_equidistant: inadmissible true rates");
  const auto t = detail::equidistant_terms(b1, b1_true, b2_true, tau, c);
  if (!(t.w1 / t.w2 > 0.0) || !std::isfinite(t.w1 / t.w2))
    throw DomainError("boundary_equidistant: omega_1/omega_2 not positive at b1=" + std::to_string(b1));
  const double b2 = b1 - std::log(t.w1 / t.w2) / c;
  if (!(b2 > b1)) throw DomainError("boundary_equidistant: no feasible point (b2 <= b1) at b1=" + std::to_string(b1));
  return b2;
}

} // namespace pulsid

#pragma once

#include "pulsid/regressor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace pulsid {

struct LsSolution {
  ThetaVector theta;
  double residual_ss = 0.0;
  /// Constrained coordinates held at zero (including any fixed by the caller).
  std::vector<Eigen::Index> active_set;
  std::size_t iterations = 0;
};

struct NnlsOptions {
  /// Coordinates without a sign constraint. Default: only x2(t_1).
  std::vector<Eigen::Index> free_indices{0};
  /// Coordinates pinned to zero and removed from the problem.
  std::vector<Eigen::Index> fixed_zero{};
  /// Initial passive-set guess (e.g. the solution support at a neighbouring grid node).
  std::vector<Eigen::Index> warm_passive{};
  /// KKT tolerance relative to ||A^T b||_inf.
  double kkt_rel_tol = 1e-10;
};

inline Eigen::VectorXd to_vector(const SampledSignal& y) {
  return Eigen::Map<const Eigen::VectorXd>(y.values.data(), static_cast<Eigen::Index>(y.values.size()));
}

inline double residual_sum_of_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& b) {
  return (b - a * x).squaredNorm();
}

/// theta = Phi^{-1} Y by forward substitution.
inline LsSolution solve_unconstrained(const RegressorMatrix& phi, const SampledSignal& y) {
  if (static_cast<Eigen::Index>(y.size()) != phi.size())
    throw ContractError("solve_unconstrained: data length does not match regressor");
  for (Eigen::Index i = 0; i < phi.size(); ++i)
    if (phi.values(i, i) == 0.0)
      throw SolverFailure("solve_unconstrained: zero diagonal entry at row " + std::to_string(i));
  const Eigen::VectorXd b = to_vector(y);
  LsSolution sol;
  sol.theta = ThetaVector(phi.values.triangularView<Eigen::Lower>().solve(b));
  sol.residual_ss = residual_sum_of_squares(phi.values, sol.theta.values, b);
  return sol;
}

namespace detail {

enum class Coord : unsigned char { Free, Passive, Active, Fixed };

// Least-squares solution restricted to the columns in `cols`; zero elsewhere.
// Normal equations on the Gram block; falls back to a rank-revealing QR on the
// original columns when the block is not numerically positive definite.
inline Eigen::VectorXd solve_subproblem(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        const Eigen::MatrixXd& gram, const Eigen::VectorXd& atb,
                                        const std::vector<Eigen::Index>& cols) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(a.cols());
  if (cols.empty()) return s;
  const Eigen::MatrixXd g = gram(cols, cols);
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  Eigen::VectorXd sp;
  if (llt.info() == Eigen::Success) {
    sp = llt.solve(atb(cols));
    // One step of refinement against the original columns; the Gram matrix
    // squares the condition number.
    const Eigen::VectorXd r = b - a(Eigen::all, cols) * sp;
    sp += llt.solve(a(Eigen::all, cols).transpose() * r);
  } else {
    sp = a(Eigen::all, cols).colPivHouseholderQr().solve(b);
  }
  s(cols) = sp;
  return s;
}

} // namespace detail

struct NnlsResult {
  Eigen::VectorXd x;
  double residual_ss = 0.0;
  std::vector<Eigen::Index> active_set;
  std::size_t iterations = 0;
};

/// Lawson-Hanson active-set NNLS: min ||A x - b||^2 s.t. x_j >= 0 for every j
/// outside free_indices. Terminates in finitely many steps; more than 3n
/// iterations is reported as SolverFailure.
inline NnlsResult solve_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                             const NnlsOptions& opts = {}) {
  using detail::Coord;
  const Eigen::Index n = a.cols();
  if (a.rows() != b.size()) throw ContractError("solve_nnls: dimension mismatch");

  std::vector<Coord> state(static_cast<std::size_t>(n), Coord::Active);
  auto at = [&](Eigen::Index j) -> Coord& {
    if (j < 0 || j >= n) throw ContractError("solve_nnls: index out of range");
    return state[static_cast<std::size_t>(j)];
  };
  for (auto j : opts.free_indices) at(j) = Coord::Free;
  for (auto j : opts.fixed_zero) at(j) = Coord::Fixed;
  for (auto j : opts.warm_passive)
    if (at(j) == Coord::Active) at(j) = Coord::Passive;

  const Eigen::MatrixXd gram = a.transpose() * a;
  const Eigen::VectorXd atb = a.transpose() * b;
  const double scale = atb.size() ? atb.cwiseAbs().maxCoeff() : 0.0;
  const double tol = opts.kkt_rel_tol * (scale > 0.0 ? scale : 1.0);

  auto passive_cols = [&] {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto s = state[static_cast<std::size_t>(j)];
      if (s == Coord::Free || s == Coord::Passive) cols.push_back(j);
    }
    return cols;
  };
  auto solve = [&] { return detail::solve_subproblem(a, b, gram, atb, passive_cols()); };

  // Feasible start: drop warm-start coordinates that come out nonpositive.
  Eigen::VectorXd x = solve();
  for (bool changed = true; changed;) {
    changed = false;
    for (Eigen::Index j = 0; j < n; ++j)
      if (state[static_cast<std::size_t>(j)] == Coord::Passive && x(j) <= 0.0) {
        state[static_cast<std::size_t>(j)] = Coord::Active;
        changed = true;
      }
    if (changed) x = solve();
  }
  for (Eigen::Index j = 0; j < n; ++j)
    if (state[static_cast<std::size_t>(j)] == Coord::Active ||
        state[static_cast<std::size_t>(j)] == Coord::Fixed)
      x(j) = 0.0;

  const std::size_t max_iter = 3 * static_cast<std::size_t>(std::max<Eigen::Index>(n, 1));
  std::size_t iter = 0;
  std::vector<bool> blocked(static_cast<std::size_t>(n), false);

  for (;;) {
    const Eigen::VectorXd w = atb - gram * x;
    Eigen::Index enter = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (state[static_cast<std::size_t>(j)] == Coord::Active && !blocked[static_cast<std::size_t>(j)] &&
          w(j) > best) {
        best = w(j);
        enter = j;
      }
    if (enter < 0) break;
    if (++iter > max_iter) throw SolverFailure("solve_nnls: no convergence within 3n iterations");

    state[static_cast<std::size_t>(enter)] = Coord::Passive;
    bool first_pass = true;
    for (;;) {
      Eigen::VectorXd s = solve();
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j)
        if (state[static_cast<std::size_t>(j)] == Coord::Passive && s(j) <= 0.0)
          alpha = std::min(alpha, x(j) / (x(j) - s(j)));
      if (!std::isfinite(alpha)) {
        x = s;
        std::fill(blocked.begin(), blocked.end(), false);
        break;
      }
      if (first_pass && s(enter) <= 0.0) {
        // Gradient said "enter" but the subproblem disagrees: rounding. Skip it
        // until x moves.
        state[static_cast<std::size_t>(enter)] = Coord::Active;
        blocked[static_cast<std::size_t>(enter)] = true;
        break;
      }
      first_pass = false;
      if (++iter > max_iter) throw SolverFailure("solve_nnls: no convergence within 3n iterations");
      x += alpha * (s - x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (state[static_cast<std::size_t>(j)] == Coord::Passive && x(j) <= 0.0) {
          state[static_cast<std::size_t>(j)] = Coord::Active;
          x(j) = 0.0;
        }
    }
  }

  NnlsResult out;
  out.x = std::move(x);
  out.residual_ss = residual_sum_of_squares(a, out.x, b);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto s = state[static_cast<std::size_t>(j)];
    if (s == Coord::Active || s == Coord::Fixed) out.active_set.push_back(j);
  }
  out.iterations = iter;
  return out;
}

inline LsSolution solve_nnls(const RegressorMatrix& phi, const SampledSignal& y,
                             const NnlsOptions& opts = {}) {
  if (static_cast<Eigen::Index>(y.size()) != phi.size())
    throw ContractError("solve_nnls: data length does not match regressor");
  auto r = solve_nnls(phi.values, to_vector(y), opts);
  LsSolution sol;
  sol.theta = ThetaVector(std::move(r.x));
  sol.residual_ss = r.residual_ss;
  sol.active_set = std::move(r.active_set);
  sol.iterations = r.iterations;
  return sol;
}

/// Indices with strictly positive entries; a warm start for a nearby solve.
inline std::vector<Eigen::Index> support_of(const LsSolution& sol) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index j = 1; j < sol.theta.size(); ++j)
    if (sol.theta.values(j) > 0.0) s.push_back(j);
  return s;
}

/// Residual sum of squares of the nonnegativity-constrained fit at (b1, b2).
inline double residual_g(double b1, double b2, const SampledSignal& y, const NnlsOptions& opts = {}) {
  return solve_nnls(build_phi(b1, b2, y.times), y, opts).residual_ss;
}

} // namespace pulsid

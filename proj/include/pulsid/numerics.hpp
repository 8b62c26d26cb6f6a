#pragma once

#include "pulsid/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pulsid {

/// Narrows [lo, hi] onto the switch of a binary predicate with pred(lo) != pred(hi).
/// Returns the midpoint of the final bracket, whose width is <= tol.
template <class Pred>
double bisect_predicate(Pred&& pred, double lo, double hi, double tol, bool pred_lo, std::size_t max_iter = 200) {
  for (std::size_t i = 0; i < max_iter && std::abs(hi - lo) > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (static_cast<bool>(pred(mid)) == pred_lo)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Points lo + i*step. The upper end is included when `closed` is set and
/// excluded otherwise. A range with lo == hi yields the single point lo.
inline std::vector<double> axis_points(Interval range, double step, bool closed) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ContractError("axis_points: step must be positive");
  if (!(range.hi >= range.lo)) throw ContractError("axis_points: empty interval");
  const double slack = 1e-9 * step;
  std::vector<double> out;
  for (std::size_t i = 0;; ++i) {
    const double v = range.lo + static_cast<double>(i) * step;
    if (closed ? v > range.hi + slack : v >= range.hi - slack) break;
    out.push_back(v);
  }
  if (out.empty()) out.push_back(range.lo); // degenerate range: a single node
  return out;
}

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
};

/// Golden-section search for a unimodal function on [lo, hi].
template <class F>
ScalarMinimum golden_section_minimize(F&& f, double lo, double hi, double tol, std::size_t max_iter = 200) {
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (std::size_t i = 0; i < max_iter && (b - a) > tol; ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? ScalarMinimum{c, fc} : ScalarMinimum{d, fd};
}

/// Number of workers to use; 0 means one per hardware thread.
inline std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  const auto hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is run
/// exactly once; results must be written to per-index slots by the caller.
/// The first exception thrown by any task is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

} // namespace pulsid

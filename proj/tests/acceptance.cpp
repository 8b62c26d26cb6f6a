// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include "support.hpp"

#include "pulsid/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

using namespace pulsid;
namespace fs = std::filesystem;
using testing::uniform;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path g_work_dir = "acceptance_work";

Outcome ode_vs_closed_form() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int cfg = 0; cfg < 100; ++cfg) {
    const double b1 = uniform(rng, 0.2, 2.0);
    const SystemParams p{b1, b1 + uniform(rng, 0.1, 2.0)};
    ImpulseTrain train;
    double tau = 0.0;
    for (int k = 0; k < 3; ++k) {
      tau += uniform(rng, 0.5, 3.0);
      train.impulses.push_back({tau, uniform(rng, 0.1, 1.0)});
    }
    const double x2_0 = uniform(rng, 0.0, 0.5);
    std::vector<double> t;
    for (int i = 0; i <= 60; ++i) t.push_back(0.25 * i);
    const auto closed = simulate_output(p, train, x2_0, t);
    const auto traj = simulate_ode(p, train, {0.0, x2_0}, 0.0, t.back(), 1e-3, t);
    const auto ode = sample_trajectory(traj, t);
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(ode[i] - closed.values[i]));
  }
  return {worst <= 1e-6, fmt("max |ode - closed| = %.3g over 100 configurations", worst)};
}

Outcome exact_recovery() {
  std::mt19937_64 rng(2);
  double worst_u = 0.0, worst_n = 0.0, worst_gap = 0.0;
  for (int ds = 0; ds < 20; ++ds) {
    const auto d = testing::sparse_data(rng);
    const auto phi = build_phi(d.params, d.times);
    const auto truth = train_to_theta(d.train, d.y.values.front(), d.times);
    const auto u = solve_unconstrained(phi, d.y).theta, n = solve_nnls(phi, d.y).theta;
    worst_u = std::max(worst_u, (u.values - truth.values).cwiseAbs().maxCoeff());
    worst_n = std::max(worst_n, (n.values - truth.values).cwiseAbs().maxCoeff());
    worst_gap = std::max(worst_gap, (u.values - n.values).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_u <= 1e-8 && worst_n <= 1e-8 && worst_gap <= 1e-8;
  return {ok, fmt("max error unconstrained %.3g, nnls %.3g, disagreement %.3g (20 datasets)", worst_u, worst_n, worst_gap)};
}

Outcome sign_regions() {
  std::mt19937_64 rng(3);
  std::size_t violations = 0, checked = 0, wide_violations = 0;
  auto wrong_negative = [](const ThetaVector& th) {
    return th.weights().minCoeff() < -1e-9 * th.weights().cwiseAbs().maxCoeff();
  };
  auto wrong_positive = [](const ThetaVector& th, const testing::SparseData& d) {
    const double cut = 1e-9 * th.weights().cwiseAbs().maxCoeff();
    for (Eigen::Index j = 1; j < th.size(); ++j)
      if (!d.on_support[static_cast<std::size_t>(j)] && th.values(j) > cut) return true;
    return false;
  };
  for (int ds = 0; ds < 100; ++ds) {
    const auto d = testing::sparse_data(rng);
    const double b1s = d.params.b1, b2s = d.params.b2, sum = b1s + b2s, mid = 0.5 * sum;
    for (int p = 0; p < 10; ++p) {
      const double b1 = uniform(rng, b1s, mid), b2 = uniform(rng, std::max(mid, sum - b1), 1.5 * b2s);
      violations += wrong_negative(solve_unconstrained(build_phi(b1, b2, d.times), d.y).theta);
      const double b1n = uniform(rng, 0.5 * b1s, b1s), b2n = uniform(rng, mid, sum - b1n);
      violations += wrong_positive(solve_unconstrained(build_phi(b1n, b2n, d.times), d.y).theta, d);
      checked += 2;
      // Unrestricted negative region: any b2 > b1 with b1 < b1*, b1 + b2 < b1* + b2*.
      const double b1w = uniform(rng, 0.05, b1s), b2w = uniform(rng, b1w + 1e-3, sum - b1w);
      wide_violations += wrong_positive(solve_unconstrained(build_phi(b1w, b2w, d.times), d.y).theta, d);
    }
  }
  return {violations == 0, fmt("%zu violations in %zu points inside the grid box (tol 1e-9); "
                               "informational: %zu/1000 outside it",
                               violations, checked, wide_violations)};
}

Outcome crossings() {
  std::mt19937_64 rng(4);
  std::size_t worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double b1 = uniform(rng, 0.4, 1.4), b2 = b1 + uniform(rng, 0.3, 1.3);
    double bh1 = 0.0, bh2 = 0.0;
    do {
      bh1 = uniform(rng, 0.1, 5.0);
      bh2 = uniform(rng, 0.1, 5.0);
    } while (!(bh1 < bh2 && bh1 > b1 && bh1 + bh2 > b1 + b2));
    const double t1 = uniform(rng, 0.0, 3.0), th = uniform(rng, 0.0, 3.0);
    const double d = uniform(rng, 0.1, 1.0), dh = uniform(rng, 0.1, 1.0);
    const double start = std::max(t1, th);
    std::vector<double> diff;
    for (int i = 1; i <= 10000; ++i) {
      const double t = start + 40.0 * i / 10000.0;
      diff.push_back(d * kernel_z(b1, b2, t - t1) - dh * kernel_z(bh1, bh2, t - th));
    }
    worst = std::max(worst, testing::sign_changes(diff));
  }
  return {worst <= 2, fmt("max sign changes %zu over 100 pairs", worst)};
}

Outcome boundary_math() {
  std::mt19937_64 rng(5);
  double eq_gap = 0.0, through = 0.0, max_slope = -1e300, min_curv = 1e300;
  std::size_t slope_points = 0, pivot_bad = 0, pivot_checked = 0;
  for (int cfg = 0; cfg < 50; ++cfg) {
    const double b1s = uniform(rng, 0.4, 1.4), b2s = b1s + uniform(rng, 0.3, 1.3);
    const double tau = uniform(rng, 0.2, 2.0), c = uniform(rng, 0.2, 2.0);
    auto f = [&](double b1) { return boundary_equidistant(b1, b1s, b2s, tau, c); };
    through = std::max(through, std::abs(f(b1s) - b2s));
    through = std::max(through, std::abs(boundary_triplet_numeric(b1s, b1s, b2s, tau, tau + c, tau + 2 * c) - b2s));
    // One interior point per configuration, between the truth and the diagonal.
    for (int tries = 0; tries < 200; ++tries) {
      const double b1 = b1s * uniform(rng, 0.7, 1.5), h = 1e-4;
      try {
        const double fm = f(b1 - h), f0 = f(b1), fp = f(b1 + h);
        eq_gap = std::max(eq_gap, std::abs(f0 - boundary_triplet_numeric(b1, b1s, b2s, tau, tau + c, tau + 2 * c)));
        max_slope = std::max(max_slope, (fp - fm) / (2 * h));
        min_curv = std::min(min_curv, (fp - 2 * f0 + fm) / (h * h));
        ++slope_points;
        const double dt = 1e-4;
        const double dtau = (boundary_equidistant(b1, b1s, b2s, tau + dt, c) -
                             boundary_equidistant(b1, b1s, b2s, tau - dt, c)) / (2 * dt);
        // The boundary pivots about the truth: moving the samples later lowers it
        // to the right of b1* and raises it to the left.
        if (std::abs(b1 - b1s) > 1e-3) {
          ++pivot_checked;
          pivot_bad += (b1 > b1s) ? !(dtau < 0.0) : !(dtau > 0.0);
        }
        break;
      } catch (const DomainError&) {
      }
    }
  }
  // Curves for tau = 1, b* = (0.5, 1.5), c in {0.5, 1, 2}.
  double fig_through = 0.0;
  bool ordered = true;
  const double cs[] = {0.5, 1.0, 2.0};
  for (double c : cs) fig_through = std::max(fig_through, std::abs(boundary_equidistant(0.5, 0.5, 1.5, 1.0, c) - 1.5));
  for (double b1 : {0.48, 0.49, 0.51, 0.6}) {
    double v[3];
    for (int i = 0; i < 3; ++i) v[i] = boundary_equidistant(b1, 0.5, 1.5, 1.0, cs[i]);
    ordered = ordered && (b1 > 0.5 ? (v[0] > v[1] && v[1] > v[2]) : (v[0] < v[1] && v[1] < v[2]));
  }
  const bool ok = eq_gap <= 1e-8 && slope_points >= 50 && max_slope < -1.0 && min_curv > 0.0 && pivot_bad == 0 &&
                  through <= 1e-6 && fig_through <= 1e-6 && ordered;
  return {ok, fmt("closed vs numeric %.3g; %zu points: max slope %.4f, min curvature %.4g; pivot sign failures %zu/%zu; "
                  "through truth %.3g; c-family through (0.5,1.5) %.3g, ordered in c: %s",
                  eq_gap, slope_points, max_slope, min_curv, pivot_bad, pivot_checked, through, fig_through,
                  ordered ? "yes" : "no")};
}

Outcome newton_surrogate() {
  std::mt19937_64 rng(6);
  double worst_cells = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double c1 = uniform(rng, 0.5, 5.0), c2 = uniform(rng, 0.05, 2.0), xs = uniform(rng, -3.0, 3.0), h = 1e-3;
    std::vector<double> x, f;
    for (double v = xs - 6.0; v <= xs + 1.0; v += h) {
      x.push_back(v);
      f.push_back(c1 * (v - xs) * (v - xs) + c2);
    }
    const std::unique_ptr<bool[]> allowed(new bool[x.size()]);
    std::fill_n(allowed.get(), x.size(), true);
    const auto step = newton_step_minimize(x, f, std::span<const bool>(allowed.get(), x.size()));
    if (!step) return {false, "no minimum found"};
    worst_cells = std::max(worst_cells, std::abs(step->x_hat - xs) / h);
  }
  return {worst_cells <= 1.0, fmt("max |x_hat - x*| = %.3f grid cells over 20 quadratics", worst_cells)};
}

ExperimentReport g_report_a, g_report_b;

Outcome experiment_a() {
  auto cfg = ExperimentConfig::regime_a();
  g_report_a = run_experiment(cfg, {}, 0);
  const auto& r = g_report_a;
  const bool ok = r.rmse_b1 <= 0.02 && r.rmse_b2 <= 0.05 && r.rmse_d <= 0.03 && r.rmse_tau <= 0.15 &&
                  r.frac_correct_count >= 0.65;
  return {ok, fmt("RMSE b1 %.4f, b2 %.4f, d %.4f, tau %.4f; correct count %.2f; failures %zu/%zu", r.rmse_b1,
                  r.rmse_b2, r.rmse_d, r.rmse_tau, r.frac_correct_count, r.n_failures, r.n_realizations)};
}

Outcome experiment_b() {
  auto cfg = ExperimentConfig::regime_b();
  g_report_b = run_experiment(cfg, {}, 0);
  const auto& r = g_report_b;
  return {r.mean_gamma_p_distance <= 0.03,
          fmt("mean distance %.4f; failures %zu/%zu", r.mean_gamma_p_distance, r.n_failures, r.n_realizations)};
}

Outcome merge_exactness() {
  std::mt19937_64 rng(9);
  double worst = 0.0;
  bool inside = true;
  for (int i = 0; i < 100; ++i) {
    const double b1 = uniform(rng, 0.2, 2.0), b2 = b1 + uniform(rng, 0.1, 2.0);
    const double tk = uniform(rng, 0.0, 5.0), dt = uniform(rng, 0.05, 1.0);
    const Impulse a{tk, uniform(rng, 0.01, 1.0)}, b{tk + dt, uniform(rng, 0.01, 1.0)};
    const auto m = merge_pair(a, b, b1, b2);
    inside = inside && m.tau >= tk && m.tau <= tk + dt;
    for (int s = 0; s <= 40; ++s) {
      const double t = tk + dt + 0.1 * s;
      const double before = a.d * kernel_z(b1, b2, t - a.tau) + (t > b.tau ? b.d * kernel_z(b1, b2, t - b.tau) : 0.0);
      const double after = m.d * kernel_z(b1, b2, t - m.tau);
      if (before > 0.0) worst = std::max(worst, std::abs(after - before) / before);
    }
  }
  return {worst <= 1e-10 && inside, fmt("max relative error %.3g; merged times inside the pair: %s", worst,
                                        inside ? "yes" : "no")};
}

Outcome noise_free_estimator() {
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto d = testing::sparse_data(rng);
    NoiseFreeOptions o;
    o.b1_range = {0.5 * d.params.b1, 0.5 * (d.params.b1 + d.params.b2)};
    o.b2_range = {0.5 * (d.params.b1 + d.params.b2), 1.5 * d.params.b2};
    const auto est = estimate_noise_free(d.y, o, 0);
    worst = std::max({worst, std::abs(est.estimate.b1 - d.params.b1), std::abs(est.estimate.b2 - d.params.b2)});
  }
  return {worst <= 5e-3, fmt("max coordinate error %.3g over 20 datasets", worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = g_work_dir / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({"regime": "A", "seed": 11, "n_realizations": 8})";
  auto run = [&](const std::string& name, std::size_t workers) {
    cli::MonteCarloArgs a;
    a.config = dir / "config.json";
    a.workers = workers;
    a.out = dir / name;
    std::ostringstream out, err;
    if (cli::cmd_montecarlo(a, out, err) != 0) return std::string("failed: ") + err.str();
    return slurp(a.out / "realizations.csv") + slurp(a.out / "summary.json") + out.str();
  };
  const auto first = run("run1", 1), second = run("run2", 1), parallel = run("run4", 4);
  const bool ok = first == second && first == parallel && first.rfind("failed", 0) != 0;
  return {ok, fmt("repeat identical: %s; 1 vs 4 workers identical: %s", first == second ? "yes" : "no",
                  first == parallel ? "yes" : "no")};
}

} // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--work-dir") g_work_dir = argv[i + 1];

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double time_limit_s;
  };
  const std::vector<Criterion> criteria{
      {"1 ODE matches closed form", ode_vs_closed_form, 30.0},
      {"2 exact recovery on noise-free data", exact_recovery, 1.0},
      {"3 sign regions", sign_regions, 0.0},
      {"4 at most two crossings", crossings, 0.0},
      {"5 triplet boundary geometry", boundary_math, 0.0},
      {"6 Newton surrogate on quadratics", newton_surrogate, 0.0},
      {"7 experiment A (low noise)", experiment_a, 0.0},
      {"8 experiment B (high noise)", experiment_b, 0.0},
      {"9 merge exactness", merge_exactness, 0.0},
      {"10 noise-free estimator", noise_free_estimator, 0.0},
      {"11 determinism", determinism, 0.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0.0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += fmt("; took %.2fs, limit %.0fs", secs, c.time_limit_s);
    }
    std::printf("[%s] %-38s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures ? 1 : 0;
}

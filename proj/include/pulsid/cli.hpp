#pragma once

// Subcommands of the `pulsid` tool. Each cmd_* returns the process exit status:
// 0 success, 2 input error, 3 estimation failure.

#include "pulsid/estimator.hpp"
#include "pulsid/io.hpp"
#include "pulsid/montecarlo.hpp"
#include "pulsid/regions.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace pulsid::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInputError = 2, kEstimationFailure = 3 };

/// Grid flags shared by estimate, region-map and boundary.
struct GridFlags {
  std::optional<double> b1_min, b1_max, b2_min, b2_max;
  double delta_b = 0.02;
  double d_min_frac = 0.05;
  std::optional<std::size_t> pi;

  bool complete() const { return b1_min && b1_max && b2_min && b2_max; }

  Interval b1() const { return {*b1_min, *b1_max}; }
  Interval b2() const { return {*b2_min, *b2_max}; }

  void require_complete() const {
    if (!complete()) throw InputError("--b1-min, --b1-max, --b2-min and --b2-max are required");
  }

  GridSpec spec() const {
    require_complete();
    GridSpec g;
    g.b1_range = b1();
    g.b2_range = b2();
    g.delta_b = delta_b;
    g.d_min_frac = d_min_frac;
    g.pi = pi;
    g.validate();
    return g;
  }
};

/// Runs `body` and maps library exceptions onto exit statuses.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
  } catch (const ContractError& e) {
    err << "input error: " << e.what() << '\n';
  } catch (const DomainError& e) {
    err << "input error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
  } catch (const EstimationFailure& e) {
    err << "estimation failure: " << e.what() << '\n';
    return kEstimationFailure;
  } catch (const SolverFailure& e) {
    err << "estimation failure: " << e.what() << '\n';
    return kEstimationFailure;
  }
  return kInputError;
}

// --- simulate -----------------------------------------------------------------

struct SimulateArgs {
  fs::path plant;    ///< JSON {b1, b2[, x2_init]}
  fs::path impulses; ///< CSV tau,d
  double t_start = 0.0;
  double t_end = 0.0;
  double dt = 0.25;
  double sigma = 0.0;
  std::uint64_t seed = 1;
  fs::path out;
};

inline fs::path sidecar_path(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  p += suffix;
  return p;
}

inline int cmd_simulate(const SimulateArgs& a, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const auto plant = io::read_plant(a.plant);
    const auto train = io::read_train(a.impulses);
    train.validate(true);
    if (!(a.dt > 0.0) || !(a.t_end >= a.t_start)) throw InputError("need dt > 0 and t_end >= t_start");
    if (!(a.sigma >= 0.0)) throw InputError("sigma must be >= 0");
    std::vector<double> times;
    for (std::size_t k = 0;; ++k) {
      const double t = a.t_start + static_cast<double>(k) * a.dt;
      if (t > a.t_end + 1e-9 * a.dt) break;
      times.push_back(t);
    }
    auto y = simulate_output(plant.params, train, plant.x2_init, times);
    if (a.sigma > 0.0) y = add_noise(y, a.sigma, a.seed);
    io::write_signal(a.out, y);
    io::json truth = {{"b1", plant.params.b1},   {"b2", plant.params.b2}, {"x2_init", plant.x2_init},
                      {"impulses", io::to_json(train)}, {"sigma", a.sigma}, {"seed", a.seed}};
    io::write_json(sidecar_path(a.out, ".truth.json"), truth);
    return int{kOk};
  });
}

// --- estimate -----------------------------------------------------------------

struct EstimateArgs {
  fs::path data;
  GridFlags grid;
  EstimationMode mode = EstimationMode::LowNoise;
  bool merge = true;
  std::optional<double> b2_fixed;
  double slope = 2.0;
  std::size_t workers = 0;
  fs::path out; ///< result JSON; diagnostics go next to it
};

inline int cmd_estimate(const EstimateArgs& a, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const auto y = io::read_signal(a.data);
    EstimatorConfig cfg;
    cfg.mode = a.mode;
    cfg.merge = a.merge;
    cfg.b2_fixed = a.b2_fixed;
    cfg.grid = a.grid.spec();
    cfg.noise_free.b1_range = cfg.grid.b1_range;
    cfg.noise_free.b2_range = cfg.grid.b2_range;
    cfg.noise_free.slope = a.slope;
    cfg.noise_free.classify.impulse_bound = a.grid.pi;

    const fs::path diag = sidecar_path(a.out, ".diagnostics.csv");
    EstimateResult partial;
    try {
      const auto r = run_estimation(y, cfg, a.workers, &partial);
      io::write_json(a.out, io::to_json(r));
      auto out = io::detail::open_out(diag);
      io::write_diagnostics_csv(out, r);
    } catch (const EstimationFailure& e) {
      auto j = io::to_json(partial);
      j["error"] = e.what();
      io::write_json(a.out, j);
      auto out = io::detail::open_out(diag);
      io::write_diagnostics_csv(out, partial);
      throw;
    }
    return int{kOk};
  });
}

// --- region-map -----------------------------------------------------------------

struct RegionMapArgs {
  fs::path data;
  GridFlags grid;
  double sign_tol = 1e-9;
  std::size_t workers = 0;
  fs::path out;
};

inline int cmd_region_map(const RegionMapArgs& a, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const auto y = io::read_signal(a.data);
    const auto g = a.grid.spec();
    ClassifyOptions opts;
    opts.sign_tol = a.sign_tol;
    opts.impulse_bound = a.grid.pi;
    const auto map = sweep_region_map(y, g.b1_range, g.b2_range, g.delta_b, opts, a.workers);
    auto out = io::detail::open_out(a.out);
    io::write_region_map(out, map);
    return int{kOk};
  });
}

// --- boundary -----------------------------------------------------------------

/// Two modes. With `data`, gamma_P or gamma_N is traced along vertical lines
/// b1 = const. Without it, the single-impulse triplet boundary is evaluated for
/// true rates (b1_true, b2_true) and samples at tau, tau + c, tau + 2c (one curve
/// per c), or at tau < nu < mu when both are given.
struct BoundaryArgs {
  std::optional<fs::path> data;
  BoundaryKind kind = BoundaryKind::GammaP;
  GridFlags grid;
  double tol = 1e-7;
  std::size_t workers = 0;

  double b1_true = 0.5;
  double b2_true = 1.5;
  double tau = 1.0;
  std::vector<double> c{1.0};
  std::optional<double> nu, mu;

  fs::path out;
};

inline std::vector<fs::path> boundary_outputs(const fs::path& out, const std::vector<double>& cs) {
  if (cs.size() <= 1) return {out};
  std::vector<fs::path> paths;
  for (double c : cs) {
    std::ostringstream tag;
    tag << "_c" << c;
    fs::path p = sidecar_path(out, tag.str());
    p += out.extension();
    paths.push_back(p);
  }
  return paths;
}

inline int cmd_boundary(const BoundaryArgs& a, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    a.grid.require_complete();
    if (!(a.grid.delta_b > 0.0)) throw InputError("--delta-b must be positive");
    const auto b1s = axis_points(a.grid.b1(), a.grid.delta_b, true);
    if (a.data) {
      const auto y = io::read_signal(*a.data);
      ClassifyOptions opts;
      opts.impulse_bound = a.grid.pi;
      const auto trace = trace_boundary(y, a.kind, vertical_lines(b1s, a.grid.b2()), a.tol, opts, a.workers);
      auto out = io::detail::open_out(a.out);
      io::write_boundary(out, trace.curve);
      return int{kOk};
    }
    if (a.nu.has_value() != a.mu.has_value()) throw InputError("--nu and --mu go together");
    if (a.nu) {
      BoundaryCurve curve;
      for (double b1 : b1s) {
        try {
          curve.points.push_back({b1, boundary_triplet_numeric(b1, a.b1_true, a.b2_true, a.tau, *a.nu, *a.mu)});
        } catch (const DomainError&) {
        }
      }
      auto out = io::detail::open_out(a.out);
      io::write_boundary(out, curve);
      return int{kOk};
    }
    if (a.c.empty()) throw InputError("need at least one --c");
    const auto paths = boundary_outputs(a.out, a.c);
    for (std::size_t i = 0; i < a.c.size(); ++i) {
      BoundaryCurve curve;
      for (double b1 : b1s) {
        try {
          curve.points.push_back({b1, boundary_equidistant(b1, a.b1_true, a.b2_true, a.tau, a.c[i])});
        } catch (const DomainError&) {
        }
      }
      auto out = io::detail::open_out(paths[i]);
      io::write_boundary(out, curve);
    }
    return int{kOk};
  });
}

// --- montecarlo -----------------------------------------------------------------

struct MonteCarloArgs {
  fs::path config;
  std::optional<std::size_t> n_realizations;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  fs::path out; ///< directory
};

inline int cmd_montecarlo(const MonteCarloArgs& a, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    auto cfg = io::read_config(a.config);
    if (a.n_realizations) cfg.n_realizations = *a.n_realizations;
    if (a.seed) cfg.seed = *a.seed;
    const auto rep = run_experiment(cfg, {}, a.workers);
    fs::create_directories(a.out);
    {
      auto csv = io::detail::open_out(a.out / "realizations.csv");
      io::write_records(csv, rep);
    }
    io::write_json(a.out / "summary.json", io::summary_json(cfg, rep));
    io::print_summary(out, rep);
    return int{kOk};
  });
}

// --- argument parsing -------------------------------------------------------------

inline void add_grid_flags(CLI::App& app, GridFlags& g) {
  app.add_option("--b1-min", g.b1_min, "lower end of the b1 range");
  app.add_option("--b1-max", g.b1_max, "upper end of the b1 range");
  app.add_option("--b2-min", g.b2_min, "lower end of the b2 range");
  app.add_option("--b2-max", g.b2_max, "upper end of the b2 range");
  app.add_option("--delta-b", g.delta_b, "grid step")->capture_default_str();
  app.add_option("--d-min-frac", g.d_min_frac, "d_min as a fraction of the mean positive weight")
      ->capture_default_str();
  app.add_option("--pi", g.pi, "maximum number of impulses (default: half the sample count)");
}

/// Parses argv and dispatches. Parse errors count as input errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Joint estimation of impulse trains and rate constants of a two-compartment cascade"};
  app.require_subcommand(1);
  std::size_t workers = 0;
  app.add_option("--workers", workers, "worker threads (0: one per hardware thread)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "sample the model output for a given plant and impulse train");
  s->add_option("--params", sim.plant, "plant JSON {b1, b2, x2_init}")->required();
  s->add_option("--impulses", sim.impulses, "impulse CSV tau,d")->required();
  s->add_option("--t-start", sim.t_start)->capture_default_str();
  s->add_option("--t-end", sim.t_end)->required();
  s->add_option("--dt", sim.dt)->capture_default_str();
  s->add_option("--sigma", sim.sigma, "standard deviation of added noise")->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--out", sim.out, "output CSV t,y")->required();

  EstimateArgs est;
  std::string mode = "low-noise";
  bool no_merge = false;
  auto* e = app.add_subcommand("estimate", "estimate rates and impulses from a t,y series");
  e->add_option("--data", est.data, "input CSV t,y")->required();
  add_grid_flags(*e, est.grid);
  e->add_option("--mode", mode)->check(CLI::IsMember({"low-noise", "high-noise", "noise-free"}))->capture_default_str();
  e->add_flag("--no-merge", no_merge, "keep impulses on consecutive instants separate");
  e->add_option("--b2-fixed", est.b2_fixed, "high-noise mode: extract impulses on this b2 row of gamma_P-hat");
  e->add_option("--slope", est.slope, "noise-free mode: slope of the sweep lines b1 = slope*b2 + c")
      ->capture_default_str();
  e->add_option("--out", est.out, "result JSON")->required();

  RegionMapArgs rm;
  auto* r = app.add_subcommand("region-map", "classify grid nodes by the signs of the fitted weights");
  r->add_option("--data", rm.data)->required();
  add_grid_flags(*r, rm.grid);
  r->add_option("--sign-tol", rm.sign_tol)->capture_default_str();
  r->add_option("--out", rm.out)->required();

  BoundaryArgs bd;
  std::string kind = "gamma-p";
  auto* b = app.add_subcommand("boundary", "trace a region boundary from data, or the triplet boundary analytically");
  b->add_option("--data", bd.data, "trace from this t,y series");
  b->add_option("--kind", kind)->check(CLI::IsMember({"gamma-p", "gamma-n"}))->capture_default_str();
  add_grid_flags(*b, bd.grid);
  b->add_option("--tol", bd.tol, "bisection tolerance")->capture_default_str();
  b->add_option("--b1-true", bd.b1_true)->capture_default_str();
  b->add_option("--b2-true", bd.b2_true)->capture_default_str();
  b->add_option("--tau", bd.tau, "first sample time after the impulse")->capture_default_str();
  b->add_option("--c", bd.c, "sample spacing; repeat for several curves")->capture_default_str();
  b->add_option("--nu", bd.nu, "second sample time (non-equidistant)");
  b->add_option("--mu", bd.mu, "third sample time (non-equidistant)");
  b->add_option("--out", bd.out)->required();

  MonteCarloArgs mc;
  auto* m = app.add_subcommand("montecarlo", "run a synthetic-data experiment");
  m->add_option("--config", mc.config, "experiment JSON")->required();
  m->add_option("--n-realizations", mc.n_realizations);
  m->add_option("--seed", mc.seed);
  m->add_option("--out", mc.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& pe) {
    err << "input error: " << pe.what() << '\n';
    return kInputError;
  }

  if (s->parsed()) return cmd_simulate(sim, err);
  if (e->parsed()) {
    est.mode = mode == "noise-free"   ? EstimationMode::NoiseFree
               : mode == "high-noise" ? EstimationMode::HighNoise
                                      : EstimationMode::LowNoise;
    est.merge = !no_merge;
    est.workers = workers;
    return cmd_estimate(est, err);
  }
  if (r->parsed()) {
    rm.workers = workers;
    return cmd_region_map(rm, err);
  }
  if (b->parsed()) {
    bd.kind = kind == "gamma-n" ? BoundaryKind::GammaN : BoundaryKind::GammaP;
    bd.workers = workers;
    return cmd_boundary(bd, err);
  }
  mc.workers = workers;
  return cmd_montecarlo(mc, out, err);
}

} // namespace pulsid::cli

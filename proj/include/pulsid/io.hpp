#pragma once

// CSV and JSON readers/writers for the command-line front end.

#include "pulsid/errors.hpp"
#include "pulsid/estimator.hpp"
#include "pulsid/model.hpp"
#include "pulsid/montecarlo.hpp"
#include "pulsid/regions.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pulsid::io {

using json = nlohmann::json;

namespace detail {

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return {};
  return s.substr(a, s.find_last_not_of(ws) - a + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  for (;;) {
    const auto p = line.find(sep);
    out.push_back(trim(line.substr(0, p)));
    if (p == std::string_view::npos) break;
    line.remove_prefix(p + 1);
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view column) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw InputError("column '" + std::string(column) + "': not a number: '" + std::string(s) + "'", line);
  if (!std::isfinite(v)) throw InputError("column '" + std::string(column) + "': non-finite value", line);
  return v;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

/// Switches a stream to round-trip precision for its lifetime.
class FullPrecision {
public:
  explicit FullPrecision(std::ostream& out) : out_(out), flags_(out.flags()), precision_(out.precision()) {
    out_.unsetf(std::ios::floatfield);
    out_.precision(17);
  }
  ~FullPrecision() {
    out_.flags(flags_);
    out_.precision(precision_);
  }
  FullPrecision(const FullPrecision&) = delete;
  FullPrecision& operator=(const FullPrecision&) = delete;

private:
  std::ostream& out_;
  std::ios::fmtflags flags_;
  std::streamsize precision_;
};

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  return out;
}

/// Reads a two-column numeric CSV with the given header. Blank lines are skipped.
inline std::vector<std::pair<double, double>> read_two_columns(std::istream& in, std::string_view c0,
                                                               std::string_view c1) {
  std::string line;
  std::size_t n = 0;
  bool header = false;
  std::vector<std::pair<double, double>> rows;
  while (std::getline(in, line)) {
    ++n;
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto f = split(t);
    if (!header) {
      if (f.size() != 2 || f[0] != c0 || f[1] != c1)
        throw InputError("expected header '" + std::string(c0) + "," + std::string(c1) + "'", n);
      header = true;
      continue;
    }
    if (f.size() != 2) throw InputError("expected 2 fields, found " + std::to_string(f.size()), n);
    rows.emplace_back(parse_double(f[0], n, c0), parse_double(f[1], n, c1));
    if (rows.size() > 1 && !(rows[rows.size() - 2].first < rows.back().first))
      throw InputError("column '" + std::string(c0) + "' must be strictly increasing", n);
  }
  if (!header) throw InputError("empty file: missing header '" + std::string(c0) + "," + std::string(c1) + "'");
  return rows;
}

} // namespace detail

// --- time series and impulse trains ----------------------------------------

inline SampledSignal read_signal(std::istream& in) {
  SampledSignal s;
  for (auto [t, y] : detail::read_two_columns(in, "t", "y")) {
    s.times.push_back(t);
    s.values.push_back(y);
  }
  if (s.times.empty()) throw InputError("time series has no samples");
  return s;
}

inline SampledSignal read_signal(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_signal(in);
}

inline ImpulseTrain read_train(std::istream& in) {
  ImpulseTrain tr;
  std::size_t row = 0;
  for (auto [tau, d] : detail::read_two_columns(in, "tau", "d")) {
    ++row;
    if (d < 0.0) throw InputError("impulse weight must be nonnegative (row " + std::to_string(row) + ")");
    tr.impulses.push_back({tau, d});
  }
  return tr;
}

inline ImpulseTrain read_train(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_train(in);
}

inline void write_signal(std::ostream& out, const SampledSignal& s) {
  const detail::FullPrecision guard(out);
  out << "t,y\n";
  for (std::size_t i = 0; i < s.size(); ++i) out << s.times[i] << ',' << s.values[i] << '\n';
}

inline void write_train(std::ostream& out, const ImpulseTrain& tr) {
  const detail::FullPrecision guard(out);
  out << "tau,d\n";
  for (const auto& imp : tr) out << imp.tau << ',' << imp.d << '\n';
}

inline void write_signal(const std::filesystem::path& path, const SampledSignal& s) {
  auto out = detail::open_out(path);
  write_signal(out, s);
}

inline void write_train(const std::filesystem::path& path, const ImpulseTrain& tr) {
  auto out = detail::open_out(path);
  write_train(out, tr);
}

/// {"b1": .., "b2": .., "x2_init": ..}; x2_init is optional and defaults to 0.
struct PlantFile {
  SystemParams params;
  double x2_init = 0.0;
};

inline PlantFile read_plant(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("plant JSON: ") + e.what());
  }
  PlantFile p;
  try {
    p.params.b1 = j.at("b1").get<double>();
    p.params.b2 = j.at("b2").get<double>();
    p.x2_init = j.value("x2_init", 0.0);
  } catch (const json::exception& e) {
    throw InputError(std::string("plant JSON: ") + e.what());
  }
  if (!p.params.admissible()) throw InputError("plant JSON: require 0 < b1 < b2");
  return p;
}

// --- regions ----------------------------------------------------------------

inline void write_region_map(std::ostream& out, const RegionMap& map) {
  const detail::FullPrecision guard(out);
  out << "b1,b2,label,n_positive,n_negative,residual\n";
  for (const auto& n : map.nodes)
    out << n.at.b1 << ',' << n.at.b2 << ',' << to_string(n.sign.label) << ',' << n.sign.n_positive << ','
        << n.sign.n_negative << ',' << n.residual << '\n';
}

/// Rows sorted by b1 (stable, so equal-b1 points keep their trace order).
inline void write_boundary(std::ostream& out, const BoundaryCurve& curve) {
  const detail::FullPrecision guard(out);
  auto pts = curve.points;
  std::stable_sort(pts.begin(), pts.end(), [](ParamPoint a, ParamPoint b) { return a.b1 < b.b1; });
  out << "b1,b2\n";
  for (auto p : pts) out << p.b1 << ',' << p.b2 << '\n';
}

// --- estimation -------------------------------------------------------------

inline json to_json(const ImpulseTrain& tr) {
  json a = json::array();
  for (const auto& imp : tr) a.push_back({{"tau", imp.tau}, {"d", imp.d}});
  return a;
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Grid evaluations as a row table: one row per (b1, b2) node.
inline json diagnostics_table(const EstimateResult& r) {
  json d;
  if (r.surface) {
    d["columns"] = {"b1", "b2", "g", "dg_db1", "n_g", "n_impulses", "eligible"};
    json rows = json::array();
    for (const auto& n : r.surface->nodes) {
      if (!n.valid) continue;
      rows.push_back({n.at.b1, n.at.b2, finite_or_null(n.g), finite_or_null(n.dg_db1), finite_or_null(n.n_g),
                      n.n_impulses, n.eligible});
    }
    d["rows"] = std::move(rows);
    d["impulse_bound"] = r.surface->impulse_bound;
  } else {
    d["columns"] = {"c", "gamma_p_b1", "gamma_p_b2", "gamma_n_b1", "gamma_n_b2", "gap"};
    json rows = json::array();
    for (const auto& s : r.offset_scan) {
      rows.push_back({s.c, s.gamma_p ? json(s.gamma_p->b1) : json(nullptr),
                      s.gamma_p ? json(s.gamma_p->b2) : json(nullptr),
                      s.gamma_n ? json(s.gamma_n->b1) : json(nullptr),
                      s.gamma_n ? json(s.gamma_n->b2) : json(nullptr),
                      s.feasible() ? json(s.gap()) : json(nullptr)});
    }
    d["rows"] = std::move(rows);
  }
  return d;
}

inline json to_json(const EstimateResult& r) {
  json j;
  j["b1_hat"] = optional_number(r.b1_hat);
  j["b2_hat"] = optional_number(r.b2_hat);
  j["x2_init"] = r.x2_init;
  j["impulses"] = to_json(r.impulses);
  j["residual_ss"] = r.residual_ss;
  j["d_min"] = r.d_min;
  if (r.gamma_p_hat) {
    json c = json::array();
    for (auto p : r.gamma_p_hat->points) c.push_back({p.b1, p.b2});
    j["gamma_p_hat"] = std::move(c);
  }
  j["diagnostics"] = diagnostics_table(r);
  return j;
}

/// Grid of g and N_g in CSV form, for plotting.
inline void write_diagnostics_csv(std::ostream& out, const EstimateResult& r) {
  const detail::FullPrecision guard(out);
  out << "b1,b2,g,dg_db1,n_g,n_impulses,eligible\n";
  if (!r.surface) return;
  auto num = [&](double v) -> std::ostream& { return std::isfinite(v) ? out << v : out << "nan"; };
  for (const auto& n : r.surface->nodes) {
    if (!n.valid) continue;
    out << n.at.b1 << ',' << n.at.b2 << ',';
    num(n.g) << ',';
    num(n.dg_db1) << ',';
    num(n.n_g) << ',' << n.n_impulses << ',' << (n.eligible ? 1 : 0) << '\n';
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// --- Monte Carlo ------------------------------------------------------------

namespace detail {

inline Interval read_interval(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw InputError("config: '" + key + "' must be a [lo, hi] array");
  return {j[0].get<double>(), j[1].get<double>()};
}

} // namespace detail

/// Missing fields take the regime's defaults; unknown fields are rejected.
inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  ExperimentConfig c;
  if (j.contains("regime")) {
    const auto r = j.at("regime").get<std::string>();
    if (r == "A")
      c = ExperimentConfig::regime_a();
    else if (r == "B")
      c = ExperimentConfig::regime_b();
    else
      throw InputError("config: regime must be \"A\" or \"B\"");
  }
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "regime") continue;
      if (key == "n_realizations") c.n_realizations = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "b1_true_range") c.b1_true_range = detail::read_interval(v, key);
      else if (key == "b2_minus_b1_range") c.b2_minus_b1_range = detail::read_interval(v, key);
      else if (key == "weight_range") c.weight_range = detail::read_interval(v, key);
      else if (key == "delta_tau_range") c.delta_tau_range = detail::read_interval(v, key);
      else if (key == "n_impulses") c.n_impulses = v.get<std::size_t>();
      else if (key == "sigma") c.sigma = v.get<double>();
      else if (key == "delta_t") c.delta_t = v.get<double>();
      else if (key == "tau_end") c.tau_end = v.get<double>();
      else if (key == "delta_b") c.delta_b = v.get<double>();
      else if (key == "d_min_frac") c.d_min_frac = v.get<double>();
      else if (key == "pi_frac") c.pi_frac = v.get<double>();
      else throw InputError("config: unknown field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig read_config(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline json to_json(const ExperimentConfig& c) {
  auto iv = [](Interval r) { return json::array({r.lo, r.hi}); };
  return {{"regime", to_string(c.regime)},
          {"n_realizations", c.n_realizations},
          {"seed", c.seed},
          {"b1_true_range", iv(c.b1_true_range)},
          {"b2_minus_b1_range", iv(c.b2_minus_b1_range)},
          {"weight_range", iv(c.weight_range)},
          {"delta_tau_range", iv(c.delta_tau_range)},
          {"n_impulses", c.n_impulses},
          {"sigma", c.sigma},
          {"delta_t", c.delta_t},
          {"tau_end", c.tau_end},
          {"delta_b", c.delta_b},
          {"d_min_frac", c.d_min_frac},
          {"pi_frac", c.pi_frac}};
}

/// RMSE values reported for the l1-regularized comparison method on regime A
/// data. Carried as fixed reference numbers; that method is not implemented.
struct ReferenceRmse {
  static constexpr double b1 = 0.0234;
  static constexpr double b2 = 0.0582;
};

inline json summary_json(const ExperimentConfig& cfg, const ExperimentReport& rep) {
  json j;
  j["config"] = to_json(cfg);
  j["regime"] = to_string(rep.regime);
  j["n_realizations"] = rep.n_realizations;
  j["n_failures"] = rep.n_failures;
  if (rep.regime == Regime::A) {
    j["rmse_b1"] = finite_or_null(rep.rmse_b1);
    j["rmse_b2"] = finite_or_null(rep.rmse_b2);
    j["rmse_d"] = finite_or_null(rep.rmse_d);
    j["rmse_tau"] = finite_or_null(rep.rmse_tau);
    j["frac_correct_count"] = finite_or_null(rep.frac_correct_count);
    j["mean_extra_impulses"] = finite_or_null(rep.mean_extra_impulses);
    j["reference_l1"] = {{"rmse_b1", ReferenceRmse::b1}, {"rmse_b2", ReferenceRmse::b2}};
  } else {
    j["mean_gamma_p_distance"] = finite_or_null(rep.mean_gamma_p_distance);
  }
  return j;
}

inline void write_records(std::ostream& out, const ExperimentReport& rep) {
  const detail::FullPrecision guard(out);
  out << "index,b1_true,b2_true,n_samples,status,b1_hat,b2_hat,n_true,n_estimated,n_matched,n_extra,"
         "gamma_p_distance,weight_rmse,time_rmse\n";
  auto num = [&](double v) -> std::ostream& { return std::isfinite(v) ? out << v : out << ""; };
  auto rms = [](const std::vector<double>& e) {
    if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : e) s += x * x;
    return std::sqrt(s / static_cast<double>(e.size()));
  };
  for (const auto& r : rep.records) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out << r.index << ',' << r.b1_true << ',' << r.b2_true << ',' << r.n_samples << ',' << status << ',';
    num(r.b1_hat) << ',';
    num(r.b2_hat) << ',' << r.n_true << ',' << r.n_estimated << ',' << r.n_matched << ',' << r.n_extra << ',';
    num(r.gamma_p_distance) << ',';
    num(rms(r.weight_errors)) << ',';
    num(rms(r.time_errors)) << '\n';
  }
}

/// Plain-text summary with the l1-regularized reference figures alongside.
inline void print_summary(std::ostream& out, const ExperimentReport& rep) {
  const detail::FullPrecision restore(out);
  out << std::fixed << std::setprecision(4);
  out << "regime " << to_string(rep.regime) << ": " << rep.n_realizations << " realizations, " << rep.n_failures
      << " failures\n";
  if (rep.regime == Regime::A) {
    out << "           this method   l1 reference\n";
    out << "RMSE(b1)   " << std::setw(11) << rep.rmse_b1 << "   " << std::setw(12) << ReferenceRmse::b1 << '\n';
    out << "RMSE(b2)   " << std::setw(11) << rep.rmse_b2 << "   " << std::setw(12) << ReferenceRmse::b2 << '\n';
    out << "RMSE(d)    " << std::setw(11) << rep.rmse_d << '\n';
    out << "RMSE(tau)  " << std::setw(11) << rep.rmse_tau << '\n';
    out << "correct impulse count  " << rep.frac_correct_count << '\n';
    out << "mean extra impulses    " << rep.mean_extra_impulses << '\n';
  } else {
    out << "mean distance to gamma_P-hat  " << rep.mean_gamma_p_distance << '\n';
  }
  out << std::defaultfloat;
}

} // namespace pulsid::io

#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>

using namespace pulsid;
using Catch::Approx;

TEST_CASE("kernel_z: Heaviside factor, reference value, degenerate limit", "[model]") {
  CHECK(kernel_z(0.5, 1.5, -1.0) == 0.0);
  CHECK(kernel_z(0.5, 1.5, 0.0) == 0.0);
  CHECK(kernel_z(0.5, 1.5, 1.0) == Approx((std::exp(-0.5) - std::exp(-1.5)) / 1.0).epsilon(1e-15));
  CHECK(kernel_z(0.5, 1.5, 1.0) == Approx(0.383401).margin(5e-7));

  const double z = kernel_z(1.0, 1.0 + 1e-14, 1.0);
  CHECK(z == Approx(std::exp(-1.0)).epsilon(1e-12));
  // the limit agrees with the regular branch just outside the threshold
  const double h = 1e-6;
  CHECK(kernel_z(1.0, 1.0 + h, 1.0) == Approx(z).epsilon(1e-5));
  // and with a central difference of (e^{-b2 t}) in b2 at b2 = b1
  const double fd = -(std::exp(-(1.0 + h)) - std::exp(-(1.0 - h))) / (2 * h);
  CHECK(z == Approx(fd).epsilon(1e-8));
}

TEST_CASE("kernel_z is symmetric, positive, and rejects non-finite input", "[model]") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const double a = testing::uniform(rng, 0.1, 3.0), b = testing::uniform(rng, 0.1, 3.0);
    const double t = testing::uniform(rng, 1e-3, 20.0);
    CHECK(kernel_z(a, b, t) == Approx(kernel_z(b, a, t)).epsilon(1e-12));
    CHECK(kernel_z(a, b, t) > 0.0);
  }
  CHECK_THROWS_AS(kernel_z(std::nan(""), 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(kernel_z(1.0, 2.0, INFINITY), DomainError);
}

TEST_CASE("simulate_output reference cases", "[model]") {
  const SystemParams p{0.5, 1.5};
  const std::vector<double> t01{0.0, 1.0};
  auto y = simulate_output(p, ImpulseTrain{{{0.0, 1.0}}}, 0.0, t01);
  CHECK(y.values[0] == 0.0);
  CHECK(y.values[1] == Approx(0.383401).margin(5e-7));

  const std::vector<double> t012{0.0, 1.0, 2.0};
  y = simulate_output(p, {}, 1.0, t012);
  CHECK(y.values[0] == 1.0);
  CHECK(y.values[1] == Approx(std::exp(-1.5)).epsilon(1e-15));
  CHECK(y.values[2] == Approx(std::exp(-3.0)).epsilon(1e-15));

  y = simulate_output(p, {}, 0.0, t012);
  for (double v : y.values) CHECK(v == 0.0);

  const std::vector<double> unordered{0.0, 2.0, 1.0};
  CHECK_THROWS_AS(simulate_output(p, {}, 0.0, unordered), ContractError);
  CHECK_THROWS_AS(simulate_output({1.5, 0.5}, {}, 0.0, t012), ContractError);
}

TEST_CASE("simulate_output is linear in (x2_init, weights)", "[model]") {
  const SystemParams p{0.7, 1.9};
  ImpulseTrain tr{{{0.3, 0.4}, {2.0, 0.9}}};
  ImpulseTrain tr2 = tr;
  for (auto& imp : tr2.impulses) imp.d *= 2.0;
  std::vector<double> t;
  for (int i = 0; i < 30; ++i) t.push_back(0.25 * i);
  const auto a = simulate_output(p, tr, 0.3, t);
  const auto b = simulate_output(p, tr2, 0.6, t);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(b.values[i] == Approx(2.0 * a.values[i]).epsilon(1e-14));
}

TEST_CASE("an impulse on a sample does not affect that sample", "[model]") {
  const SystemParams p{0.6, 1.1};
  const std::vector<double> t{0.0, 0.5, 1.0};
  const auto y = simulate_output(p, ImpulseTrain{{{0.5, 1.0}}}, 0.0, t);
  CHECK(y.values[1] == 0.0);
  CHECK(y.values[2] > 0.0);
}

TEST_CASE("output decreases in either rate after the first impulse", "[model]") {
  const ImpulseTrain tr{{{0.0, 1.0}, {3.0, 0.5}}};
  std::vector<double> t;
  for (int i = 1; i <= 40; ++i) t.push_back(0.25 * i);
  const auto base = simulate_output({0.8, 1.6}, tr, 0.0, t);
  const auto faster_b2 = simulate_output({0.8, 1.7}, tr, 0.0, t);
  const auto faster_b1 = simulate_output({0.9, 1.6}, tr, 0.0, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(faster_b2.values[i] < base.values[i]);
    CHECK(faster_b1.values[i] < base.values[i]);
  }
}

TEST_CASE("simulate_ode: zero input stays zero, jumps are exact", "[model][ode]") {
  const SystemParams p{0.5, 1.5};
  const auto zero = simulate_ode(p, {}, {}, 0.0, 5.0, 1e-2);
  for (const auto& s : zero.states) {
    CHECK(s.x1 == 0.0);
    CHECK(s.x2 == 0.0);
  }
  const auto traj = simulate_ode(p, ImpulseTrain{{{1.0, 0.7}}}, {0.2, 0.1}, 0.0, 3.0, 1e-3);
  auto it = std::find(traj.times.begin(), traj.times.end(), 1.0);
  REQUIRE(it != traj.times.end());
  const auto k = static_cast<std::size_t>(it - traj.times.begin());
  REQUIRE(traj.times[k + 1] == 1.0);
  CHECK(traj.states[k + 1].x1 - traj.states[k].x1 == Approx(0.7).epsilon(1e-15));
  CHECK(traj.states[k + 1].x2 == traj.states[k].x2);
}

TEST_CASE("simulate_ode matches the closed form at the reference point", "[model][ode]") {
  const std::vector<double> t{1.0};
  const auto traj = simulate_ode({0.5, 1.5}, ImpulseTrain{{{0.0, 1.0}}}, {}, 0.0, 1.0, 1e-3, t);
  CHECK(sample_trajectory(traj, t)[0] == Approx(0.383401).margin(1e-6));
}

TEST_CASE("simulate_ode agrees with an independent adaptive integrator", "[model][ode]") {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 2>;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemParams p{testing::uniform(rng, 0.4, 1.4), 0.0};
    const SystemParams q{p.b1, p.b1 + testing::uniform(rng, 0.3, 1.3)};
    const ImpulseTrain tr{{{0.0, testing::uniform(rng, 0.1, 1.0)}}};
    const std::vector<double> t{2.0, 4.0, 7.5};
    const auto ours = sample_trajectory(simulate_ode(q, tr, {}, 0.0, 7.5, 1e-3, t), t);

    State x{tr.impulses[0].d, 0.0};
    auto rhs = [&](const State& s, State& ds, double) {
      ds[0] = -q.b1 * s[0];
      ds[1] = s[0] - q.b2 * s[1];
    };
    double t0 = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      odeint::integrate_adaptive(odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(1e-12, 1e-12), rhs, x,
                                 t0, t[i], 1e-3);
      t0 = t[i];
      CHECK(ours[i] == Approx(x[1]).margin(1e-9));
    }
  }
}

TEST_CASE("add_noise: identity at sigma 0, deterministic, zero mean", "[model]") {
  SampledSignal s;
  for (int i = 0; i < 100000; ++i) {
    s.times.push_back(i);
    s.values.push_back(0.0);
  }
  CHECK(add_noise(s, 0.0, 5).values == s.values);
  const auto a = add_noise(s, 0.0015, 42), b = add_noise(s, 0.0015, 42);
  CHECK(a.values == b.values);
  double mean = 0.0;
  for (double v : a.values) mean += v;
  mean /= static_cast<double>(a.values.size());
  CHECK(std::abs(mean) <= 5 * 0.0015 / std::sqrt(1e5));
  CHECK_THROWS_AS(add_noise(s, -1.0, 1), ContractError);
}

TEST_CASE("SampledSignal and ImpulseTrain validation", "[model]") {
  SampledSignal bad{{0.0, 0.0}, {1.0, 2.0}, {}};
  CHECK_THROWS_AS(bad.validate(), ContractError);
  SampledSignal nan{{0.0, 1.0}, {1.0, std::nan("")}, {}};
  CHECK_THROWS_AS(nan.validate(), DomainError);
  ImpulseTrain neg{{{0.0, -1.0}}};
  CHECK_THROWS_AS(neg.validate(), ContractError);
  ImpulseTrain zero{{{0.0, 0.0}}};
  CHECK_NOTHROW(zero.validate());
  CHECK_THROWS_AS(zero.validate(true), ContractError);
}

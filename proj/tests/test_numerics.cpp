#include "pulsid/numerics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

using namespace pulsid;
using Catch::Approx;

TEST_CASE("bisect_predicate locates a threshold", "[numerics]") {
  const double x = bisect_predicate([](double v) { return v < std::sqrt(2.0); }, 0.0, 3.0, 1e-12, true);
  CHECK(x == Approx(std::sqrt(2.0)).margin(1e-12));
  const double y = bisect_predicate([](double v) { return v > 0.25; }, 0.0, 1.0, 1e-10, false);
  CHECK(y == Approx(0.25).margin(1e-10));
}

TEST_CASE("golden_section_minimize on unimodal functions", "[numerics]") {
  auto m = golden_section_minimize([](double x) { return (x - 0.3) * (x - 0.3) + 2.0; }, -1.0, 2.0, 1e-9);
  CHECK(m.x == Approx(0.3).margin(1e-8));
  CHECK(m.value == Approx(2.0).margin(1e-15));
  m = golden_section_minimize([](double x) { return std::abs(x + 0.7); }, -2.0, 1.0, 1e-10);
  CHECK(m.x == Approx(-0.7).margin(1e-9));
}

TEST_CASE("axis_points: half-open, closed, degenerate", "[numerics]") {
  CHECK(axis_points({0.0, 1.0}, 0.25, false).size() == 4);
  CHECK(axis_points({0.0, 1.0}, 0.25, true).size() == 5);
  CHECK(axis_points({0.1, 0.1}, 0.02, true) == std::vector<double>{0.1});
  CHECK(axis_points({0.1, 0.1}, 0.02, false) == std::vector<double>{0.1});
  const auto p = axis_points({0.5, 0.6}, 0.02, true);
  REQUIRE(p.size() == 6);
  CHECK(p.back() == Approx(0.6));
  CHECK_THROWS_AS(axis_points({1.0, 0.0}, 0.1, true), ContractError);
  CHECK_THROWS_AS(axis_points({0.0, 1.0}, 0.0, true), ContractError);
}

TEST_CASE("parallel_for visits each index once for any worker count", "[numerics]") {
  for (std::size_t workers : {1U, 2U, 3U, 8U}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::accumulate(hits.begin(), hits.end(), 0) == 1000);
    CHECK(*std::min_element(hits.begin(), hits.end()) == 1);
  }
  CHECK(resolve_workers(0) >= 1);
  CHECK(resolve_workers(5) == 5);
}

TEST_CASE("parallel_for rethrows a task failure after joining", "[numerics]") {
  std::atomic<int> done{0};
  CHECK_THROWS_AS(parallel_for(50, 4,
                               [&](std::size_t i) {
                                 if (i == 17) throw std::runtime_error("boom");
                                 ++done;
                               }),
                  std::runtime_error);
  CHECK(done.load() == 49);
}

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pgam/binning.hpp"
#include "pgam/error.hpp"
#include "pgam/pava.hpp"

using namespace pgam;

namespace {

// Exhaustive search over contiguous block partitions: each block takes its
// weighted mean; keep the cheapest partition whose means are monotone.
std::vector<double> brute_force_isotonic(const std::vector<double>& y, const std::vector<double>& w, bool increasing) {
  const std::size_t n = y.size();
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<double> best;
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<double> fit(n);
    std::vector<double> means;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool cut = i == n - 1 || (mask >> i & 1u);
      if (!cut) continue;
      double sw = 0, swy = 0;
      for (std::size_t j = start; j <= i; ++j) sw += w[j], swy += w[j] * y[j];
      const double m = swy / sw;
      for (std::size_t j = start; j <= i; ++j) fit[j] = m;
      means.push_back(m);
      start = i + 1;
    }
    bool ok = true;
    for (std::size_t b = 1; b < means.size(); ++b)
      if (increasing ? means[b] < means[b - 1] - 1e-12 : means[b] > means[b - 1] + 1e-12) ok = false;
    if (!ok) continue;
    double cost = 0;
    for (std::size_t i = 0; i < n; ++i) cost += w[i] * (y[i] - fit[i]) * (y[i] - fit[i]);
    if (cost < best_cost - 1e-12) best_cost = cost, best = fit;
  }
  return best;
}

}  // namespace

TEST_CASE("quantile_bin examples") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  const auto b = quantile_bin(v, 4);
  REQUIRE(b.cuts.size() == 3);
  CHECK(b.cuts[0] == 25.5);
  CHECK(b.cuts[1] == 50.5);
  CHECK(b.cuts[2] == 75.5);
  CHECK(b.bin_of(25.0) == 0);
  CHECK(b.bin_of(26.0) == 1);
  CHECK(b.bin_of(-1e9) == 0);
  CHECK(b.bin_of(1e9) == 3);

  const std::vector<double> constant(50, 3.0);
  const auto c = quantile_bin(constant, 16);
  CHECK(c.bin_count() == 1);
  CHECK(c.cuts.empty());

  const std::vector<double> five{5, 1, 4, 2, 3, 3, 1};
  CHECK(quantile_bin(five, 256).bin_count() == 5);

  CHECK_THROWS_AS(quantile_bin(std::vector<double>{}, 4), Error);
  CHECK_THROWS_AS(quantile_bin(v, 0), Error);
}

TEST_CASE("PAVA worked examples") {
  const std::vector<double> ones3(3, 1.0), ones2(2, 1.0);
  CHECK(pava_project(std::vector<double>{1, 2, 3}, ones3, Direction::Increasing) == std::vector<double>{1, 2, 3});
  CHECK(pava_project(std::vector<double>{3, 1, 2}, ones3, Direction::Increasing) == std::vector<double>{2, 2, 2});
  CHECK(pava_project(std::vector<double>{1, 3}, ones2, Direction::Decreasing) == std::vector<double>{2, 2});
  CHECK_THROWS_AS(pava_project(std::vector<double>{1, 3}, ones3, Direction::Increasing), Error);
  CHECK_THROWS_AS(pava_project(std::vector<double>{1, 3}, std::vector<double>{1, 0}, Direction::Increasing), Error);
}

TEST_CASE("PAVA matches brute force on every length <= 8 vector over {0,1,2,3}") {
  std::size_t checked = 0, mismatches = 0;
  for (std::size_t n = 1; n <= 8; ++n) {
    const std::size_t total = std::size_t{1} << (2 * n);
    const std::vector<double> w(n, 1.0);
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(code >> (2 * i) & 3u);
      for (bool inc : {true, false}) {
        const auto got = pava_project(y, w, inc ? Direction::Increasing : Direction::Decreasing);
        const auto want = brute_force_isotonic(y, w, inc);
        for (std::size_t i = 0; i < n; ++i)
          if (std::abs(got[i] - want[i]) > 1e-9) ++mismatches;
        ++checked;
      }
    }
  }
  CHECK(checked == 2 * (4 + 16 + 64 + 256 + 1024 + 4096 + 16384 + 65536));
  CHECK(mismatches == 0);
}

TEST_CASE("PAVA matches brute force with random weights") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> entry(0, 3), weight(1, 9), len(1, 8);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<double> y(n), w(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = entry(rng), w[i] = weight(rng);
    for (bool inc : {true, false}) {
      const auto got = pava_project(y, w, inc ? Direction::Increasing : Direction::Decreasing);
      const auto want = brute_force_isotonic(y, w, inc);
      for (std::size_t i = 0; i < n; ++i) REQUIRE(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
    }
  }
}

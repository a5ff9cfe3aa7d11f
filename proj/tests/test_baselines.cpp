#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "gapfill/baselines.hpp"
#include "gapfill/rng.hpp"
#include "support.hpp"

using namespace gapfill;

namespace {

std::vector<std::uint8_t> all_observed(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

// (values, observed) with the given cells hidden
std::pair<std::vector<double>, std::vector<std::uint8_t>> with_gaps(
    std::vector<double> values, const std::vector<std::size_t>& hidden) {
  std::vector<std::uint8_t> obs(values.size(), 1);
  for (std::size_t i : hidden) obs[i] = 0;
  return {std::move(values), std::move(obs)};
}

}  // namespace

TEST_CASE("descriptor parsing") {
  CHECK(ImputerDescriptor::parse("mean").kind == ImputerKind::mean);
  CHECK(ImputerDescriptor::parse("median").kind == ImputerKind::median);
  CHECK(ImputerDescriptor::parse("mode").kind == ImputerKind::mode);
  CHECK(ImputerDescriptor::parse("nearest").kind == ImputerKind::nearest);
  CHECK(ImputerDescriptor::parse("linear").kind == ImputerKind::linear);
  CHECK(ImputerDescriptor::parse("transformer").kind == ImputerKind::transformer);

  const auto cubic = ImputerDescriptor::parse("spline");
  CHECK(cubic.kind == ImputerKind::spline);
  CHECK(cubic.spline_order == 3);
  CHECK(ImputerDescriptor::parse("spline:3") == cubic);
  const auto quad = ImputerDescriptor::parse("spline:2");
  CHECK(quad.spline_order == 2);
  CHECK(ImputerDescriptor::parse("quadratic").spline_order == 2);

  CHECK(ImputerDescriptor::parse("spline:2").str() == ImputerDescriptor::parse("quadratic").str());
  CHECK(ImputerDescriptor::parse(cubic.str()) == cubic);

  CHECK_THROWS(ImputerDescriptor::parse("knn"));
  CHECK_THROWS(ImputerDescriptor::parse("spline:4"));
  CHECK_THROWS(ImputerDescriptor::parse(""));
}

TEST_CASE("statistic fills") {
  SUBCASE("mean of {2,4}") {
    auto [v, o] = with_gaps({2, 0, 4}, {1});
    CHECK(impute_mean(v, o)[1] == doctest::Approx(3.0));
  }

  SUBCASE("median and mode of {1,1,2,100}") {
    auto [v, o] = with_gaps({1, 1, 2, 100, 0}, {4});
    CHECK(impute_median(v, o)[4] == doctest::Approx(1.5));
    CHECK(impute_mode(v, o)[4] == doctest::Approx(1.0));
  }

  SUBCASE("mode favors zero on step-like series") {
    auto [v, o] = with_gaps({0, 0, 0, 5, 0, 0}, {5});
    CHECK(impute_mode(v, o)[5] == 0.0);
  }

  SUBCASE("mode ties break toward the smaller value") {
    auto [v, o] = with_gaps({2.5, 2.5, 1.5, 1.5, 0}, {4});
    CHECK(impute_mode(v, o)[4] == doctest::Approx(1.5));
  }

  SUBCASE("mode merges float near-duplicates at 6 decimals") {
    auto [v, o] = with_gaps({1.0000001, 0.9999999, 5.0, 5.0, 5.0, 0}, {5});
    // both near-1 values share the rounded key 1.0, but 5.0 still wins 3:2
    CHECK(impute_mode(v, o)[5] == doctest::Approx(5.0));
    auto [v2, o2] = with_gaps({1.0000001, 0.9999999, 1.0, 5.0, 5.0, 0}, {5});
    CHECK(impute_mode(v2, o2)[5] == doctest::Approx(1.0));
  }

  SUBCASE("zero observed points is an error") {
    std::vector<double> v{0, 0};
    std::vector<std::uint8_t> o{0, 0};
    CHECK_THROWS(impute_mean(v, o));
    CHECK_THROWS(impute_mode(v, o));
  }
}

TEST_CASE("nearest") {
  std::vector<double> v(11, 0.0);
  v[0] = 1.0;
  v[10] = 9.0;
  std::vector<std::uint8_t> o(11, 0);
  o[0] = o[10] = 1;
  const auto out = impute_nearest(v, o);
  CHECK(out[3] == 1.0);
  CHECK(out[7] == 9.0);
  CHECK(out[5] == 1.0);  // equidistant: earlier wins

  auto [v1, o1] = with_gaps({0, 0, 4.5, 0, 0}, {0, 1, 3, 4});
  for (double x : impute_nearest(v1, o1)) CHECK(x == 4.5);
}

TEST_CASE("linear interpolation") {
  SUBCASE("straight line between anchors") {
    auto [v, o] = with_gaps({0, 0, 0, 0, 0, 10}, {1, 2, 3, 4});
    const auto out = impute_linear(v, o);
    CHECK(out[1] == doctest::Approx(2.0));
    CHECK(out[2] == doctest::Approx(4.0));
    CHECK(out[3] == doctest::Approx(6.0));
    CHECK(out[4] == doctest::Approx(8.0));
  }

  SUBCASE("exact on linear signals under any mask") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 20 + rng.bounded(40);
      const double a = rng.normal(), b = rng.normal();
      std::vector<double> v(n);
      std::vector<std::uint8_t> o(n, 1);
      for (std::size_t t = 0; t < n; ++t) v[t] = a * static_cast<double>(t) + b;
      for (std::size_t t = 0; t < n; ++t)
        if (rng.bernoulli(0.4)) o[t] = 0;
      o[0] = o[n - 1] = 1;  // keep anchors at both ends
      const auto truth = v;
      for (std::size_t t = 0; t < n; ++t)
        if (!o[t]) v[t] = -999.0;
      const auto out = impute_linear(v, o);
      for (std::size_t t = 0; t < n; ++t) CHECK(out[t] == doctest::Approx(truth[t]).epsilon(1e-12));
    }
  }

  SUBCASE("boundary gaps extend the nearest anchor") {
    auto [v, o] = with_gaps({0, 0, 3, 7, 0}, {0, 1, 4});
    const auto out = impute_linear(v, o);
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 3.0);
    CHECK(out[4] == 7.0);
  }

  SUBCASE("interpolated cells stay inside the anchor range") {
    Rng rng(5);
    std::vector<double> v(50);
    std::vector<std::uint8_t> o(50, 1);
    for (auto& x : v) x = rng.normal();
    for (std::size_t t = 10; t < 20; ++t) o[t] = 0;
    const auto out = impute_linear(v, o);
    const double lo = std::min(v[9], v[20]), hi = std::max(v[9], v[20]);
    for (std::size_t t = 10; t < 20; ++t) {
      CHECK(out[t] >= lo - 1e-12);
      CHECK(out[t] <= hi + 1e-12);
    }
  }
}

TEST_CASE("splines") {
  SUBCASE("cubic reproduces polynomials up to degree 3") {
    Rng rng(77);
    for (int deg = 0; deg <= 3; ++deg) {
      for (int trial = 0; trial < 20; ++trial) {
        double coeff[4] = {0, 0, 0, 0};
        for (int d = 0; d <= deg; ++d) coeff[d] = rng.normal();
        const std::size_t n = 40;
        std::vector<double> v(n);
        std::vector<std::uint8_t> o(n, 1);
        for (std::size_t t = 0; t < n; ++t) {
          const double x = static_cast<double>(t) / 10.0;
          v[t] = coeff[0] + x * (coeff[1] + x * (coeff[2] + x * coeff[3]));
        }
        const auto truth = v;
        for (std::size_t t = 5; t < 12; ++t) o[t] = 0;
        for (std::size_t t = 25; t < 30; ++t) o[t] = 0;
        const auto out = impute_spline(v, o, 3);
        for (std::size_t t = 0; t < n; ++t) CHECK(std::abs(out[t] - truth[t]) < 1e-9);
      }
    }
  }

  SUBCASE("quadratic reproduces quadratics and lines") {
    for (int deg = 0; deg <= 2; ++deg) {
      const std::size_t n = 30;
      std::vector<double> v(n);
      std::vector<std::uint8_t> o(n, 1);
      for (std::size_t t = 0; t < n; ++t) {
        const double x = static_cast<double>(t);
        v[t] = deg == 0 ? 2.0 : (deg == 1 ? 0.5 * x - 1.0 : 0.25 * x * x - x + 3.0);
      }
      const auto truth = v;
      for (std::size_t t = 8; t < 15; ++t) o[t] = 0;
      const auto out = impute_spline(v, o, 2);
      for (std::size_t t = 0; t < n; ++t) CHECK(std::abs(out[t] - truth[t]) < 1e-9);
    }
  }

  SUBCASE("natural boundary is a different interpolant") {
    const std::size_t n = 24;
    std::vector<double> v(n);
    std::vector<std::uint8_t> o(n, 1);
    for (std::size_t t = 0; t < n; ++t) {
      const double x = static_cast<double>(t) / 4.0;
      v[t] = x * x * x;  // cubic: not-a-knot is exact, natural cannot be
    }
    const auto truth = v;
    // mask near the right edge: there f'' is far from zero, so forcing the
    // natural condition f''=0 at the last knot bends the fit away from truth
    for (std::size_t t = 19; t < 23; ++t) o[t] = 0;
    const auto knot = impute_spline(v, o, 3, SplineBoundary::not_a_knot);
    const auto natural = impute_spline(v, o, 3, SplineBoundary::natural);
    double knot_err = 0.0, natural_err = 0.0;
    for (std::size_t t = 19; t < 23; ++t) {
      knot_err = std::max(knot_err, std::abs(knot[t] - truth[t]));
      natural_err = std::max(natural_err, std::abs(natural[t] - truth[t]));
    }
    CHECK(knot_err < 1e-9);
    CHECK(natural_err > 1e-6);
  }

  SUBCASE("spline can overshoot the observed range on steps") {
    std::vector<double> v{0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    std::vector<std::uint8_t> o(v.size(), 1);
    o[8] = o[9] = 0;  // plateau cells right after the jump, where ringing peaks
    const auto out = impute_spline(v, o, 3);
    double lo = 1e300, hi = -1e300;
    for (std::size_t t = 0; t < v.size(); ++t)
      if (o[t]) {
        lo = std::min(lo, v[t]);
        hi = std::max(hi, v[t]);
      }
    bool outside = false;
    for (std::size_t t = 8; t <= 9; ++t)
      if (out[t] < lo - 1e-9 || out[t] > hi + 1e-9) outside = true;
    CHECK(outside);
  }

  SUBCASE("too few anchors") {
    auto [v, o] = with_gaps({1, 0, 2, 0, 3}, {1, 3});
    CHECK_THROWS(impute_spline(v, o, 3));  // 3 anchors < order+1
    CHECK_NOTHROW(impute_spline(v, o, 2));
  }
}

TEST_CASE("brute-force oracles for the statistic imputers") {
  Rng rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 5 + rng.bounded(20);
    std::vector<double> v(n);
    std::vector<std::uint8_t> o(n, 1);
    for (auto& x : v) x = std::round(rng.normal() * 4.0) / 2.0;  // small value pool
    std::size_t hidden = 0;
    for (std::size_t t = 0; t < n; ++t)
      if (rng.bernoulli(0.3)) {
        o[t] = 0;
        ++hidden;
      }
    if (hidden == n) o[rng.bounded(n)] = 1;

    std::vector<double> obs;
    for (std::size_t t = 0; t < n; ++t)
      if (o[t]) obs.push_back(v[t]);

    double mean_want = 0.0;
    for (double x : obs) mean_want += x;
    mean_want /= static_cast<double>(obs.size());

    std::vector<double> sorted = obs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median_want =
        m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

    std::map<double, std::size_t> counts;
    for (double x : obs) counts[std::round(x * 1e6) / 1e6]++;
    double mode_want = counts.begin()->first;
    for (const auto& [val, cnt] : counts)
      if (cnt > counts[mode_want]) mode_want = val;

    const auto mean_out = impute_mean(v, o);
    const auto median_out = impute_median(v, o);
    const auto mode_out = impute_mode(v, o);
    const auto nearest_out = impute_nearest(v, o);

    for (std::size_t t = 0; t < n; ++t) {
      if (o[t]) {
        CHECK(mean_out[t] == v[t]);
        CHECK(median_out[t] == v[t]);
        CHECK(mode_out[t] == v[t]);
        CHECK(nearest_out[t] == v[t]);
        continue;
      }
      CHECK(mean_out[t] == doctest::Approx(mean_want).epsilon(1e-12));
      CHECK(median_out[t] == doctest::Approx(median_want).epsilon(1e-12));
      CHECK(mode_out[t] == doctest::Approx(mode_want).epsilon(1e-12));

      // nearest with earlier-wins ties, by exhaustive scan
      std::size_t best = n;
      std::size_t best_dist = n + 1;
      for (std::size_t s = 0; s < n; ++s)
        if (o[s]) {
          const std::size_t dist = s > t ? s - t : t - s;
          if (dist < best_dist) {
            best_dist = dist;
            best = s;
          }
        }
      CHECK(nearest_out[t] == v[best]);
    }
  }
}

TEST_CASE("idempotence on fully observed input") {
  Rng rng(8);
  std::vector<double> v(64);
  for (auto& x : v) x = rng.normal();
  const auto o = all_observed(64);
  for (const char* name : {"mean", "median", "mode", "nearest", "linear", "spline", "quadratic"}) {
    const auto out = impute_series(v, o, ImputerDescriptor::parse(name));
    CHECK(out == v);
  }
}

TEST_CASE("impute_frame") {
  auto frame = testsupport::make_frame(
      2, 60, [](std::size_t c, std::size_t t) { return c ? std::sin(0.2 * t) : 0.5 * t; });
  testsupport::punch_gap(frame, 0, 10, 6);
  testsupport::punch_gap(frame, 1, 30, 4);

  const auto done = impute_frame(frame, ImputerDescriptor::parse("linear"));
  CHECK(done.observed_count() == done.values.size());
  for (std::size_t t = 10; t < 16; ++t)
    CHECK(done.raw(0, t) == doctest::Approx(0.5 * t).epsilon(1e-12));  // linear channel exact
  for (std::size_t t = 0; t < 60; ++t)
    if (frame.is_observed(1, t)) CHECK(done.raw(1, t) == frame.raw(1, t));

  CHECK_THROWS(impute_frame(frame, ImputerDescriptor::parse("transformer")));
}

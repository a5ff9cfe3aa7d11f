#include "gapfill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace gapfill {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth, const char* who,
                std::size_t min_n) {
  if (pred.size() != truth.size())
    throw std::invalid_argument(std::string(who) + ": length mismatch (" +
                                std::to_string(pred.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  if (pred.size() < min_n)
    throw std::invalid_argument(std::string(who) + ": needs at least " + std::to_string(min_n) +
                                " points, got " + std::to_string(pred.size()));
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "mae", 1);
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
  return sum / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "rmse", 1);
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

CorrelationResult pearson(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "pearson", 2);
  const double n = static_cast<double>(pred.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mx += pred[i];
    my += truth[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mx, dy = truth[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);  // guard rounding at |r| = 1
  return {r, false};
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    // positions i..j share the same value; ranks are 1-based
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

CorrelationResult spearman(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "spearman", 2);
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return pearson(rp, rt);
}

MetricValues score(std::span<const double> pred, std::span<const double> truth) {
  MetricValues m;
  m.mae = mae(pred, truth);
  m.rmse = rmse(pred, truth);
  if (pred.size() >= 2) {
    const auto p = pearson(pred, truth);
    const auto s = spearman(pred, truth);
    m.pearson = p.value;
    m.spearman = s.value;
    m.degenerate = p.degenerate || s.degenerate;
  } else {
    m.degenerate = true;
  }
  m.n_points = pred.size();
  return m;
}

std::pair<std::vector<double>, std::vector<double>> gather_masked(const TimeSeriesFrame& completed,
                                                                  const GroundTruth& truth) {
  std::vector<double> pred, actual;
  pred.reserve(truth.cells.size());
  actual.reserve(truth.cells.size());
  for (const GroundTruth::Cell& cell : truth.cells) {
    if (cell.channel >= completed.n_channels() || cell.time >= completed.n_steps)
      throw std::invalid_argument("gather_masked: ground-truth cell outside the frame");
    if (!completed.is_observed(cell.channel, cell.time))
      throw std::invalid_argument("gather_masked: cell (" + std::to_string(cell.channel) + ", " +
                                  std::to_string(cell.time) + ") was not imputed");
    pred.push_back(completed.raw(cell.channel, cell.time));
    actual.push_back(cell.value);
  }
  return {std::move(pred), std::move(actual)};
}

double accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("accuracy: inputs must be equal-length and non-empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Aggregate aggregate(std::span<const double> xs) {
  if (xs.size() < 2)
    throw std::invalid_argument("aggregate: needs at least 2 runs, got " +
                                std::to_string(xs.size()));
  Aggregate a;
  a.n = xs.size();
  double sum = 0;
  for (double x : xs) sum += x;
  a.mean = sum / static_cast<double>(a.n);
  double ss = 0;
  for (double x : xs) {
    const double d = x - a.mean;
    ss += d * d;
  }
  a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
  return a;
}

std::string format_mean_std(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", a.mean, a.stddev);
  return buf;
}

}  // namespace gapfill

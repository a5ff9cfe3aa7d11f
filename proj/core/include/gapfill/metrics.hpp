#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gapfill/frame.hpp"
#include "gapfill/masking.hpp"

namespace gapfill {

double mae(std::span<const double> pred, std::span<const double> truth);
double rmse(std::span<const double> pred, std::span<const double> truth);

struct CorrelationResult {
  double value = 0.0;
  bool degenerate = false;  // zero variance on either side; value forced to 0
};

CorrelationResult pearson(std::span<const double> pred, std::span<const double> truth);
/// Pearson over average ranks (ties share their rank block's mean).
CorrelationResult spearman(std::span<const double> pred, std::span<const double> truth);
/// 1-based average ranks, exposed for rank-oracle testing.
std::vector<double> average_ranks(std::span<const double> x);

/// All four reconstruction metrics over one (pred, truth) pair.
struct MetricValues {
  double mae = 0.0;
  double rmse = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t n_points = 0;
  bool degenerate = false;
};

MetricValues score(std::span<const double> pred, std::span<const double> truth);

/// Pulls (imputed, true) value pairs at exactly the hidden cells.
std::pair<std::vector<double>, std::vector<double>> gather_masked(const TimeSeriesFrame& completed,
                                                                  const GroundTruth& truth);

double accuracy(std::span<const int> pred, std::span<const int> truth);

/// Sample mean and n-1 standard deviation across runs; needs >= 2 runs.
struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

Aggregate aggregate(std::span<const double> xs);
/// Table-style rendering, e.g. "0.40 ± 0.14".
std::string format_mean_std(const Aggregate& a);

}  // namespace gapfill

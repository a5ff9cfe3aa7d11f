#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gapfill/frame.hpp"

namespace gapfill {

enum class ImputerKind { mean, median, mode, nearest, linear, spline, quadratic, transformer };

/// Strategy selector as written in experiment configs: "mean", "nearest",
/// "spline" (cubic), "spline:2", "quadratic", "transformer", ...
struct ImputerDescriptor {
  ImputerKind kind = ImputerKind::linear;
  int spline_order = 3;

  static ImputerDescriptor parse(const std::string& text);
  std::string str() const;
  bool operator==(const ImputerDescriptor&) const = default;
};

// All single-channel imputers share the contract: observed cells are returned
// unchanged, every masked cell is filled, and a gap with no anchor on one
// side falls back to nearest-value extension.

std::vector<double> impute_mean(std::span<const double> values,
                                std::span<const std::uint8_t> observed);
std::vector<double> impute_median(std::span<const double> values,
                                  std::span<const std::uint8_t> observed);
/// Exact-value mode after rounding to 6 decimals (merges float duplicates);
/// ties break toward the smallest value.
std::vector<double> impute_mode(std::span<const double> values,
                                std::span<const std::uint8_t> observed);
/// Temporally nearest observed value; ties break toward the earlier point.
std::vector<double> impute_nearest(std::span<const double> values,
                                   std::span<const std::uint8_t> observed);
std::vector<double> impute_linear(std::span<const double> values,
                                  std::span<const std::uint8_t> observed);

enum class SplineBoundary { not_a_knot, natural };

/// Piecewise polynomial through all observed anchors, order 2 (quadratic) or
/// 3 (cubic). Needs at least order+1 observed points. The default not-a-knot
/// boundary reproduces polynomials up to the spline order exactly.
std::vector<double> impute_spline(std::span<const double> values,
                                  std::span<const std::uint8_t> observed, int order,
                                  SplineBoundary boundary = SplineBoundary::not_a_knot);

/// Dispatch on a descriptor; rejects ImputerKind::transformer (model-based
/// imputation lives with the model).
std::vector<double> impute_series(std::span<const double> values,
                                  std::span<const std::uint8_t> observed,
                                  const ImputerDescriptor& desc);

/// Channel-by-channel application over a frame; the result is fully observed.
TimeSeriesFrame impute_frame(const TimeSeriesFrame& frame, const ImputerDescriptor& desc);

}  // namespace gapfill

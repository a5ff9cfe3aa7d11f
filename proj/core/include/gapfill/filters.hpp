#pragma once

#include <array>
#include <span>
#include <vector>

#include "gapfill/frame.hpp"

namespace gapfill {

/// One second-order section in direct form; a1/a2 are the denominator
/// coefficients with a0 normalized to 1.
struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct ButterworthFilter {
  int order = 0;
  double cutoff_hz = 0;
  double sample_rate_hz = 0;
  std::vector<Biquad> sections;
};

struct FilterSpec {
  enum class Kind { butterworth_lowpass, median };
  Kind kind = Kind::butterworth_lowpass;
  int order = 2;
  double cutoff_hz = 0.0;
  int kernel_width = 3;  // median only, odd
};

/// Butterworth low-pass as a cascade of biquads, via bilinear transform with
/// frequency pre-warping. DC gain is exactly 1 per section.
ButterworthFilter design_butterworth(int order, double cutoff_hz, double sample_rate_hz);

/// |H(e^{j 2 pi f / fs})| of the cascade.
double magnitude_at(const ButterworthFilter& filter, double freq_hz);

/// Single causal pass (direct form II transposed), steady-state primed on the
/// first sample.
std::vector<double> filter_forward(std::span<const double> x, const ButterworthFilter& filter);

/// Zero-phase forward-backward application with odd-reflection padding of
/// length 3 x order. Requires signal length > 3 x order.
std::vector<double> filtfilt(std::span<const double> x, const ButterworthFilter& filter);

/// Sliding median with an odd kernel; the window shrinks at the edges.
std::vector<double> median_filter(std::span<const double> x, int kernel_width);

std::vector<double> apply_filter(std::span<const double> x, const FilterSpec& spec,
                                 double sample_rate_hz);

/// Subtracts the low-frequency (gravity) component from each axis:
/// x - lowpass(x, cutoff). Input must have exactly 3 axes.
std::vector<std::vector<double>> remove_gravity(const std::vector<std::vector<double>>& acc_3axis,
                                                double sample_rate_hz, double cutoff_hz = 0.3,
                                                int order = 3);

/// Integer-factor decimation with a Butterworth anti-alias filter at
/// 0.45 x target rate. An output cell is observed only when every covered
/// input cell is observed.
TimeSeriesFrame resample(const TimeSeriesFrame& frame, double target_hz,
                         int antialias_order = 8);

}  // namespace gapfill

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gapfill/frame.hpp"

namespace gapfill {

/// Per-channel z-score parameters, fitted on a designated stats split and
/// reused verbatim on every other split.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Stats over observed cells only (population std). Throws, naming the
/// channel, when a channel has fewer than 2 observed points or zero variance.
ChannelStats fit_channel_stats(const TimeSeriesFrame& frame);

/// (x - mean) / std on observed cells; missing cells stay missing.
TimeSeriesFrame standardize(const TimeSeriesFrame& frame, const ChannelStats& stats);
TimeSeriesFrame destandardize(const TimeSeriesFrame& frame, const ChannelStats& stats);

/// Window start offsets {0, stride, 2*stride, ...} with start+len <= n,
/// i.e. floor((n-len)/stride)+1 of them when n >= len.
std::vector<std::size_t> window_offsets(std::size_t n, std::size_t window_len, std::size_t stride);

/// Contiguous windows of `window_len` steps taken every `stride` steps.
/// Windows never extend past the end; start times shift accordingly.
std::vector<TimeSeriesFrame> slice_windows(const TimeSeriesFrame& frame, std::size_t window_len,
                                           std::size_t stride);

/// Label-homogeneous windows. The frame is split into maximal runs of a
/// constant label and windows are cut independently inside each run, so a
/// label change restarts window placement at the first step of the new run.
std::vector<LabeledWindow> slice_labeled_windows(std::span<const double> values,
                                                 std::size_t n_channels,
                                                 std::span<const int> labels,
                                                 std::size_t window_len, std::size_t stride,
                                                 const std::string& subject_id);

}  // namespace gapfill

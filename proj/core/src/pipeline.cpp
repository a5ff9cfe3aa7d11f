#include "gapfill/pipeline.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gapfill {

ChannelStats fit_channel_stats(const TimeSeriesFrame& frame) {
  ChannelStats stats;
  stats.mean.resize(frame.n_channels(), 0.0);
  stats.stddev.resize(frame.n_channels(), 1.0);
  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    const auto vals = frame.channel_values(c);
    const auto obs = frame.channel_observed(c);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < vals.size(); ++t)
      if (obs[t]) {
        sum += vals[t];
        ++n;
      }
    if (n < 2)
      throw std::invalid_argument("standardize: channel '" + frame.channels[c].name +
                                  "' has fewer than 2 observed points");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t t = 0; t < vals.size(); ++t)
      if (obs[t]) {
        const double d = vals[t] - mean;
        ss += d * d;
      }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd < 1e-12)
      throw std::invalid_argument("standardize: channel '" + frame.channels[c].name +
                                  "' is constant; cannot z-score");
    stats.mean[c] = mean;
    stats.stddev[c] = sd;
  }
  return stats;
}

namespace {

TimeSeriesFrame affine_transform(const TimeSeriesFrame& frame, const ChannelStats& stats,
                                 bool forward) {
  if (stats.mean.size() != frame.n_channels())
    throw std::invalid_argument("standardize: stats cover " + std::to_string(stats.mean.size()) +
                                " channels but frame has " + std::to_string(frame.n_channels()));
  TimeSeriesFrame out = frame;
  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    for (std::size_t t = 0; t < frame.n_steps; ++t) {
      if (!frame.is_observed(c, t)) continue;
      const double v = frame.raw(c, t);
      out.values[out.idx(c, t)] =
          forward ? (v - stats.mean[c]) / stats.stddev[c] : v * stats.stddev[c] + stats.mean[c];
    }
  }
  return out;
}

}  // namespace

TimeSeriesFrame standardize(const TimeSeriesFrame& frame, const ChannelStats& stats) {
  return affine_transform(frame, stats, true);
}

TimeSeriesFrame destandardize(const TimeSeriesFrame& frame, const ChannelStats& stats) {
  return affine_transform(frame, stats, false);
}

std::vector<std::size_t> window_offsets(std::size_t n, std::size_t window_len,
                                        std::size_t stride) {
  if (window_len == 0 || stride == 0)
    throw std::invalid_argument("window_offsets: window length and stride must be positive");
  std::vector<std::size_t> out;
  for (std::size_t start = 0; n >= window_len && start + window_len <= n; start += stride)
    out.push_back(start);
  return out;
}

std::vector<TimeSeriesFrame> slice_windows(const TimeSeriesFrame& frame, std::size_t window_len,
                                           std::size_t stride) {
  if (window_len == 0 || stride == 0)
    throw std::invalid_argument("slice_windows: window length and stride must be positive");
  std::vector<TimeSeriesFrame> out;
  if (frame.n_steps < window_len) return out;
  const double dt = 1.0 / frame.sample_rate_hz;
  for (std::size_t start = 0; start + window_len <= frame.n_steps; start += stride) {
    TimeSeriesFrame w =
        TimeSeriesFrame::make(frame.channels, window_len, frame.sample_rate_hz, frame.subject_id);
    w.start_time = frame.start_time + static_cast<double>(start) * dt;
    for (std::size_t c = 0; c < frame.n_channels(); ++c) {
      const auto vals = frame.channel_values(c);
      const auto obs = frame.channel_observed(c);
      for (std::size_t t = 0; t < window_len; ++t)
        if (obs[start + t]) w.set(c, t, vals[start + t]);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<LabeledWindow> slice_labeled_windows(std::span<const double> values,
                                                 std::size_t n_channels,
                                                 std::span<const int> labels,
                                                 std::size_t window_len, std::size_t stride,
                                                 const std::string& subject_id) {
  if (window_len == 0 || stride == 0)
    throw std::invalid_argument("slice_labeled_windows: window length and stride must be positive");
  const std::size_t n = labels.size();
  if (n_channels == 0 || values.size() != n_channels * n)
    throw std::invalid_argument(
        "slice_labeled_windows: values size does not match channels x labels");

  std::vector<LabeledWindow> out;
  std::size_t run_begin = 0;
  while (run_begin < n) {
    std::size_t run_end = run_begin + 1;
    while (run_end < n && labels[run_end] == labels[run_begin]) ++run_end;
    // Windows are cut inside this constant-label run only; the next run
    // starts fresh at its first step.
    for (std::size_t start = run_begin; start + window_len <= run_end; start += stride) {
      LabeledWindow w;
      w.n_channels = n_channels;
      w.window_len = window_len;
      w.label = labels[run_begin];
      w.subject_id = subject_id;
      w.source_offset = start;
      w.values.resize(n_channels * window_len);
      for (std::size_t c = 0; c < n_channels; ++c)
        for (std::size_t t = 0; t < window_len; ++t)
          w.values[c * window_len + t] = values[c * n + start + t];
      out.push_back(std::move(w));
    }
    run_begin = run_end;
  }
  return out;
}

}  // namespace gapfill

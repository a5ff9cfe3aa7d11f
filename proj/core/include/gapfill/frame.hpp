#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gapfill {

struct ChannelInfo {
  std::string name;
  std::string unit;
  std::string source;
};

/// Uniformly sampled multichannel series with a per-cell observation mask.
/// Unobserved cells hold a NaN sentinel and must not be read as data.
struct TimeSeriesFrame {
  std::vector<ChannelInfo> channels;
  double sample_rate_hz = 1.0;
  std::string subject_id;
  double start_time = 0.0;
  std::size_t n_steps = 0;
  std::vector<double> values;         // channel-major, n_channels x n_steps
  std::vector<std::uint8_t> observed;

  static TimeSeriesFrame make(std::vector<ChannelInfo> channels, std::size_t n_steps,
                              double sample_rate_hz, std::string subject_id = {});

  std::size_t n_channels() const { return channels.size(); }
  std::size_t idx(std::size_t c, std::size_t t) const { return c * n_steps + t; }

  bool is_observed(std::size_t c, std::size_t t) const { return observed[idx(c, t)] != 0; }
  /// Checked read; throws if the cell is unobserved.
  double at(std::size_t c, std::size_t t) const;
  double raw(std::size_t c, std::size_t t) const { return values[idx(c, t)]; }
  void set(std::size_t c, std::size_t t, double v);
  void clear(std::size_t c, std::size_t t);

  std::span<const double> channel_values(std::size_t c) const;
  std::span<const std::uint8_t> channel_observed(std::size_t c) const;

  std::size_t observed_count() const;
  std::size_t observed_count(std::size_t c) const;
  int channel_index(const std::string& name) const;  // -1 if absent

  /// Shape and uniform-sampling invariants; throws on violation.
  void validate() const;
};

/// Fixed-length fully observed slice of a frame plus its class label.
struct LabeledWindow {
  std::vector<double> values;  // n_channels x window_len
  std::size_t n_channels = 0;
  std::size_t window_len = 0;
  int label = -1;
  std::string subject_id;
  std::size_t source_offset = 0;

  double at(std::size_t c, std::size_t t) const { return values[c * window_len + t]; }
};

// Frame exchange format: a CSV `timestamp,subject_id,<channel>...` with empty
// cells for missing values, plus a `<path>.meta.json` sidecar carrying the
// sample rate and channel metadata.
void save_frame_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);
TimeSeriesFrame load_frame_csv(const std::filesystem::path& path);

/// Exact decimal round-trip formatting for doubles ("%.17g" with a fast exact
/// short path); all report/exchange files use this.
std::string format_double(double v);

}  // namespace gapfill

#include "gapfill/frame.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace gapfill {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

TimeSeriesFrame TimeSeriesFrame::make(std::vector<ChannelInfo> channels, std::size_t n_steps,
                                      double sample_rate_hz, std::string subject_id) {
  if (sample_rate_hz <= 0.0) throw std::invalid_argument("frame: sample rate must be positive");
  TimeSeriesFrame f;
  f.channels = std::move(channels);
  f.sample_rate_hz = sample_rate_hz;
  f.subject_id = std::move(subject_id);
  f.n_steps = n_steps;
  f.values.assign(f.channels.size() * n_steps, kMissing);
  f.observed.assign(f.channels.size() * n_steps, 0);
  return f;
}

double TimeSeriesFrame::at(std::size_t c, std::size_t t) const {
  if (!is_observed(c, t)) {
    throw std::logic_error("frame: read of unobserved cell (" + channels[c].name + ", t=" +
                           std::to_string(t) + ")");
  }
  return values[idx(c, t)];
}

void TimeSeriesFrame::set(std::size_t c, std::size_t t, double v) {
  values[idx(c, t)] = v;
  observed[idx(c, t)] = 1;
}

void TimeSeriesFrame::clear(std::size_t c, std::size_t t) {
  values[idx(c, t)] = kMissing;
  observed[idx(c, t)] = 0;
}

std::span<const double> TimeSeriesFrame::channel_values(std::size_t c) const {
  return {values.data() + c * n_steps, n_steps};
}

std::span<const std::uint8_t> TimeSeriesFrame::channel_observed(std::size_t c) const {
  return {observed.data() + c * n_steps, n_steps};
}

std::size_t TimeSeriesFrame::observed_count() const {
  std::size_t n = 0;
  for (auto o : observed) n += o;
  return n;
}

std::size_t TimeSeriesFrame::observed_count(std::size_t c) const {
  std::size_t n = 0;
  for (auto o : channel_observed(c)) n += o;
  return n;
}

int TimeSeriesFrame::channel_index(const std::string& name) const {
  for (std::size_t c = 0; c < channels.size(); ++c)
    if (channels[c].name == name) return static_cast<int>(c);
  return -1;
}

void TimeSeriesFrame::validate() const {
  if (sample_rate_hz <= 0.0) throw std::invalid_argument("frame: sample rate must be positive");
  const std::size_t n = channels.size() * n_steps;
  if (values.size() != n || observed.size() != n) {
    throw std::invalid_argument("frame: values/observed size mismatch with channels x steps");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (observed[i] && !std::isfinite(values[i])) {
      throw std::invalid_argument("frame: observed cell holds non-finite value");
    }
  }
}

void save_frame_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  frame.validate();
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("frame: cannot open '" + path.string() + "' for writing");
  f << "timestamp,subject_id";
  for (const auto& ch : frame.channels) f << ',' << ch.name;
  f << '\n';
  const double dt = 1.0 / frame.sample_rate_hz;
  for (std::size_t t = 0; t < frame.n_steps; ++t) {
    f << format_double(frame.start_time + static_cast<double>(t) * dt) << ',' << frame.subject_id;
    for (std::size_t c = 0; c < frame.n_channels(); ++c) {
      f << ',';
      if (frame.is_observed(c, t)) f << format_double(frame.raw(c, t));
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("frame: write failed for '" + path.string() + "'");

  nlohmann::json meta;
  meta["sample_rate_hz"] = frame.sample_rate_hz;
  meta["start_time"] = frame.start_time;
  meta["subject_id"] = frame.subject_id;
  auto chans = nlohmann::json::array();
  for (const auto& ch : frame.channels) {
    chans.push_back({{"name", ch.name}, {"unit", ch.unit}, {"source", ch.source}});
  }
  meta["channels"] = chans;
  std::ofstream mf(path.string() + ".meta.json", std::ios::trunc);
  mf << meta.dump(2) << '\n';
  if (!mf) throw std::runtime_error("frame: sidecar write failed for '" + path.string() + "'");
}

TimeSeriesFrame load_frame_csv(const std::filesystem::path& path) {
  std::ifstream mf(path.string() + ".meta.json");
  if (!mf) throw std::runtime_error("frame: missing sidecar '" + path.string() + ".meta.json'");
  nlohmann::json meta = nlohmann::json::parse(mf);

  std::ifstream f(path);
  if (!f) throw std::runtime_error("frame: cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("frame: empty file '" + path.string() + "'");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "subject_id") {
    throw std::runtime_error("frame: bad header in '" + path.string() +
                             "' (expected timestamp,subject_id,<channels>)");
  }

  std::vector<ChannelInfo> channels;
  const auto& meta_chans = meta.at("channels");
  if (meta_chans.size() != header.size() - 2) {
    throw std::runtime_error("frame: sidecar channel count disagrees with CSV header");
  }
  for (std::size_t c = 0; c < meta_chans.size(); ++c) {
    ChannelInfo info{meta_chans[c].at("name").get<std::string>(),
                     meta_chans[c].value("unit", ""), meta_chans[c].value("source", "")};
    if (info.name != header[c + 2]) {
      throw std::runtime_error("frame: column '" + header[c + 2] + "' does not match sidecar channel '" +
                               info.name + "'");
    }
    channels.push_back(std::move(info));
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("frame: row with " + std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }

  auto frame = TimeSeriesFrame::make(std::move(channels), rows.size(),
                                     meta.at("sample_rate_hz").get<double>(),
                                     meta.value("subject_id", ""));
  frame.start_time = meta.value("start_time", 0.0);

  const double dt = 1.0 / frame.sample_rate_hz;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto& cells = rows[t];
    const double ts = std::strtod(cells[0].c_str(), nullptr);
    const double expected = frame.start_time + static_cast<double>(t) * dt;
    const double tol = 1e-6 * dt;
    if (std::abs(ts - expected) > tol) {
      throw std::runtime_error("frame: non-uniform timestamp at row " + std::to_string(t) + " in '" +
                               path.string() + "'");
    }
    if (!frame.subject_id.empty() && cells[1] != frame.subject_id) {
      throw std::runtime_error("frame: subject_id changes mid-file in '" + path.string() + "'");
    }
    for (std::size_t c = 0; c < frame.n_channels(); ++c) {
      const std::string& cell = cells[c + 2];
      if (!cell.empty()) frame.set(c, t, std::strtod(cell.c_str(), nullptr));
    }
  }
  frame.validate();
  return frame;
}

}  // namespace gapfill

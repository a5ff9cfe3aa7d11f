#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "gapfill/rng.hpp"

namespace fs = std::filesystem;
using namespace gapfill;

namespace testsupport {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gapfill-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TimeSeriesFrame make_frame(std::size_t n_channels, std::size_t n_steps,
                           const std::function<double(std::size_t, std::size_t)>& value,
                           double rate_hz, std::string subject) {
  std::vector<ChannelInfo> channels(n_channels);
  for (std::size_t c = 0; c < n_channels; ++c)
    channels[c] = {"ch" + std::to_string(c), "z", "test"};
  TimeSeriesFrame f = TimeSeriesFrame::make(std::move(channels), n_steps, rate_hz,
                                            std::move(subject));
  for (std::size_t c = 0; c < n_channels; ++c)
    for (std::size_t t = 0; t < n_steps; ++t) f.set(c, t, value(c, t));
  return f;
}

void punch_gap(TimeSeriesFrame& frame, std::size_t channel, std::size_t start, std::size_t len) {
  for (std::size_t t = start; t < start + len; ++t) frame.clear(channel, t);
}

double lag_autocorr(std::span<const double> x, std::size_t lag) {
  if (x.size() <= lag) throw std::invalid_argument("lag_autocorr: series too short");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    if (i + lag < x.size()) num += (x[i] - mean) * (x[i + lag] - mean);
  }
  return num / den;
}

double max_grad_rel_error(Tensor& param, const std::function<Tensor()>& loss_fn, double h) {
  param.zero_grad();
  backward(loss_fn());
  const auto g = param.grad();
  std::vector<double> analytic(g.begin(), g.end());
  param.zero_grad();

  double worst = 0.0;
  auto vals = param.mutable_data();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double up = loss_fn().item();
    vals[i] = orig - h;
    const double down = loss_fn().item();
    vals[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    // floor the denominator above finite-difference noise: parameters with a
    // (near-)zero true gradient would otherwise compare noise against noise
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

namespace {

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& columns) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("fixture: cannot write " + path.string());
  out << header << "\n";
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c)
      out << (c ? "," : "") << format_double(columns[c][r]);
    out << "\n";
  }
}

void write_label_csv(const fs::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("fixture: cannot write " + path.string());
  out << "label\n";
  for (int l : labels) out << l << "\n";
}

}  // namespace

void write_novartis_fixture(const fs::path& dir) {
  fs::create_directories(dir);
  static const char* names[10] = {"acc", "bar", "bp",   "bpw", "ee",
                                  "hr",  "hrv", "resp", "st",  "step"};
  const std::size_t n = 180;
  for (int day = 0; day < 2; ++day) {
    std::vector<ChannelInfo> channels;
    for (const char* name : names) channels.push_back({name, "au", "fixture"});
    TimeSeriesFrame frame = TimeSeriesFrame::make(std::move(channels), n, 1.0 / 60.0,
                                                  day == 0 ? "S01" : "S02");
    frame.start_time = day * 86400.0;
    for (std::size_t c = 0; c < 10; ++c)
      for (std::size_t t = 0; t < n; ++t) {
        const double x = static_cast<double>(t);
        double v = std::sin(2.0 * std::numbers::pi * x / (20.0 + 3.0 * c)) + 0.1 * c;
        if (c == 9) v = static_cast<double>(t % 3 == 0 ? 5 : 0);  // step-like integers
        frame.set(c, t, v);
      }
    if (day == 1)  // device-off hour: every channel dark over the same cells
      for (std::size_t c = 0; c < 10; ++c)
        for (std::size_t t = 60; t < 120; ++t) frame.clear(c, t);
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.csv", day);
    save_frame_csv(frame, dir / buf);
  }
}

void write_wesad_fixture(const fs::path& dir) {
  const std::size_t n4 = 600;  // 4 Hz steps: 300 baseline + 300 stress
  for (int s = 0; s < 4; ++s) {
    const fs::path sdir = dir / ("S" + std::to_string(s + 2));
    fs::create_directories(sdir);
    auto wave = [&](std::size_t t, double rate, double freq, double amp, double offset) {
      return offset + amp * std::sin(2.0 * std::numbers::pi * freq * t / rate);
    };
    std::vector<std::vector<double>> acc(3, std::vector<double>(n4 * 8));
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t t = 0; t < n4 * 8; ++t)
        acc[a][t] = wave(t, 32.0, 0.8 + 0.2 * a, 0.5, 0.1 * s);
    std::vector<double> bvp(n4 * 16);
    for (std::size_t t = 0; t < bvp.size(); ++t) bvp[t] = wave(t, 64.0, 1.2, 1.0, 0.05 * s);
    std::vector<double> eda(n4), temp(n4);
    std::vector<int> labels(n4);
    const int second_label = s == 3 ? 2 : 1;  // last subject: amusement, not stress
    for (std::size_t t = 0; t < n4; ++t) {
      const int label = t < 300 ? 0 : second_label;
      labels[t] = label;
      eda[t] = wave(t, 4.0, 0.1, 0.3 + 0.2 * label, 2.0 + 0.1 * s);
      temp[t] = 33.0 + 0.05 * s + 0.5 * label + 0.01 * std::sin(0.01 * t);
    }
    write_csv(sdir / "acc.csv", "x,y,z", acc);
    write_csv(sdir / "bvp.csv", "value", {bvp});
    write_csv(sdir / "eda.csv", "value", {eda});
    write_csv(sdir / "temp.csv", "value", {temp});
    write_label_csv(sdir / "labels.csv", labels);
  }
}

void write_ucihar_fixture(const fs::path& dir, bool with_split_file) {
  const std::size_t n = 256;
  for (int s = 0; s < 3; ++s) {
    const fs::path sdir = dir / ("S0" + std::to_string(s + 1));
    fs::create_directories(sdir);
    std::vector<std::vector<double>> acc(3, std::vector<double>(n));
    std::vector<std::vector<double>> gyro(3, std::vector<double>(n));
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t t = 0; t < n; ++t) {
        const double phase = 2.0 * std::numbers::pi * t / 50.0;
        acc[a][t] = 9.81 * (a == 2) + 0.4 * std::sin((2.0 + s + a) * phase);
        gyro[a][t] = 0.2 * std::cos((1.0 + s + a) * phase);
      }
    write_csv(sdir / "acc.csv", "x,y,z", acc);
    write_csv(sdir / "gyro.csv", "x,y,z", gyro);
    write_label_csv(sdir / "labels.csv", std::vector<int>(n, s));
  }
  if (with_split_file) {
    std::ofstream out(dir / "split.csv");
    out << "subject,partition\nS01,train\nS02,train\nS03,test\n";
  }
}

}  // namespace testsupport

#include "gapfill/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gapfill/filters.hpp"
#include "gapfill/pipeline.hpp"
#include "gapfill/rng.hpp"

namespace gapfill {

namespace fs = std::filesystem;

void DatasetManifest::validate() const {
  if (!std::is_sorted(subjects.begin(), subjects.end()) ||
      std::adjacent_find(subjects.begin(), subjects.end()) != subjects.end())
    throw std::invalid_argument("manifest: subject list must be sorted and unique");
  const std::set<std::string> all(subjects.begin(), subjects.end());
  for (const auto& s : train_subjects)
    if (!all.count(s)) throw std::invalid_argument("manifest: unknown train subject '" + s + "'");
  for (const auto& s : test_subjects) {
    if (!all.count(s)) throw std::invalid_argument("manifest: unknown test subject '" + s + "'");
    if (std::find(train_subjects.begin(), train_subjects.end(), s) != train_subjects.end())
      throw std::invalid_argument("manifest: subject '" + s + "' is in both splits");
  }
  std::set<std::string> label_set(labels.begin(), labels.end());
  if (label_set.size() != labels.size())
    throw std::invalid_argument("manifest: duplicate label names");
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_subjects(
    std::vector<std::string> subjects, std::size_t n_train, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 2)
    throw std::invalid_argument("split_subjects: need at least 2 subjects");
  if (n_train == 0 || n_train >= subjects.size())
    throw std::invalid_argument("split_subjects: n_train must leave both sides non-empty");
  Rng rng(seed);
  for (std::size_t i = subjects.size(); i > 1; --i)
    std::swap(subjects[i - 1], subjects[rng.bounded(i)]);
  std::vector<std::string> train(subjects.begin(),
                                 subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::string> test(subjects.begin() + static_cast<std::ptrdiff_t>(n_train),
                                subjects.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Column-major numeric CSV with a fixed expected header.
std::vector<std::vector<double>> read_numeric_csv(const fs::path& path,
                                                  const std::vector<std::string>& header) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw std::runtime_error("dataset: '" + path.string() + "' is empty");
  const auto head = split_line(lines[0]);
  if (head != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw std::runtime_error("dataset: '" + path.string() + "' header is '" + lines[0] +
                             "', expected '" + want + "'");
  }
  std::vector<std::vector<double>> cols(header.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const auto cells = split_line(lines[r]);
    if (cells.size() != header.size())
      throw std::runtime_error("dataset: '" + path.string() + "' row " + std::to_string(r) +
                               " has " + std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0')
        throw std::runtime_error("dataset: '" + path.string() + "' row " + std::to_string(r) +
                                 ": bad number '" + cells[c] + "'");
      cols[c].push_back(v);
    }
  }
  return cols;
}

std::vector<int> read_label_csv(const fs::path& path, int min_label, int max_label) {
  const auto lines = read_lines(path);
  if (lines.empty() || split_line(lines[0]) != std::vector<std::string>{"label"})
    throw std::runtime_error("dataset: '" + path.string() + "' must start with a 'label' header");
  std::vector<int> labels;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    char* end = nullptr;
    const long v = std::strtol(lines[r].c_str(), &end, 10);
    if (end == lines[r].c_str() || *end != '\0' || v < min_label || v > max_label)
      throw std::runtime_error("dataset: '" + path.string() + "' row " + std::to_string(r) +
                               ": bad label '" + lines[r] + "'");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

std::vector<std::string> subject_dirs(const fs::path& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error("dataset: '" + root.string() + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

TimeSeriesFrame columns_to_frame(const std::vector<std::vector<double>>& cols,
                                 const std::vector<std::string>& names, double rate_hz,
                                 const std::string& subject) {
  std::vector<ChannelInfo> channels(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) channels[c].name = names[c];
  TimeSeriesFrame f = TimeSeriesFrame::make(std::move(channels), cols[0].size(), rate_hz, subject);
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t t = 0; t < cols[c].size(); ++t) f.set(c, t, cols[c][t]);
  return f;
}

}  // namespace

const std::array<std::string, 10>& novartis_channel_names() {
  static const std::array<std::string, 10> names = {"acc", "bar", "bp",   "bpw", "ee",
                                                    "hr",  "hrv", "resp", "st",  "step"};
  return names;
}

NovartisData load_novartis(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("dataset: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::runtime_error("dataset: no frame CSVs in '" + dir.string() + "'");

  const auto& expected = novartis_channel_names();
  NovartisData out;
  out.missingness.resize(expected.size());
  for (std::size_t c = 0; c < expected.size(); ++c) out.missingness[c].channel = expected[c];

  std::set<std::string> subjects;
  for (const auto& path : files) {
    TimeSeriesFrame frame = load_frame_csv(path);
    if (frame.n_channels() != expected.size())
      throw std::runtime_error("dataset: '" + path.string() + "' has " +
                               std::to_string(frame.n_channels()) + " channels, expected " +
                               std::to_string(expected.size()));
    for (std::size_t c = 0; c < expected.size(); ++c)
      if (frame.channels[c].name != expected[c])
        throw std::runtime_error("dataset: '" + path.string() + "' column '" +
                                 frame.channels[c].name + "' should be '" + expected[c] + "'");
    if (std::abs(frame.sample_rate_hz - 1.0 / 60.0) > 1e-9)
      throw std::runtime_error("dataset: '" + path.string() +
                               "' is not sampled once per minute");
    for (std::size_t c = 0; c < expected.size(); ++c) {
      out.missingness[c].total_cells += frame.n_steps;
      out.missingness[c].missing_cells += frame.n_steps - frame.observed_count(c);
    }
    subjects.insert(frame.subject_id);
    out.frames.push_back(std::move(frame));
  }

  out.manifest.name = "novartis2020";
  out.manifest.subjects.assign(subjects.begin(), subjects.end());
  out.manifest.files = files;
  for (const auto& name : expected) {
    const std::size_t c = out.manifest.channels.size();
    out.manifest.channels.push_back({name, 1.0 / 60.0, out.frames[0].channels[c].unit});
  }
  out.manifest.validate();
  return out;
}

LabeledDataset load_wesad(const fs::path& dir, std::uint64_t split_seed, bool binary_task) {
  const auto subjects = subject_dirs(dir);
  if (subjects.size() < 2)
    throw std::runtime_error("dataset: wesad layout needs at least 2 subject directories");

  const ButterworthFilter eda_filter = design_butterworth(2, 0.5, 4.0);
  LabeledDataset out;
  std::map<std::string, std::vector<LabeledWindow>> by_subject;

  for (const auto& subject : subjects) {
    const fs::path sdir = dir / subject;
    const auto acc = read_numeric_csv(sdir / "acc.csv", {"x", "y", "z"});
    const auto bvp = read_numeric_csv(sdir / "bvp.csv", {"value"});
    auto eda = read_numeric_csv(sdir / "eda.csv", {"value"});
    const auto temp = read_numeric_csv(sdir / "temp.csv", {"value"});
    const auto labels = read_label_csv(sdir / "labels.csv", -1, 2);
    for (const char* f : {"acc.csv", "bvp.csv", "eda.csv", "temp.csv", "labels.csv"})
      out.manifest.files.push_back(sdir / f);

    eda[0] = filtfilt(eda[0], eda_filter);
    const TimeSeriesFrame acc4 =
        resample(columns_to_frame(acc, {"acc_x", "acc_y", "acc_z"}, 32.0, subject), 4.0);
    const TimeSeriesFrame bvp4 = resample(columns_to_frame(bvp, {"bvp"}, 64.0, subject), 4.0);

    const std::size_t n = std::min({acc4.n_steps, bvp4.n_steps, eda[0].size(), temp[0].size(),
                                    labels.size()});
    std::vector<double> values(6 * n);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < n; ++t) values[c * n + t] = acc4.raw(c, t);
    for (std::size_t t = 0; t < n; ++t) values[3 * n + t] = bvp4.raw(0, t);
    for (std::size_t t = 0; t < n; ++t) values[4 * n + t] = eda[0][t];
    for (std::size_t t = 0; t < n; ++t) values[5 * n + t] = temp[0][t];

    auto windows = slice_labeled_windows(values, 6, std::span(labels).first(n), 240, 239, subject);
    std::erase_if(windows, [](const LabeledWindow& w) { return w.label < 0; });
    if (binary_task)
      for (auto& w : windows) w.label = (w.label == 1) ? 1 : 0;  // stress vs the rest
    by_subject[subject] = std::move(windows);
  }

  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(subjects.size()) * 11.0 / 15.0)),
      1, subjects.size() - 1);
  auto [train, test] = split_subjects(subjects, n_train, split_seed);
  for (const auto& s : train)
    for (auto& w : by_subject[s]) out.train_windows.push_back(std::move(w));
  for (const auto& s : test)
    for (auto& w : by_subject[s]) out.test_windows.push_back(std::move(w));

  out.manifest.name = binary_task ? "wesad-binary" : "wesad";
  out.manifest.channels = {{"acc_x", 4.0, "g"}, {"acc_y", 4.0, "g"}, {"acc_z", 4.0, "g"},
                           {"bvp", 4.0, "au"},  {"eda", 4.0, "uS"},  {"temp", 4.0, "degC"}};
  out.manifest.subjects = subjects;
  out.manifest.train_subjects = std::move(train);
  out.manifest.test_subjects = std::move(test);
  out.manifest.labels = binary_task ? std::vector<std::string>{"non_stress", "stress"}
                                    : std::vector<std::string>{"baseline", "stress", "amusement"};
  out.manifest.split_kind = "random(seed=" + std::to_string(split_seed) + ")";
  out.manifest.validate();
  return out;
}

LabeledDataset load_ucihar(const fs::path& dir, std::uint64_t split_seed) {
  const auto subjects = subject_dirs(dir);
  if (subjects.size() < 2)
    throw std::runtime_error("dataset: inertial layout needs at least 2 subject directories");

  const ButterworthFilter noise_filter = design_butterworth(3, 20.0, 50.0);
  LabeledDataset out;
  std::map<std::string, std::vector<LabeledWindow>> by_subject;

  for (const auto& subject : subjects) {
    const fs::path sdir = dir / subject;
    const auto acc = read_numeric_csv(sdir / "acc.csv", {"x", "y", "z"});
    const auto gyro = read_numeric_csv(sdir / "gyro.csv", {"x", "y", "z"});
    const auto labels = read_label_csv(sdir / "labels.csv", -1, 5);
    for (const char* f : {"acc.csv", "gyro.csv", "labels.csv"})
      out.manifest.files.push_back(sdir / f);

    const std::size_t n = labels.size();
    if (acc[0].size() != n || gyro[0].size() != n)
      throw std::runtime_error("dataset: '" + sdir.string() +
                               "' acc/gyro/label row counts disagree");

    auto clean = [&](const std::vector<double>& x) {
      return filtfilt(median_filter(x, 3), noise_filter);
    };
    std::vector<std::vector<double>> acc_clean(3), gyro_clean(3);
    for (std::size_t a = 0; a < 3; ++a) {
      acc_clean[a] = clean(acc[a]);
      gyro_clean[a] = clean(gyro[a]);
    }
    acc_clean = remove_gravity(acc_clean, 50.0, 0.3, 3);

    std::vector<double> values(6 * n);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t t = 0; t < n; ++t) {
        values[a * n + t] = acc_clean[a][t];
        values[(3 + a) * n + t] = gyro_clean[a][t];
      }
    auto windows = slice_labeled_windows(values, 6, labels, 128, 64, subject);
    std::erase_if(windows, [](const LabeledWindow& w) { return w.label < 0; });
    by_subject[subject] = std::move(windows);
  }

  std::vector<std::string> train, test;
  const fs::path split_file = dir / "split.csv";
  if (fs::exists(split_file)) {
    const auto lines = read_lines(split_file);
    if (lines.empty() || split_line(lines[0]) != std::vector<std::string>{"subject", "partition"})
      throw std::runtime_error("dataset: '" + split_file.string() +
                               "' must start with 'subject,partition'");
    std::map<std::string, std::string> part;
    for (std::size_t r = 1; r < lines.size(); ++r) {
      if (lines[r].empty()) continue;
      const auto cells = split_line(lines[r]);
      if (cells.size() != 2 || (cells[1] != "train" && cells[1] != "test"))
        throw std::runtime_error("dataset: '" + split_file.string() + "' row " +
                                 std::to_string(r) + " is malformed");
      part[cells[0]] = cells[1];
    }
    for (const auto& s : subjects) {
      const auto it = part.find(s);
      if (it == part.end())
        throw std::runtime_error("dataset: '" + split_file.string() +
                                 "' does not assign subject '" + s + "'");
      (it->second == "train" ? train : test).push_back(s);
    }
    if (train.empty() || test.empty())
      throw std::runtime_error("dataset: '" + split_file.string() + "' leaves a split empty");
    out.manifest.split_kind = "canonical";
  } else {
    const std::size_t n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(static_cast<double>(subjects.size()) * 0.7)), 1,
        subjects.size() - 1);
    std::tie(train, test) = split_subjects(subjects, n_train, split_seed);
    out.manifest.split_kind = "random(seed=" + std::to_string(split_seed) + ")";
  }
  for (const auto& s : train)
    for (auto& w : by_subject[s]) out.train_windows.push_back(std::move(w));
  for (const auto& s : test)
    for (auto& w : by_subject[s]) out.test_windows.push_back(std::move(w));

  out.manifest.name = "ucihar";
  out.manifest.channels = {{"acc_x", 50.0, "g"},      {"acc_y", 50.0, "g"},
                           {"acc_z", 50.0, "g"},      {"gyro_x", 50.0, "rad/s"},
                           {"gyro_y", 50.0, "rad/s"}, {"gyro_z", 50.0, "rad/s"}};
  out.manifest.subjects = subjects;
  out.manifest.train_subjects = std::move(train);
  out.manifest.test_subjects = std::move(test);
  out.manifest.labels = {"walking", "upstairs", "downstairs", "sitting", "standing", "laying"};
  out.manifest.validate();
  return out;
}

std::string synthetic_kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::dynamic: return "dynamic";
    case SyntheticKind::smooth: return "smooth";
    case SyntheticKind::discrete: return "discrete";
  }
  throw std::logic_error("unknown synthetic kind");
}

SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "dynamic") return SyntheticKind::dynamic;
  if (name == "smooth") return SyntheticKind::smooth;
  if (name == "discrete") return SyntheticKind::discrete;
  throw std::invalid_argument("unknown synthetic channel kind '" + name + "'");
}

void SyntheticSpec::validate() const {
  if (channels.empty()) throw std::invalid_argument("synthetic spec: no channels");
  std::set<std::string> names;
  for (const auto& c : channels)
    if (c.name.empty() || !names.insert(c.name).second)
      throw std::invalid_argument("synthetic spec: channel names must be non-empty and unique");
  if (n_subjects == 0 || days_per_subject == 0)
    throw std::invalid_argument("synthetic spec: need at least one subject-day");
  if (steps_per_day < 2) throw std::invalid_argument("synthetic spec: steps_per_day too small");
  if (!(sample_rate_hz > 0)) throw std::invalid_argument("synthetic spec: bad sample rate");
  if (n_classes > 0 && (n_classes < 2 || label_run_len == 0))
    throw std::invalid_argument(
        "synthetic spec: a label process needs n_classes >= 2 and label_run_len >= 1");
}

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct LabelRun {
  std::size_t begin, end;
  int label;
};

// Shared per-frame sinusoid bank: two slow latents plus one fast one. Every
// dynamic channel is a fixed mixture of the same bank, so a masked channel
// stays recoverable from the others.
struct SinusoidBank {
  std::array<double, 3> period;
  std::array<double, 3> phase;
};

double bank_value(const SinusoidBank& bank, const std::array<double, 3>& w, std::size_t t,
                  const LabelRun& run, double freq_mult) {
  double v = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double steps = static_cast<double>(t - run.begin);
    v += w[j] * std::numbers::sqrt2 * std::sin(kTau * steps * freq_mult / bank.period[j] +
                                               bank.phase[j]);
  }
  return v;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  SyntheticData out;

  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    for (std::size_t d = 0; d < spec.days_per_subject; ++d) {
      Rng rng(master.next());
      const std::size_t n = spec.steps_per_day;

      std::vector<LabelRun> runs;
      std::vector<int> labels;
      if (spec.n_classes > 0) {
        labels.resize(n);
        for (std::size_t begin = 0; begin < n; begin += spec.label_run_len) {
          const std::size_t end = std::min(n, begin + spec.label_run_len);
          const int label = static_cast<int>(rng.bounded(spec.n_classes));
          for (std::size_t t = begin; t < end; ++t) labels[t] = label;
          runs.push_back({begin, end, label});
        }
      } else {
        runs.push_back({0, n, 0});
      }

      SinusoidBank bank;
      bank.period = {rng.uniform(18.0, 36.0), rng.uniform(18.0, 36.0), rng.uniform(10.0, 16.0)};
      bank.phase = {rng.uniform(0.0, kTau), rng.uniform(0.0, kTau), rng.uniform(0.0, kTau)};

      std::vector<ChannelInfo> infos(spec.channels.size());
      for (std::size_t c = 0; c < spec.channels.size(); ++c)
        infos[c] = {spec.channels[c].name, "z", "synthetic"};
      char subject_name[16];
      std::snprintf(subject_name, sizeof subject_name, "S%02zu", s + 1);
      TimeSeriesFrame frame =
          TimeSeriesFrame::make(std::move(infos), n, spec.sample_rate_hz, subject_name);
      frame.start_time = static_cast<double>(d * n) / spec.sample_rate_hz;

      for (std::size_t c = 0; c < spec.channels.size(); ++c) {
        const SyntheticChannel& ch = spec.channels[c];
        switch (ch.kind) {
          case SyntheticKind::dynamic: {
            const double noise = ch.noise_sigma < 0 ? 0.2 : ch.noise_sigma;
            const double theta = rng.uniform(0.0, kTau);
            std::array<double, 3> w = {0.9 * std::cos(theta), 0.9 * std::sin(theta),
                                       rng.uniform(0.4, 0.55)};
            if (rng.bernoulli(0.5)) w[2] = -w[2];
            for (const LabelRun& run : runs) {
              const double mult = 1.0 + 0.4 * static_cast<double>(run.label);
              for (std::size_t t = run.begin; t < run.end; ++t)
                frame.set(c, t, bank_value(bank, w, t, run, mult) + noise * rng.normal());
            }
            break;
          }
          case SyntheticKind::smooth: {
            const double noise = ch.noise_sigma < 0 ? 0.005 : ch.noise_sigma;
            const double period = rng.uniform(1000.0, 2400.0);
            const double phase = rng.uniform(0.0, kTau);
            double rise = rng.uniform(2.0, 4.0);
            if (rng.bernoulli(0.5)) rise = -rise;
            for (std::size_t t = 0; t < n; ++t) {
              const double u = static_cast<double>(t) / static_cast<double>(n - 1) - 0.5;
              frame.set(c, t,
                        rise * u + 0.5 * std::sin(kTau * static_cast<double>(t) / period + phase) +
                            noise * rng.normal());
            }
            break;
          }
          case SyntheticKind::discrete: {
            // Zero-inflated integer bursts; the label scales the burst rate.
            std::size_t remaining = 0;
            for (const LabelRun& run : runs) {
              const double start_p = 0.05 * (spec.n_classes > 0
                                                 ? 0.6 + 0.4 * static_cast<double>(run.label + 1)
                                                 : 1.0);
              for (std::size_t t = run.begin; t < run.end; ++t) {
                if (remaining == 0 && rng.bernoulli(start_p)) remaining = 1 + rng.bounded(6);
                if (remaining > 0) {
                  frame.set(c, t, static_cast<double>(1 + rng.bounded(5)));
                  --remaining;
                } else {
                  frame.set(c, t, 0.0);
                }
              }
            }
            break;
          }
        }
      }
      out.frames.push_back(std::move(frame));
      if (spec.n_classes > 0) out.labels.push_back(std::move(labels));
    }
  }
  return out;
}

std::vector<LabeledWindow> synthetic_windows(const SyntheticData& data, std::size_t window_len,
                                             std::size_t stride) {
  if (data.labels.size() != data.frames.size())
    throw std::invalid_argument("synthetic_windows: data has no label process");
  std::vector<LabeledWindow> out;
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    const TimeSeriesFrame& f = data.frames[i];
    auto windows = slice_labeled_windows(f.values, f.n_channels(), data.labels[i], window_len,
                                         stride, f.subject_id);
    for (auto& w : windows) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace gapfill

#include "gapfill/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gapfill/baselines.hpp"
#include "gapfill/checkpoint.hpp"
#include "gapfill/metrics.hpp"
#include "gapfill/pipeline.hpp"
#include "gapfill/rng.hpp"
#include "gapfill/version.hpp"

namespace gapfill {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void expect_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError(std::string("config: unknown key '") + key + "' in " + where);
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

void read_into(const json& j, const char* key, fs::path& out) {
  std::string s = out.string();
  read_into(j, key, s);
  out = s;
}

SyntheticSpec synthetic_from_json(const json& j) {
  expect_keys(j, "dataset.synthetic",
              {"channels", "n_subjects", "days_per_subject", "steps_per_day", "sample_rate_hz",
               "seed", "n_classes", "label_run_len"});
  SyntheticSpec spec;
  if (j.contains("channels")) {
    spec.channels.clear();
    for (const auto& cj : j.at("channels")) {
      expect_keys(cj, "synthetic channel", {"name", "kind", "noise_sigma"});
      SyntheticChannel ch;
      read_into(cj, "name", ch.name);
      std::string kind = "dynamic";
      read_into(cj, "kind", kind);
      ch.kind = synthetic_kind_from_name(kind);
      read_into(cj, "noise_sigma", ch.noise_sigma);
      spec.channels.push_back(std::move(ch));
    }
  }
  read_into(j, "n_subjects", spec.n_subjects);
  read_into(j, "days_per_subject", spec.days_per_subject);
  read_into(j, "steps_per_day", spec.steps_per_day);
  read_into(j, "sample_rate_hz", spec.sample_rate_hz);
  read_into(j, "seed", spec.seed);
  read_into(j, "n_classes", spec.n_classes);
  read_into(j, "label_run_len", spec.label_run_len);
  return spec;
}

json synthetic_to_json(const SyntheticSpec& s) {
  json j;
  j["channels"] = json::array();
  for (const auto& c : s.channels)
    j["channels"].push_back({{"name", c.name},
                             {"kind", synthetic_kind_name(c.kind)},
                             {"noise_sigma", c.noise_sigma}});
  j["n_subjects"] = s.n_subjects;
  j["days_per_subject"] = s.days_per_subject;
  j["steps_per_day"] = s.steps_per_day;
  j["sample_rate_hz"] = s.sample_rate_hz;
  j["seed"] = s.seed;
  j["n_classes"] = s.n_classes;
  j["label_run_len"] = s.label_run_len;
  return j;
}

ImputerConfig imputer_config_from_json(const json& j) {
  expect_keys(j, "imputer",
              {"d_model", "n_heads", "ffn_hidden", "n_layers", "window_len", "n_channels",
               "learning_rate", "epochs", "batch_size", "train_mask_ratio", "train_gap_min",
               "train_gap_max", "checkpoint", "train"});
  ImputerConfig c;
  read_into(j, "d_model", c.d_model);
  read_into(j, "n_heads", c.n_heads);
  read_into(j, "ffn_hidden", c.ffn_hidden);
  read_into(j, "n_layers", c.n_layers);
  read_into(j, "window_len", c.window_len);
  read_into(j, "n_channels", c.n_channels);
  read_into(j, "learning_rate", c.learning_rate);
  read_into(j, "epochs", c.epochs);
  read_into(j, "batch_size", c.batch_size);
  read_into(j, "train_mask_ratio", c.train_mask_ratio);
  read_into(j, "train_gap_min", c.train_gap_min);
  read_into(j, "train_gap_max", c.train_gap_max);
  return c;
}

ClassifierConfig classifier_config_from_json(const json& j) {
  expect_keys(j, "classifier",
              {"patch_size", "depth", "n_heads", "d_emb", "d_attn", "d_mlp", "p_emb", "p_attn",
               "p_mlp", "n_classes", "n_channels", "window_len", "mean_pool", "learning_rate",
               "epochs", "batch_size", "patience", "checkpoint"});
  ClassifierConfig c;
  read_into(j, "patch_size", c.patch_size);
  read_into(j, "depth", c.depth);
  read_into(j, "n_heads", c.n_heads);
  read_into(j, "d_emb", c.d_emb);
  read_into(j, "d_attn", c.d_attn);
  read_into(j, "d_mlp", c.d_mlp);
  read_into(j, "p_emb", c.p_emb);
  read_into(j, "p_attn", c.p_attn);
  read_into(j, "p_mlp", c.p_mlp);
  read_into(j, "n_classes", c.n_classes);
  read_into(j, "n_channels", c.n_channels);
  read_into(j, "window_len", c.window_len);
  read_into(j, "mean_pool", c.mean_pool);
  read_into(j, "learning_rate", c.learning_rate);
  read_into(j, "epochs", c.epochs);
  read_into(j, "batch_size", c.batch_size);
  read_into(j, "patience", c.patience);
  return c;
}

const std::set<std::string>& known_strategies() {
  static const std::set<std::string> s = {"mean",   "median", "mode",      "nearest", "linear",
                                          "spline", "spline:2", "spline:3", "quadratic", "none",
                                          "transformer"};
  return s;
}

bool is_frame_dataset(const std::string& kind) {
  return kind == "synthetic" || kind == "novartis";
}

MaskPlan make_plan(const TimeSeriesFrame& frame, const MaskingConfig& m, std::uint64_t seed) {
  if (m.mode == "ratio")
    return mask_by_ratio(frame, m.ratio, {m.gap_min, m.gap_max}, seed, m.bounds);
  if (m.mode == "length_class")
    return mask_by_length_class(frame, gap_class_from_letter(m.length_class), m.count, seed,
                                m.bounds);
  return mask_all_sensors(frame, m.start, m.length, m.bounds);
}

TimeSeriesFrame apply_strategy(const TimeSeriesFrame& masked, const MaskPlan& plan,
                               const std::string& strategy, const TransformerImputer* imputer) {
  if (strategy == "none") {
    TimeSeriesFrame filled = masked;
    for (const auto& [channel, t] : plan.cells()) filled.set(channel, t, 0.0);
    return filled;
  }
  if (strategy == "transformer") return imputer->impute(masked);
  return impute_frame(masked, ImputerDescriptor::parse(strategy));
}

void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void append_ledger(const fs::path& out_dir, const json& entry) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "ledger.jsonl", std::ios::app | std::ios::binary);
  if (!f) throw std::runtime_error("cannot append to run ledger in '" + out_dir.string() + "'");
  f << entry.dump() << "\n";
}

json ledger_entry(const char* command, const ExperimentConfig& cfg, double wall_seconds,
                  std::uint64_t seed, const std::vector<std::string>& outputs,
                  const std::string& note) {
  json e;
  e["command"] = command;
  e["config_hash"] = cfg.hash();
  e["seed"] = seed;
  e["version"] = kVersion;
  e["wall_seconds"] = wall_seconds;
  e["outputs"] = outputs;
  if (!note.empty()) e["note"] = note;
  return e;
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void persist_config(const ExperimentConfig& cfg) {
  if (!cfg.source_text.empty())
    write_text_file(cfg.out_dir / "config.json", cfg.source_text);
}

// ---- dataset materialization -------------------------------------------

std::vector<TimeSeriesFrame> load_raw_frames(const DatasetConfig& d) {
  if (d.kind == "synthetic") return generate_synthetic(d.synthetic).frames;
  return load_novartis(d.path).frames;
}

struct WindowSet {
  std::vector<LabeledWindow> train, test;
  std::string task;
  std::size_t n_classes = 0;
};

WindowSet load_window_set(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  WindowSet out;
  if (d.kind == "synthetic") {
    if (d.synthetic.n_classes < 2)
      throw ConfigError("config: downstream on synthetic data needs a label process "
                        "(dataset.synthetic.n_classes >= 2)");
    const SyntheticData data = generate_synthetic(d.synthetic);
    const std::size_t stride =
        cfg.downstream.stride == 0 ? cfg.classifier.window_len : cfg.downstream.stride;
    auto windows = synthetic_windows(data, cfg.classifier.window_len, stride);
    std::vector<std::string> subjects;
    for (const auto& w : windows) subjects.push_back(w.subject_id);
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
    if (subjects.size() < 2)
      throw ConfigError("config: downstream needs at least 2 synthetic subjects");
    const std::size_t n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(static_cast<double>(subjects.size()) * 0.7)), 1,
        subjects.size() - 1);
    auto [train, test] = split_subjects(subjects, n_train, d.split_seed);
    const std::set<std::string> train_set(train.begin(), train.end());
    for (auto& w : windows)
      (train_set.count(w.subject_id) ? out.train : out.test).push_back(std::move(w));
    out.task = "synthetic";
    out.n_classes = d.synthetic.n_classes;
    return out;
  }
  if (d.kind == "wesad" || d.kind == "ucihar") {
    LabeledDataset ds = d.kind == "wesad" ? load_wesad(d.path, d.split_seed, d.binary_task)
                                          : load_ucihar(d.path, d.split_seed);
    out.train = std::move(ds.train_windows);
    out.test = std::move(ds.test_windows);
    out.task = ds.manifest.name;
    out.n_classes = ds.manifest.labels.size();
    return out;
  }
  throw ConfigError("config: dataset kind '" + d.kind + "' has no labeled windows");
}

TimeSeriesFrame window_as_frame(const LabeledWindow& w) {
  std::vector<ChannelInfo> channels(w.n_channels);
  for (std::size_t c = 0; c < w.n_channels; ++c) channels[c].name = "c" + std::to_string(c);
  TimeSeriesFrame f = TimeSeriesFrame::make(std::move(channels), w.window_len, 1.0, w.subject_id);
  for (std::size_t c = 0; c < w.n_channels; ++c)
    for (std::size_t t = 0; t < w.window_len; ++t) f.set(c, t, w.at(c, t));
  return f;
}

// 90/10 deterministic split of training segments for imputer validation.
std::pair<std::vector<TimeSeriesFrame>, std::vector<TimeSeriesFrame>> segment_split(
    std::vector<TimeSeriesFrame> segments, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = segments.size(); i > 1; --i)
    std::swap(segments[i - 1], segments[rng.bounded(i)]);
  const std::size_t n_val = segments.size() >= 10 ? segments.size() / 10 : 0;
  std::vector<TimeSeriesFrame> val(segments.end() - static_cast<std::ptrdiff_t>(n_val),
                                   segments.end());
  segments.resize(segments.size() - n_val);
  return {std::move(segments), std::move(val)};
}

void write_loss_curve(const fs::path& path, const std::vector<double>& losses) {
  std::string text;
  for (std::size_t i = 0; i < losses.size(); ++i)
    text += std::to_string(i + 1) + "," + format_double(losses[i]) + "\n";
  write_text_file(path, text);
}

TransformerImputer obtain_imputer(const ExperimentConfig& cfg,
                                  const std::vector<TimeSeriesFrame>& train_segments,
                                  std::ostream& log, std::vector<std::string>& outputs) {
  if (!cfg.imputer_checkpoint.empty()) {
    log << "loading imputer checkpoint " << cfg.imputer_checkpoint.string() << "\n";
    return TransformerImputer::load(cfg.imputer_checkpoint);
  }
  Rng seeds(cfg.master_seed);
  const std::uint64_t init_seed = seeds.next();
  const std::uint64_t split_seed = seeds.next();
  const std::uint64_t train_seed = seeds.next();
  auto [train, val] = segment_split(train_segments, split_seed);
  log << "training imputer on " << train.size() << " segments (" << val.size()
      << " validation)\n";
  TransformerImputer imputer(cfg.imputer, init_seed);
  const TrainResult result = imputer.train(train, val, train_seed);
  const fs::path ckpt = cfg.out_dir / "imputer.ckpt";
  const fs::path curve = cfg.out_dir / "imputer_loss.csv";
  fs::create_directories(cfg.out_dir);
  imputer.save(ckpt);
  write_loss_curve(curve, result.train_loss);
  outputs.push_back(ckpt.string());
  outputs.push_back(curve.string());
  log << "imputer final train loss " << format_double(result.train_loss.back()) << "\n";
  return imputer;
}

std::string format_cell(const std::vector<double>& values) {
  if (values.empty()) return "n/a";
  if (values.size() == 1) return format_mean_std(Aggregate{values[0], 0.0, 1});
  return format_mean_std(aggregate(values));
}

json cell_json(const std::vector<double>& values) {
  json j;
  if (values.empty()) return j;
  const Aggregate a =
      values.size() == 1 ? Aggregate{values[0], 0.0, 1} : aggregate(values);
  j["mean"] = a.mean;
  j["stddev"] = a.stddev;
  j["n"] = a.n;
  return j;
}

constexpr std::array<const char*, 4> kMetricKeys = {"mae", "rmse", "pearson", "spearman"};
constexpr std::array<const char*, 4> kMetricNames = {"MAE", "RMSE", "Pearson", "Spearman"};

double metric_component(const MetricValues& mv, std::size_t metric) {
  switch (metric) {
    case 0: return mv.mae;
    case 1: return mv.rmse;
    case 2: return mv.pearson;
    default: return mv.spearman;
  }
}

// (pred, truth) pools keyed by group name, one pair per strategy.
using PairPool = std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>;

// group -> strategy -> metric -> per-run values
using ResultTable = std::map<std::string, std::map<std::string, std::array<std::vector<double>, 4>>>;

void write_metric_table_csv(const fs::path& path, const std::vector<std::string>& groups,
                            const char* group_header,
                            const std::vector<std::string>& strategies,
                            const ResultTable& table) {
  std::string text = std::string("metric,") + group_header;
  for (const auto& s : strategies) text += "," + s;
  text += "\n";
  for (std::size_t m = 0; m < kMetricKeys.size(); ++m) {
    for (const auto& g : groups) {
      text += std::string(kMetricNames[m]) + "," + g;
      for (const auto& s : strategies) {
        const auto git = table.find(g);
        const std::vector<double>* values = nullptr;
        if (git != table.end()) {
          const auto sit = git->second.find(s);
          if (sit != git->second.end()) values = &sit->second[m];
        }
        text += ",";
        text += values ? format_cell(*values) : "n/a";
      }
      text += "\n";
    }
  }
  write_text_file(path, text);
}

json metric_table_json(const std::vector<std::string>& groups,
                       const std::vector<std::string>& strategies, const ResultTable& table) {
  json out;
  for (std::size_t m = 0; m < kMetricKeys.size(); ++m) {
    json per_group;
    for (const auto& g : groups) {
      json per_strategy;
      for (const auto& s : strategies) {
        const auto git = table.find(g);
        if (git == table.end()) continue;
        const auto sit = git->second.find(s);
        if (sit == git->second.end()) continue;
        per_strategy[s] = cell_json(sit->second[m]);
      }
      per_group[g] = std::move(per_strategy);
    }
    out[kMetricKeys[m]] = std::move(per_group);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  static const std::set<std::string> kinds = {"synthetic", "novartis", "wesad", "ucihar"};
  if (!kinds.count(dataset.kind))
    throw ConfigError("config: unknown dataset kind '" + dataset.kind + "'");
  if (dataset.kind != "synthetic") {
    if (dataset.path.empty())
      throw ConfigError("config: dataset kind '" + dataset.kind + "' needs dataset.path");
    if (!fs::exists(dataset.path))
      throw ConfigError("config: dataset path '" + dataset.path.string() + "' does not exist");
  } else {
    try {
      dataset.synthetic.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (strategies.empty()) throw ConfigError("config: empty strategy list");
  for (const auto& s : strategies)
    if (!known_strategies().count(s))
      throw ConfigError("config: unknown strategy '" + s + "'");
  static const std::set<std::string> mask_modes = {"ratio", "length_class", "all_sensors"};
  if (!mask_modes.count(masking.mode))
    throw ConfigError("config: unknown masking mode '" + masking.mode + "'");
  if (masking.mode == "ratio" && !(masking.ratio > 0.0 && masking.ratio < 1.0))
    throw ConfigError("config: masking.ratio must lie in (0, 1)");
  if (masking.gap_min == 0 || masking.gap_min > masking.gap_max)
    throw ConfigError("config: masking gap range is empty");
  if (runs == 0) throw ConfigError("config: runs must be >= 1");
  if (train_model != "imputer" && train_model != "classifier")
    throw ConfigError("config: train.model must be 'imputer' or 'classifier'");
  try {
    imputer.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: imputer: ") + e.what());
  }
  if (!imputer_checkpoint.empty() && !fs::exists(imputer_checkpoint))
    throw ConfigError("config: imputer checkpoint '" + imputer_checkpoint.string() +
                      "' does not exist");
  if (!classifier_checkpoint.empty() && !fs::exists(classifier_checkpoint))
    throw ConfigError("config: classifier checkpoint '" + classifier_checkpoint.string() +
                      "' does not exist");
  for (const auto& s : downstream.strategies)
    if (s != "none" && s != "mean" && s != "linear" && s != "transformer")
      throw ConfigError("config: downstream strategy '" + s + "' is not one of "
                        "none/mean/linear/transformer");
  if (downstream.strategies.empty() || downstream.rates.empty())
    throw ConfigError("config: downstream grid is empty");
  for (double r : downstream.rates)
    if (!(r >= 0.0 && r < 1.0))
      throw ConfigError("config: downstream rates must lie in [0, 1)");
  if (downstream.gap_min == 0 || downstream.gap_min > downstream.gap_max)
    throw ConfigError("config: downstream gap range is empty");
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  json d;
  d["kind"] = dataset.kind;
  d["path"] = dataset.path.string();
  d["split_seed"] = dataset.split_seed;
  d["binary_task"] = dataset.binary_task;
  d["synthetic"] = synthetic_to_json(dataset.synthetic);
  j["dataset"] = std::move(d);
  j["strategies"] = strategies;
  json m;
  m["mode"] = masking.mode;
  m["ratio"] = masking.ratio;
  m["gap_min"] = masking.gap_min;
  m["gap_max"] = masking.gap_max;
  m["length_class"] = std::string(1, masking.length_class);
  m["count"] = masking.count;
  m["start"] = masking.start;
  m["length"] = masking.length;
  m["bounds"] = {{"s_max", masking.bounds.s_max},
                 {"m_max", masking.bounds.m_max},
                 {"l_max", masking.bounds.l_max}};
  j["masking"] = std::move(m);
  j["runs"] = runs;
  j["master_seed"] = master_seed;
  j["train_model"] = train_model;
  j["imputer"] = json::parse(imputer.canonical_json());
  j["imputer_checkpoint"] = imputer_checkpoint.string();
  j["train_imputer"] = train_imputer;
  j["classifier"] = json::parse(classifier.canonical_json());
  j["classifier_checkpoint"] = classifier_checkpoint.string();
  json ds;
  ds["strategies"] = downstream.strategies;
  ds["rates"] = downstream.rates;
  ds["gap_min"] = downstream.gap_min;
  ds["gap_max"] = downstream.gap_max;
  ds["stride"] = downstream.stride;
  j["downstream"] = std::move(ds);
  return j.dump();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a_hash(canonical_json()); }

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  expect_keys(j, "top level",
              {"dataset", "strategies", "masking", "runs", "master_seed", "train", "imputer",
               "classifier", "downstream", "out_dir"});
  ExperimentConfig cfg;
  cfg.source_text = text;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    expect_keys(d, "dataset", {"kind", "path", "split_seed", "binary_task", "synthetic"});
    read_into(d, "kind", cfg.dataset.kind);
    read_into(d, "path", cfg.dataset.path);
    read_into(d, "split_seed", cfg.dataset.split_seed);
    read_into(d, "binary_task", cfg.dataset.binary_task);
    if (d.contains("synthetic")) cfg.dataset.synthetic = synthetic_from_json(d.at("synthetic"));
  }
  read_into(j, "strategies", cfg.strategies);
  if (j.contains("masking")) {
    const json& m = j.at("masking");
    expect_keys(m, "masking",
                {"mode", "ratio", "gap_min", "gap_max", "length_class", "count", "start",
                 "length", "bounds"});
    read_into(m, "mode", cfg.masking.mode);
    read_into(m, "ratio", cfg.masking.ratio);
    read_into(m, "gap_min", cfg.masking.gap_min);
    read_into(m, "gap_max", cfg.masking.gap_max);
    if (m.contains("length_class")) {
      const std::string cls = m.at("length_class").get<std::string>();
      if (cls.size() != 1) throw ConfigError("config: masking.length_class must be S, M or L");
      cfg.masking.length_class = cls[0];
    }
    read_into(m, "count", cfg.masking.count);
    read_into(m, "start", cfg.masking.start);
    read_into(m, "length", cfg.masking.length);
    if (m.contains("bounds")) {
      const json& b = m.at("bounds");
      expect_keys(b, "masking.bounds", {"s_max", "m_max", "l_max"});
      read_into(b, "s_max", cfg.masking.bounds.s_max);
      read_into(b, "m_max", cfg.masking.bounds.m_max);
      read_into(b, "l_max", cfg.masking.bounds.l_max);
    }
  }
  read_into(j, "runs", cfg.runs);
  read_into(j, "master_seed", cfg.master_seed);
  if (j.contains("train")) {
    expect_keys(j.at("train"), "train", {"model"});
    read_into(j.at("train"), "model", cfg.train_model);
  }
  if (j.contains("imputer")) {
    cfg.imputer = imputer_config_from_json(j.at("imputer"));
    read_into(j.at("imputer"), "checkpoint", cfg.imputer_checkpoint);
    read_into(j.at("imputer"), "train", cfg.train_imputer);
  }
  if (j.contains("classifier")) {
    cfg.classifier = classifier_config_from_json(j.at("classifier"));
    read_into(j.at("classifier"), "checkpoint", cfg.classifier_checkpoint);
  }
  if (j.contains("downstream")) {
    const json& d = j.at("downstream");
    expect_keys(d, "downstream", {"strategies", "rates", "gap_min", "gap_max", "stride"});
    read_into(d, "strategies", cfg.downstream.strategies);
    read_into(d, "rates", cfg.downstream.rates);
    read_into(d, "gap_min", cfg.downstream.gap_min);
    read_into(d, "gap_max", cfg.downstream.gap_max);
    read_into(d, "stride", cfg.downstream.stride);
  }
  read_into(j, "out_dir", cfg.out_dir);
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::vector<std::uint64_t> derive_seeds(std::uint64_t master, std::size_t n) {
  Rng rng(master);
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng.next();
  return seeds;
}

namespace {

ExperimentConfig with_overrides(ExperimentConfig cfg, const CliOverrides& opt) {
  if (opt.seed) cfg.master_seed = *opt.seed;
  if (opt.runs) cfg.runs = *opt.runs;
  if (opt.out) cfg.out_dir = *opt.out;
  cfg.validate();
  return cfg;
}

}  // namespace

// ---- preprocess ----------------------------------------------------------

int cmd_preprocess(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log) {
  cfg = with_overrides(std::move(cfg), opt);
  if (opt.dry_run) {
    log << "preprocess dry run: dataset '" << cfg.dataset.kind << "' validated\n";
    return 0;
  }
  WallClock clock;
  std::vector<std::string> outputs;
  json manifest_json;

  if (is_frame_dataset(cfg.dataset.kind)) {
    std::vector<TimeSeriesFrame> frames;
    if (cfg.dataset.kind == "synthetic") {
      const SyntheticData data = generate_synthetic(cfg.dataset.synthetic);
      frames = data.frames;
      if (!data.labels.empty()) {
        auto windows = synthetic_windows(data, cfg.classifier.window_len == 0
                                                   ? cfg.imputer.window_len
                                                   : cfg.classifier.window_len,
                                         cfg.imputer.window_len);
        log << "generated " << windows.size() << " labeled windows\n";
      }
      manifest_json["name"] = "synthetic";
    } else {
      NovartisData data = load_novartis(cfg.dataset.path);
      frames = std::move(data.frames);
      json miss = json::array();
      for (const auto& m : data.missingness) {
        miss.push_back({{"channel", m.channel},
                        {"missing_cells", m.missing_cells},
                        {"total_cells", m.total_cells},
                        {"fraction", m.fraction()}});
        char line[128];
        std::snprintf(line, sizeof line, "channel %-6s %5.1f%% missing", m.channel.c_str(),
                      100.0 * m.fraction());
        log << line << "\n";
      }
      manifest_json["name"] = data.manifest.name;
      manifest_json["missingness"] = std::move(miss);
      manifest_json["subjects"] = data.manifest.subjects;
    }
    const fs::path frame_dir = cfg.out_dir / "frames";
    fs::create_directories(frame_dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.csv", i);
      const fs::path p = frame_dir / name;
      save_frame_csv(frames[i], p);
      outputs.push_back(p.string());
    }
    manifest_json["n_frames"] = frames.size();
    log << "wrote " << frames.size() << " frames to " << frame_dir.string() << "\n";
  } else {
    const WindowSet ws = load_window_set(cfg);
    auto write_windows = [&](const fs::path& p, const std::vector<LabeledWindow>& windows) {
      std::string text = "subject,label,offset";
      if (!windows.empty())
        for (std::size_t i = 0; i < windows[0].values.size(); ++i)
          text += ",v" + std::to_string(i);
      text += "\n";
      for (const auto& w : windows) {
        text += w.subject_id + "," + std::to_string(w.label) + "," +
                std::to_string(w.source_offset);
        for (double v : w.values) text += "," + format_double(v);
        text += "\n";
      }
      write_text_file(p, text);
      outputs.push_back(p.string());
    };
    write_windows(cfg.out_dir / "windows_train.csv", ws.train);
    write_windows(cfg.out_dir / "windows_test.csv", ws.test);
    manifest_json["name"] = ws.task;
    manifest_json["n_train_windows"] = ws.train.size();
    manifest_json["n_test_windows"] = ws.test.size();
    manifest_json["n_classes"] = ws.n_classes;
    log << "wrote " << ws.train.size() << " train / " << ws.test.size() << " test windows\n";
  }

  manifest_json["config_hash"] = cfg.hash();
  write_json_file(cfg.out_dir / "manifest.json", manifest_json);
  outputs.push_back((cfg.out_dir / "manifest.json").string());
  persist_config(cfg);
  append_ledger(cfg.out_dir, ledger_entry("preprocess", cfg, clock.seconds(), cfg.master_seed,
                                          outputs, ""));
  return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log) {
  cfg = with_overrides(std::move(cfg), opt);
  const bool imputer_target = cfg.train_model == "imputer";
  if (!imputer_target) {
    try {
      cfg.classifier.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: classifier: ") + e.what());
    }
  }
  if (opt.dry_run) {
    if (imputer_target) {
      const TransformerImputer model(cfg.imputer, 0);
      log << "imputer parameters: " << model.count_parameters() << " (analytic "
          << TransformerImputer::analytic_parameter_count(cfg.imputer) << ")\n";
    } else {
      const PatchClassifier model(cfg.classifier, 0);
      log << "classifier parameters: " << model.count_parameters() << " (analytic "
          << PatchClassifier::analytic_parameter_count(cfg.classifier) << ")\n";
    }
    return 0;
  }

  WallClock clock;
  std::vector<std::string> outputs;
  Rng seeds(cfg.master_seed);
  const std::uint64_t init_seed = seeds.next();
  const std::uint64_t split_seed = seeds.next();
  const std::uint64_t train_seed = seeds.next();
  fs::create_directories(cfg.out_dir);

  if (imputer_target) {
    std::vector<TimeSeriesFrame> segments;
    if (is_frame_dataset(cfg.dataset.kind)) {
      for (const TimeSeriesFrame& frame : load_raw_frames(cfg.dataset)) {
        const TimeSeriesFrame std_frame = standardize(frame, fit_channel_stats(frame));
        for (auto& seg :
             slice_windows(std_frame, cfg.imputer.window_len, cfg.imputer.window_len))
          segments.push_back(std::move(seg));
      }
    } else {
      const WindowSet ws = load_window_set(cfg);
      for (const auto& w : ws.train) segments.push_back(window_as_frame(w));
      if (!segments.empty() && segments[0].n_steps != cfg.imputer.window_len)
        throw ConfigError("config: imputer.window_len must match the dataset's window length");
    }
    if (segments.empty()) throw std::runtime_error("train: no segments to train on");
    auto [train, val] = segment_split(std::move(segments), split_seed);
    log << "training imputer on " << train.size() << " segments (" << val.size()
        << " validation)\n";
    TransformerImputer model(cfg.imputer, init_seed);
    const TrainResult result = model.train(train, val, train_seed);
    model.save(cfg.out_dir / "imputer.ckpt");
    write_loss_curve(cfg.out_dir / "imputer_loss.csv", result.train_loss);
    outputs.push_back((cfg.out_dir / "imputer.ckpt").string());
    outputs.push_back((cfg.out_dir / "imputer_loss.csv").string());
    log << "final train loss " << format_double(result.train_loss.back()) << "\n";
  } else {
    WindowSet ws = load_window_set(cfg);
    if (ws.train.empty()) throw std::runtime_error("train: no training windows");
    log << "training classifier on " << ws.train.size() << " windows\n";
    PatchClassifier model(cfg.classifier, init_seed);
    // No validation split here: training runs the full epoch budget so the
    // loss curve always has `epochs` rows.
    const auto epoch_log = model.train(ws.train, {}, train_seed);
    model.save(cfg.out_dir / "classifier.ckpt");
    write_loss_curve(cfg.out_dir / "classifier_loss.csv", epoch_log.train_loss);
    outputs.push_back((cfg.out_dir / "classifier.ckpt").string());
    outputs.push_back((cfg.out_dir / "classifier_loss.csv").string());
    if (!ws.test.empty())
      log << "held-out accuracy " << format_double(model.evaluate_accuracy(ws.test)) << "\n";
  }

  persist_config(cfg);
  append_ledger(cfg.out_dir,
                ledger_entry("train", cfg, clock.seconds(), cfg.master_seed, outputs, ""));
  return 0;
}

// ---- impute-bench ----------------------------------------------------------

int cmd_impute_bench(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log) {
  cfg = with_overrides(std::move(cfg), opt);
  if (!is_frame_dataset(cfg.dataset.kind))
    throw ConfigError("config: impute-bench needs a frame dataset (synthetic or novartis)");
  const bool wants_transformer =
      std::find(cfg.strategies.begin(), cfg.strategies.end(), "transformer") !=
      cfg.strategies.end();
  if (wants_transformer && cfg.imputer_checkpoint.empty() && !cfg.train_imputer)
    throw ConfigError("config: the transformer strategy needs imputer.checkpoint or "
                      "imputer.train=true");
  if (opt.dry_run) {
    log << "impute-bench dry run: " << cfg.strategies.size() << " strategies x " << cfg.runs
        << " runs validated\n";
    if (wants_transformer) {
      const TransformerImputer model(cfg.imputer, 0);
      log << "imputer parameters: " << model.count_parameters() << "\n";
    }
    return 0;
  }

  WallClock clock;
  std::vector<TimeSeriesFrame> frames;
  for (const TimeSeriesFrame& raw : load_raw_frames(cfg.dataset))
    frames.push_back(standardize(raw, fit_channel_stats(raw)));
  if (frames.empty()) throw std::runtime_error("impute-bench: no frames");
  if (wants_transformer && cfg.imputer.n_channels != frames[0].n_channels())
    throw ConfigError("config: imputer.n_channels must match the dataset (" +
                      std::to_string(frames[0].n_channels()) + " channels)");

  std::vector<std::string> outputs;
  std::optional<TransformerImputer> imputer;
  if (wants_transformer) {
    std::vector<TimeSeriesFrame> segments;
    for (const TimeSeriesFrame& frame : frames)
      for (auto& seg : slice_windows(frame, cfg.imputer.window_len, cfg.imputer.window_len))
        segments.push_back(std::move(seg));
    imputer.emplace(obtain_imputer(cfg, segments, log, outputs));
  }

  std::vector<std::string> sources;
  for (const auto& ch : frames[0].channels) sources.push_back(ch.name);
  const std::vector<std::string> length_groups = {"S", "M", "L"};

  ResultTable by_source, by_length;
  json failures = json::array();
  const std::vector<std::uint64_t> run_seeds = derive_seeds(cfg.master_seed, cfg.runs);

  for (std::size_t run = 0; run < cfg.runs; ++run) {
    Rng frame_rng(run_seeds[run]);
    std::map<std::string, PairPool> source_pool, length_pool;  // strategy -> pools
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
      const TimeSeriesFrame& frame = frames[fi];
      const std::uint64_t mask_seed = frame_rng.next();
      const MaskPlan plan = make_plan(frame, cfg.masking, mask_seed);
      const auto [masked, truth] = apply_mask(frame, plan);

      // Cell -> containing gap's length class, for the per-length grouping.
      std::map<std::pair<std::size_t, std::size_t>, char> cell_class;
      for (const auto& gap : plan.gaps)
        for (std::size_t t = gap.start; t < gap.start + gap.length; ++t)
          cell_class[{gap.channel, t}] = gap_class_letter(gap.cls);

      for (const auto& strategy : cfg.strategies) {
        try {
          const TimeSeriesFrame completed =
              apply_strategy(masked, plan, strategy, imputer ? &*imputer : nullptr);
          for (const auto& cell : truth.cells) {
            const double pred = completed.raw(cell.channel, cell.time);
            const std::string& source = frame.channels[cell.channel].name;
            auto& sp = source_pool[strategy][source];
            sp.first.push_back(pred);
            sp.second.push_back(cell.value);
            auto& lp = length_pool[strategy][std::string(
                1, cell_class.at({cell.channel, cell.time}))];
            lp.first.push_back(pred);
            lp.second.push_back(cell.value);
          }
        } catch (const std::exception& e) {
          failures.push_back({{"run", run},
                              {"frame", fi},
                              {"strategy", strategy},
                              {"error", e.what()}});
        }
      }
    }
    auto commit = [](const std::map<std::string, PairPool>& pools, ResultTable& table) {
      for (const auto& [strategy, groups] : pools)
        for (const auto& [group, pair] : groups) {
          if (pair.first.empty()) continue;
          const MetricValues mv = score(pair.first, pair.second);
          for (std::size_t m = 0; m < kMetricKeys.size(); ++m)
            table[group][strategy][m].push_back(metric_component(mv, m));
        }
    };
    commit(source_pool, by_source);
    commit(length_pool, by_length);
  }

  write_metric_table_csv(cfg.out_dir / "table_by_source.csv", sources, "source", cfg.strategies,
                         by_source);
  write_metric_table_csv(cfg.out_dir / "table_by_length.csv", length_groups, "length",
                         cfg.strategies, by_length);
  json report;
  report["schema"] = "impute-bench/v1";
  report["config_hash"] = cfg.hash();
  report["master_seed"] = cfg.master_seed;
  report["runs"] = cfg.runs;
  report["strategies"] = cfg.strategies;
  report["per_source"] = metric_table_json(sources, cfg.strategies, by_source);
  report["per_length"] = metric_table_json(length_groups, cfg.strategies, by_length);
  report["failures"] = failures;
  write_json_file(cfg.out_dir / "impute_bench.json", report);
  outputs.push_back((cfg.out_dir / "table_by_source.csv").string());
  outputs.push_back((cfg.out_dir / "table_by_length.csv").string());
  outputs.push_back((cfg.out_dir / "impute_bench.json").string());
  persist_config(cfg);
  for (std::size_t run = 0; run < cfg.runs; ++run)
    append_ledger(cfg.out_dir, ledger_entry("impute-bench", cfg, clock.seconds(), run_seeds[run],
                                            outputs, "run " + std::to_string(run)));
  log << "impute-bench: " << cfg.runs << " runs over " << frames.size() << " frames, "
      << failures.size() << " failures\n";
  return failures.empty() ? 0 : 3;
}

// ---- downstream -------------------------------------------------------------

int cmd_downstream(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log) {
  cfg = with_overrides(std::move(cfg), opt);
  try {
    cfg.classifier.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: classifier: ") + e.what());
  }
  const bool wants_transformer =
      std::find(cfg.downstream.strategies.begin(), cfg.downstream.strategies.end(),
                "transformer") != cfg.downstream.strategies.end();
  if (wants_transformer && cfg.imputer.window_len != cfg.classifier.window_len)
    throw ConfigError("config: imputer.window_len must equal classifier.window_len for "
                      "downstream evaluation");
  if (opt.dry_run) {
    const PatchClassifier model(cfg.classifier, 0);
    log << "downstream dry run: " << cfg.downstream.strategies.size() << " strategies x "
        << cfg.downstream.rates.size() << " rates x " << cfg.runs << " runs; classifier has "
        << model.count_parameters() << " parameters\n";
    return 0;
  }

  WallClock clock;
  WindowSet ws = load_window_set(cfg);
  if (ws.train.empty() || ws.test.empty())
    throw std::runtime_error("downstream: empty train or test window set");
  if (ws.n_classes != cfg.classifier.n_classes)
    throw ConfigError("config: classifier.n_classes is " +
                      std::to_string(cfg.classifier.n_classes) + " but the dataset has " +
                      std::to_string(ws.n_classes) + " classes");
  if (ws.train[0].n_channels != cfg.classifier.n_channels ||
      ws.train[0].window_len != cfg.classifier.window_len)
    throw ConfigError("config: classifier channel/window shape does not match the dataset");

  std::vector<std::string> outputs;
  Rng seeds(cfg.master_seed);
  const std::uint64_t clf_init_seed = seeds.next();
  const std::uint64_t clf_train_seed = seeds.next();
  const std::uint64_t grid_seed = seeds.next();

  std::optional<PatchClassifier> clf;
  if (!cfg.classifier_checkpoint.empty()) {
    log << "loading classifier checkpoint " << cfg.classifier_checkpoint.string() << "\n";
    clf.emplace(PatchClassifier::load(cfg.classifier_checkpoint));
  } else {
    // Early stopping validates on the last training subject; the test split
    // stays untouched until grid evaluation.
    std::vector<std::string> train_subjects;
    for (const auto& w : ws.train) train_subjects.push_back(w.subject_id);
    std::sort(train_subjects.begin(), train_subjects.end());
    train_subjects.erase(std::unique(train_subjects.begin(), train_subjects.end()),
                         train_subjects.end());
    std::vector<LabeledWindow> fit, val;
    if (train_subjects.size() >= 2) {
      const std::string& val_subject = train_subjects.back();
      for (const auto& w : ws.train)
        (w.subject_id == val_subject ? val : fit).push_back(w);
    } else {
      fit = ws.train;
    }
    log << "training classifier on " << fit.size() << " windows (" << val.size()
        << " validation)\n";
    clf.emplace(cfg.classifier, clf_init_seed);
    clf->train(fit, val, clf_train_seed);
    fs::create_directories(cfg.out_dir);
    clf->save(cfg.out_dir / "classifier.ckpt");
    outputs.push_back((cfg.out_dir / "classifier.ckpt").string());
  }

  std::optional<TransformerImputer> imputer;
  if (wants_transformer) {
    std::vector<TimeSeriesFrame> segments;
    for (const auto& w : ws.train) segments.push_back(window_as_frame(w));
    if (cfg.imputer.n_channels != ws.train[0].n_channels)
      throw ConfigError("config: imputer.n_channels must match the dataset");
    imputer.emplace(obtain_imputer(cfg, segments, log, outputs));
  }

  // Same mask seeds across strategies: rows are paired per (rate, run).
  std::vector<std::vector<std::uint64_t>> mask_seeds(cfg.downstream.rates.size());
  {
    Rng rng(grid_seed);
    for (auto& per_rate : mask_seeds) per_rate = derive_seeds(rng.next(), cfg.runs);
  }

  std::string csv = "task,strategy,rate,accuracy,seed\n";
  json grid;
  json failures = json::array();
  for (const auto& strategy : cfg.downstream.strategies) {
    json per_rate;
    for (std::size_t ri = 0; ri < cfg.downstream.rates.size(); ++ri) {
      const double rate = cfg.downstream.rates[ri];
      json accs = json::array(), used_seeds = json::array();
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        const std::uint64_t seed = mask_seeds[ri][run];
        try {
          const double acc = evaluate_with_imputation(
              *clf, ws.test, strategy, imputer ? &*imputer : nullptr, rate, seed,
              {cfg.downstream.gap_min, cfg.downstream.gap_max});
          csv += ws.task + "," + strategy + "," + format_double(rate) + "," +
                 format_double(acc) + "," + std::to_string(seed) + "\n";
          accs.push_back(acc);
          used_seeds.push_back(seed);
        } catch (const std::exception& e) {
          failures.push_back({{"strategy", strategy},
                              {"rate", rate},
                              {"run", run},
                              {"error", e.what()}});
        }
      }
      per_rate[format_double(rate)] = {{"accuracies", std::move(accs)},
                                       {"seeds", std::move(used_seeds)}};
    }
    grid[strategy] = std::move(per_rate);
  }

  write_text_file(cfg.out_dir / "downstream.csv", csv);
  json report;
  report["schema"] = "downstream/v1";
  report["config_hash"] = cfg.hash();
  report["master_seed"] = cfg.master_seed;
  report["runs"] = cfg.runs;
  report["task"] = ws.task;
  report["grid"] = std::move(grid);
  report["failures"] = failures;
  write_json_file(cfg.out_dir / "downstream.json", report);
  outputs.push_back((cfg.out_dir / "downstream.csv").string());
  outputs.push_back((cfg.out_dir / "downstream.json").string());
  persist_config(cfg);
  append_ledger(cfg.out_dir, ledger_entry("downstream", cfg, clock.seconds(), cfg.master_seed,
                                          outputs, std::to_string(failures.size()) +
                                                       " failures"));
  log << "downstream: " << cfg.downstream.strategies.size() * cfg.downstream.rates.size() *
                               cfg.runs
      << " grid cells, " << failures.size() << " failures\n";
  return failures.empty() ? 0 : 3;
}

// ---- report -----------------------------------------------------------------

namespace {

std::string render_metric_tables(const json& report, const char* title) {
  std::ostringstream out;
  out << title << " (config hash " << report.at("config_hash").get<std::uint64_t>() << ", "
      << report.at("runs").get<std::size_t>() << " runs)\n";
  const std::vector<std::string> strategies = report.at("strategies");
  for (const char* section : {"per_source", "per_length"}) {
    if (!report.contains(section)) continue;
    out << "\n[" << section << "]\n";
    const json& tables = report.at(section);
    for (const auto& [metric, groups] : tables.items()) {
      out << metric << ":\n";
      for (const auto& [group, cells] : groups.items()) {
        out << "  " << group << ":";
        for (const auto& s : strategies) {
          if (!cells.contains(s) || cells.at(s).empty()) continue;
          const Aggregate a{cells.at(s).at("mean").get<double>(),
                            cells.at(s).at("stddev").get<double>(),
                            cells.at(s).at("n").get<std::size_t>()};
          out << "  " << s << "=" << format_mean_std(a);
        }
        out << "\n";
      }
    }
  }
  return out.str();
}

std::string render_downstream(const json& report) {
  std::ostringstream out;
  out << "downstream accuracy for task '" << report.at("task").get<std::string>() << "' ("
      << report.at("runs").get<std::size_t>() << " runs)\n";
  for (const auto& [strategy, rates] : report.at("grid").items()) {
    out << "  " << strategy << ":";
    for (const auto& [rate, cell] : rates.items()) {
      const auto& accs = cell.at("accuracies");
      if (accs.empty()) continue;
      std::vector<double> values;
      for (const auto& a : accs) values.push_back(a.get<double>());
      const Aggregate agg = values.size() == 1 ? Aggregate{values[0], 0.0, 1}
                                               : aggregate(values);
      out << "  rate " << rate << ": " << format_mean_std(agg);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace

int cmd_report(const fs::path& out_dir, std::ostream& log) {
  std::string text;
  const fs::path bench_path = out_dir / "impute_bench.json";
  const fs::path down_path = out_dir / "downstream.json";
  if (fs::exists(bench_path)) {
    std::ifstream f(bench_path);
    text += render_metric_tables(json::parse(f), "imputation benchmark");
  }
  if (fs::exists(down_path)) {
    if (!text.empty()) text += "\n";
    std::ifstream f(down_path);
    text += render_downstream(json::parse(f));
  }
  if (text.empty())
    throw ConfigError("report: no impute_bench.json or downstream.json in '" +
                      out_dir.string() + "'");
  write_text_file(out_dir / "report.txt", text);
  log << text;
  return 0;
}

}  // namespace gapfill

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gapfill/classifier.hpp"
#include "gapfill/datasets.hpp"
#include "gapfill/imputer.hpp"
#include "gapfill/masking.hpp"

namespace gapfill {

/// Configuration problem (bad file, unknown key, unresolvable reference).
/// The CLI maps this to exit code 2; anything thrown after validation maps
/// to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | novartis | wesad | ucihar
  std::filesystem::path path;      // root directory for file-backed kinds
  std::uint64_t split_seed = 0;
  bool binary_task = false;  // wesad only
  SyntheticSpec synthetic;
};

struct MaskingConfig {
  std::string mode = "ratio";  // ratio | length_class | all_sensors
  double ratio = 0.2;
  std::size_t gap_min = 1;
  std::size_t gap_max = 120;
  char length_class = 'M';  // length_class mode
  std::size_t count = 1;
  std::size_t start = 0;  // all_sensors mode
  std::size_t length = 0;
  GapClassBounds bounds{};
};

struct DownstreamConfig {
  std::vector<std::string> strategies = {"none", "mean", "linear", "transformer"};
  std::vector<double> rates = {0.0, 0.1, 0.2, 0.3, 0.4};
  std::size_t gap_min = 1;
  std::size_t gap_max = 32;
  std::size_t stride = 0;  // synthetic window stride; 0 means window_len
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::vector<std::string> strategies = {"linear", "mean",   "median",     "mode",
                                         "nearest", "spline", "transformer"};
  MaskingConfig masking;
  std::size_t runs = 100;
  std::uint64_t master_seed = 0;
  std::string train_model = "imputer";  // cmd_train target: imputer | classifier

  ImputerConfig imputer;
  std::filesystem::path imputer_checkpoint;  // empty -> train on the fly
  bool train_imputer = true;
  ClassifierConfig classifier;
  std::filesystem::path classifier_checkpoint;

  DownstreamConfig downstream;
  std::filesystem::path out_dir = "runs/out";
  std::string source_text;  // the config file verbatim, copied into out_dir

  void validate() const;
  std::string canonical_json() const;  // semantic fields only (no out_dir)
  std::uint64_t hash() const;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// n seeds drawn from a master-seeded stream; runs are numbered by index.
std::vector<std::uint64_t> derive_seeds(std::uint64_t master, std::size_t n);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::filesystem::path> out;
  bool dry_run = false;
};

// Exit codes: 0 success, 3 partial experiment failure; ConfigError escapes
// for the caller to map to 2.
int cmd_preprocess(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log);
int cmd_train(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log);
int cmd_impute_bench(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log);
int cmd_downstream(ExperimentConfig cfg, const CliOverrides& opt, std::ostream& log);
/// Renders the JSON reports found in `out_dir` as text tables.
int cmd_report(const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace gapfill

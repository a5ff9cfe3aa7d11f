#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gapfill/frame.hpp"

namespace gapfill {

struct ChannelSchema {
  std::string name;
  double sample_rate_hz = 0.0;
  std::string unit;
};

struct DatasetManifest {
  std::string name;
  std::vector<ChannelSchema> channels;
  std::vector<std::string> subjects;        // sorted, unique
  std::vector<std::string> train_subjects;  // sorted
  std::vector<std::string> test_subjects;   // sorted
  std::vector<std::string> labels;          // class id -> name; empty if unlabeled
  std::vector<std::filesystem::path> files;
  std::string split_kind;  // "canonical", "random(seed=N)", or "" when unsplit
  void validate() const;
};

/// Deterministic subject partition: Fisher-Yates shuffle of the sorted subject
/// list with `seed`, first `n_train` go to training. Both sides come back
/// sorted. Requires 1 <= n_train < subjects.size().
std::pair<std::vector<std::string>, std::vector<std::string>> split_subjects(
    std::vector<std::string> subjects, std::size_t n_train, std::uint64_t seed);

struct ChannelMissingness {
  std::string channel;
  std::size_t missing_cells = 0;
  std::size_t total_cells = 0;
  double fraction() const {
    return total_cells == 0 ? 0.0
                            : static_cast<double>(missing_cells) / static_cast<double>(total_cells);
  }
};

/// The ten evaluated wearable channels, one sample per minute.
const std::array<std::string, 10>& novartis_channel_names();

struct NovartisData {
  DatasetManifest manifest;
  std::vector<TimeSeriesFrame> frames;          // one per subject-day, native gaps kept
  std::vector<ChannelMissingness> missingness;  // aggregated over all frames
};

/// Directory of frame-exchange CSVs (one per subject-day, `.meta.json`
/// sidecars). Every frame must carry exactly the ten canonical channels at
/// 1 sample/min or the loader reports the offending column.
NovartisData load_novartis(const std::filesystem::path& dir);

struct LabeledDataset {
  DatasetManifest manifest;
  std::vector<LabeledWindow> train_windows;
  std::vector<LabeledWindow> test_windows;
};

/// Wrist-device layout: one directory per subject containing acc.csv
/// (x,y,z @ 32 Hz), bvp.csv (value @ 64 Hz), eda.csv (value @ 4 Hz),
/// temp.csv (value @ 4 Hz), labels.csv (label per 4 Hz step; 0 baseline,
/// 1 stress, 2 amusement, -1 ignored). EDA is low-passed (Butterworth 2,
/// 0.5 Hz), everything is resampled to 4 Hz, and label-homogeneous
/// 240-reading windows are cut with stride 239. `binary_task` relabels to
/// {non_stress, stress}.
LabeledDataset load_wesad(const std::filesystem::path& dir, std::uint64_t split_seed = 0,
                          bool binary_task = false);

/// Inertial layout: one directory per subject containing acc.csv (x,y,z),
/// gyro.csv (x,y,z) and labels.csv (label per reading), all at 50 Hz.
/// Signals get a width-3 median filter plus Butterworth(3, 20 Hz); the
/// accelerometer additionally has gravity (0.3 Hz low-pass) removed.
/// Windows are 128 readings at 50% overlap. A `split.csv` file
/// (subject,partition rows) pins the canonical split; otherwise subjects
/// are partitioned 70/30 with `split_seed`.
LabeledDataset load_ucihar(const std::filesystem::path& dir, std::uint64_t split_seed = 0);

enum class SyntheticKind { dynamic, smooth, discrete };

std::string synthetic_kind_name(SyntheticKind kind);
SyntheticKind synthetic_kind_from_name(const std::string& name);

struct SyntheticChannel {
  std::string name;
  SyntheticKind kind = SyntheticKind::dynamic;
  double noise_sigma = -1.0;  // < 0 picks the kind's default
};

struct SyntheticSpec {
  std::vector<SyntheticChannel> channels;
  std::size_t n_subjects = 1;
  std::size_t days_per_subject = 1;
  std::size_t steps_per_day = 1440;
  double sample_rate_hz = 1.0 / 60.0;
  std::uint64_t seed = 0;
  // Optional label process for classification tasks: the timeline is split
  // into runs of `label_run_len` steps, each run drawing one of `n_classes`
  // labels that modulates the dynamic/discrete channels.
  std::size_t n_classes = 0;
  std::size_t label_run_len = 0;
  void validate() const;
};

struct SyntheticData {
  std::vector<TimeSeriesFrame> frames;     // one per subject-day, fully observed
  std::vector<std::vector<int>> labels;    // per frame; empty without a label process
};

/// Deterministic per seed. Dynamic channels mix a shared bank of sinusoids
/// (lag-1 autocorrelation lands in (0.3, 0.95)); smooth channels are a slow
/// drift plus trend (lag-30 autocorrelation > 0.95); discrete channels are
/// zero-inflated integer bursts.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Label-homogeneous windows over every generated frame. Requires the spec
/// to have used a label process.
std::vector<LabeledWindow> synthetic_windows(const SyntheticData& data, std::size_t window_len,
                                             std::size_t stride);

}  // namespace gapfill

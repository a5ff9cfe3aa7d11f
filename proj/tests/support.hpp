#pragma once

// Shared helpers for the test binaries: frame builders, scratch directories,
// dataset-shaped fixture writers, and a finite-difference gradient checker.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gapfill/frame.hpp"
#include "gapfill/tensor.hpp"

namespace testsupport {

/// Fresh empty directory under the system temp root; wiped on every call.
std::filesystem::path scratch_dir(const std::string& name);

gapfill::TimeSeriesFrame make_frame(
    std::size_t n_channels, std::size_t n_steps,
    const std::function<double(std::size_t, std::size_t)>& value, double rate_hz = 1.0,
    std::string subject = "S01");

/// Marks [start, start+len) of one channel unobserved.
void punch_gap(gapfill::TimeSeriesFrame& frame, std::size_t channel, std::size_t start,
               std::size_t len);

double lag_autocorr(std::span<const double> x, std::size_t lag);

/// Central-difference check of d(loss)/d(param): runs loss_fn once for the
/// analytic gradient, then twice per element for the numeric one. Returns the
/// worst relative error. loss_fn must rebuild the graph on every call.
double max_grad_rel_error(gapfill::Tensor& param,
                          const std::function<gapfill::Tensor()>& loss_fn, double h = 1e-5);

// Tiny deterministic dataset fixtures in the loaders' on-disk layouts.

/// Two 10-channel subject-day frames at one sample per minute; the second
/// frame has a 60-step device-off gap (all channels) starting at t=60.
void write_novartis_fixture(const std::filesystem::path& dir);

/// Four subjects with native-rate channel files (acc 32 Hz, bvp 64 Hz,
/// eda/temp/labels 4 Hz). Each subject's label stream is 300 x baseline then
/// 300 x stress (amusement for the last subject), so slicing at W=240 /
/// stride 239 yields exactly one window of each label per subject.
void write_wesad_fixture(const std::filesystem::path& dir);

/// Three subjects, 256 readings each at 50 Hz, constant label per subject
/// (0, 1, 2). with_split_file adds a canonical split.csv: S01,S02 train,
/// S03 test.
void write_ucihar_fixture(const std::filesystem::path& dir, bool with_split_file);

}  // namespace testsupport

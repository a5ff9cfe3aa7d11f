#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "gapfill/baselines.hpp"
#include "gapfill/datasets.hpp"
#include "gapfill/masking.hpp"
#include "gapfill/metrics.hpp"
#include "gapfill/pipeline.hpp"
#include "support.hpp"

using namespace gapfill;
using testsupport::lag_autocorr;
using testsupport::scratch_dir;

TEST_CASE("split_subjects") {
  const std::vector<std::string> subjects{"S05", "S01", "S03", "S02", "S04"};
  const auto [train, test] = split_subjects(subjects, 3, 9);
  CHECK(train.size() == 3);
  CHECK(test.size() == 2);
  CHECK(std::is_sorted(train.begin(), train.end()));
  CHECK(std::is_sorted(test.begin(), test.end()));
  std::set<std::string> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  CHECK(all.size() == 5);

  // pure function of (subjects, n_train, seed), input order irrelevant
  auto sorted = subjects;
  std::sort(sorted.begin(), sorted.end());
  CHECK(split_subjects(sorted, 3, 9) == split_subjects(subjects, 3, 9));
  CHECK(split_subjects(subjects, 3, 10) != split_subjects(subjects, 3, 9));

  CHECK_THROWS(split_subjects({"S01"}, 1, 0));
  CHECK_THROWS(split_subjects(subjects, 0, 0));
  CHECK_THROWS(split_subjects(subjects, 5, 0));
}

TEST_CASE("manifest validation") {
  DatasetManifest m;
  m.name = "demo";
  m.subjects = {"S01", "S02"};
  m.train_subjects = {"S01"};
  m.test_subjects = {"S02"};
  m.labels = {"a", "b"};
  CHECK_NOTHROW(m.validate());

  auto overlap = m;
  overlap.test_subjects = {"S01"};
  CHECK_THROWS(overlap.validate());

  auto unknown = m;
  unknown.train_subjects = {"S09"};
  CHECK_THROWS(unknown.validate());

  auto dup_labels = m;
  dup_labels.labels = {"a", "a"};
  CHECK_THROWS(dup_labels.validate());
}

TEST_CASE("frame exchange round trip") {
  auto frame = testsupport::make_frame(
      3, 40, [](std::size_t c, std::size_t t) { return 0.1 * c + std::exp(std::sin(0.7 * t)); },
      1.0 / 60.0, "S42");
  frame.start_time = 86400.0;
  frame.channels[0].unit = "bpm";
  testsupport::punch_gap(frame, 1, 5, 7);

  const auto dir = scratch_dir("frame-exchange");
  save_frame_csv(frame, dir / "day.csv");
  const auto back = load_frame_csv(dir / "day.csv");

  CHECK(back.subject_id == frame.subject_id);
  CHECK(back.sample_rate_hz == frame.sample_rate_hz);
  CHECK(back.start_time == frame.start_time);
  CHECK(back.observed == frame.observed);
  REQUIRE(back.values.size() == frame.values.size());
  for (std::size_t i = 0; i < frame.values.size(); ++i)
    if (frame.observed[i]) CHECK(back.values[i] == frame.values[i]);
  CHECK(back.channels[0].unit == "bpm");
}

TEST_CASE("novartis loader") {
  const auto dir = scratch_dir("novartis");
  testsupport::write_novartis_fixture(dir);
  const auto data = load_novartis(dir);

  REQUIRE(data.frames.size() == 2);
  CHECK(data.manifest.name == "novartis2020");
  CHECK(data.manifest.subjects == std::vector<std::string>{"S01", "S02"});
  REQUIRE(data.manifest.channels.size() == 10);
  CHECK(data.manifest.channels[0].name == "acc");
  CHECK(data.manifest.channels[5].name == "hr");
  for (const auto& ch : data.manifest.channels)
    CHECK(ch.sample_rate_hz == doctest::Approx(1.0 / 60.0));

  // day one is fully observed, day two has the device-off hour
  const auto& clean = data.frames[0];
  const auto& holey = data.frames[1];
  CHECK(clean.observed_count() == clean.values.size());
  for (std::size_t c = 0; c < 10; ++c) {
    for (std::size_t t = 60; t < 120; ++t) CHECK(!holey.is_observed(c, t));
    CHECK(holey.observed_count(c) == holey.n_steps - 60);
  }

  // aggregated missingness: 60 of 360 cells per channel
  for (const auto& miss : data.missingness) {
    CHECK(miss.total_cells == 360);
    CHECK(miss.missing_cells == 60);
    CHECK(miss.fraction() == doctest::Approx(1.0 / 6.0));
  }

  SUBCASE("wrong channel name is reported") {
    auto bad = load_frame_csv(dir / "frame_0000.csv");
    bad.channels[3].name = "pressure";
    save_frame_csv(bad, dir / "frame_0000.csv");
    try {
      load_novartis(dir);
      FAIL("expected a schema error");
    } catch (const std::exception& e) {
      const std::string what = e.what();
      CHECK(what.find("pressure") != std::string::npos);
      CHECK(what.find("bpw") != std::string::npos);
    }
  }

  SUBCASE("wrong sample rate is rejected") {
    auto bad = load_frame_csv(dir / "frame_0001.csv");
    bad.sample_rate_hz = 1.0;
    save_frame_csv(bad, dir / "frame_0001.csv");
    CHECK_THROWS(load_novartis(dir));
  }

  SUBCASE("empty directory is rejected") {
    CHECK_THROWS(load_novartis(scratch_dir("novartis-empty")));
  }
}

TEST_CASE("wesad loader") {
  const auto dir = scratch_dir("wesad");
  testsupport::write_wesad_fixture(dir);
  const auto data = load_wesad(dir, 3);

  // 4 subjects, 2 windows each (one per label run), split 3/1
  CHECK(data.manifest.subjects.size() == 4);
  CHECK(data.manifest.train_subjects.size() == 3);
  CHECK(data.manifest.test_subjects.size() == 1);
  CHECK(data.train_windows.size() == 6);
  CHECK(data.test_windows.size() == 2);
  CHECK(data.manifest.labels ==
        std::vector<std::string>{"baseline", "stress", "amusement"});
  CHECK(data.manifest.split_kind == "random(seed=3)");

  auto all = data.train_windows;
  all.insert(all.end(), data.test_windows.begin(), data.test_windows.end());
  std::size_t baseline_windows = 0;
  for (const auto& w : all) {
    CHECK(w.n_channels == 6);
    CHECK(w.window_len == 240);
    CHECK((w.source_offset == 0 || w.source_offset == 300));
    // the hand trace: offset 0 is the baseline window, offset 300 the other run
    if (w.source_offset == 0) {
      CHECK(w.label == 0);
      ++baseline_windows;
    } else {
      CHECK(w.label >= 1);
    }
    for (double v : w.values) CHECK(std::isfinite(v));
  }
  CHECK(baseline_windows == 4);

  SUBCASE("binary task folds amusement into non-stress") {
    const auto binary = load_wesad(dir, 3, true);
    CHECK(binary.manifest.labels == std::vector<std::string>{"non_stress", "stress"});
    std::size_t stress = 0, non_stress = 0;
    auto both = binary.train_windows;
    both.insert(both.end(), binary.test_windows.begin(), binary.test_windows.end());
    for (const auto& w : both) {
      REQUIRE(w.label >= 0);
      REQUIRE(w.label <= 1);
      (w.label == 1 ? stress : non_stress)++;
    }
    CHECK(stress == 3);       // three subjects had a stress run
    CHECK(non_stress == 5);   // four baselines + one amusement
  }

  SUBCASE("missing channel file is an error") {
    std::filesystem::remove(dir / "S2" / "eda.csv");
    CHECK_THROWS(load_wesad(dir, 3));
  }
}

TEST_CASE("ucihar loader") {
  const auto dir = scratch_dir("ucihar");
  testsupport::write_ucihar_fixture(dir, true);
  const auto data = load_ucihar(dir);

  CHECK(data.manifest.split_kind == "canonical");
  CHECK(data.manifest.train_subjects == std::vector<std::string>{"S01", "S02"});
  CHECK(data.manifest.test_subjects == std::vector<std::string>{"S03"});
  CHECK(data.manifest.labels.size() == 6);
  CHECK(data.manifest.labels[0] == "walking");

  // 256 readings -> windows at offsets 0, 64, 128
  CHECK(data.train_windows.size() == 6);
  CHECK(data.test_windows.size() == 3);
  std::set<std::size_t> offsets;
  for (const auto& w : data.test_windows) {
    CHECK(w.n_channels == 6);
    CHECK(w.window_len == 128);
    CHECK(w.label == 2);  // subject S03 walks downstairs throughout
    offsets.insert(w.source_offset);
  }
  CHECK(offsets == std::set<std::size_t>{0, 64, 128});

  // gravity is gone from the accelerometer channels
  for (const auto& w : data.train_windows)
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < 128; ++t) mean += w.at(c, t);
      CHECK(std::abs(mean / 128.0) < 0.05);
    }

  SUBCASE("random split when no split file exists") {
    const auto dir2 = scratch_dir("ucihar-random");
    testsupport::write_ucihar_fixture(dir2, false);
    const auto rnd = load_ucihar(dir2, 11);
    CHECK(rnd.manifest.split_kind == "random(seed=11)");
    CHECK(rnd.manifest.train_subjects.size() == 2);
    CHECK(rnd.manifest.test_subjects.size() == 1);
    // same seed, same split
    const auto rnd2 = load_ucihar(dir2, 11);
    CHECK(rnd2.manifest.train_subjects == rnd.manifest.train_subjects);
  }

  SUBCASE("row count mismatch is rejected") {
    std::ofstream patch(dir / "S01" / "labels.csv");
    patch << "label\n0\n0\n";
    CHECK_THROWS(load_ucihar(dir));
  }

  SUBCASE("malformed split file is rejected") {
    std::ofstream patch(dir / "split.csv");
    patch << "subject,partition\nS01,train\nS02,train\nS03,nowhere\n";
    CHECK_THROWS(load_ucihar(dir));
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.channels = {{"pulse", SyntheticKind::dynamic, -1.0},
                   {"drift", SyntheticKind::smooth, -1.0},
                   {"bursts", SyntheticKind::discrete, -1.0}};
  spec.n_subjects = 2;
  spec.days_per_subject = 1;
  spec.steps_per_day = 1440;
  spec.seed = 4242;

  const auto data = generate_synthetic(spec);
  REQUIRE(data.frames.size() == 2);
  CHECK(data.labels.empty());

  for (const auto& frame : data.frames) {
    CHECK(frame.n_steps == 1440);
    CHECK(frame.observed_count() == frame.values.size());

    const auto dynamic = frame.channel_values(0);
    const double lag1 = lag_autocorr(dynamic, 1);
    CHECK(lag1 > 0.3);
    CHECK(lag1 < 0.95);

    // the trend makes the truncated autocorr estimator lossy at long lags,
    // so probe smoothness at a short one
    const auto smooth = frame.channel_values(1);
    CHECK(lag_autocorr(smooth, 5) > 0.95);

    for (double v : frame.channel_values(2)) {
      CHECK(v == std::round(v));
      CHECK(v >= 0.0);
    }
  }

  SUBCASE("bit-identical for a fixed seed") {
    const auto again = generate_synthetic(spec);
    for (std::size_t i = 0; i < data.frames.size(); ++i)
      CHECK(again.frames[i].values == data.frames[i].values);
    auto other = spec;
    other.seed = 4243;
    CHECK(generate_synthetic(other).frames[0].values != data.frames[0].values);
  }

  SUBCASE("linear interpolation nails short gaps on smooth channels") {
    const auto& frame = data.frames[0];
    const auto stats = fit_channel_stats(frame);
    const auto z = standardize(frame, stats);
    const auto plan = mask_by_length_class(z, GapClass::S, 20, 17);
    const auto [masked, truth] = apply_mask(z, plan);
    const auto filled = impute_frame(masked, ImputerDescriptor::parse("linear"));
    std::vector<double> pred, want;
    for (const auto& cell : truth.cells)
      if (cell.channel == 1) {  // the smooth channel
        pred.push_back(filled.raw(cell.channel, cell.time));
        want.push_back(cell.value);
      }
    REQUIRE(pred.size() > 10);
    CHECK(mae(pred, want) < 0.05);
  }

  SUBCASE("label process produces homogeneous windows") {
    auto labeled = spec;
    labeled.n_classes = 3;
    labeled.label_run_len = 240;
    const auto with_labels = generate_synthetic(labeled);
    REQUIRE(with_labels.labels.size() == with_labels.frames.size());
    std::set<int> seen;
    for (const auto& ls : with_labels.labels)
      for (int l : ls) {
        CHECK(l >= 0);
        CHECK(l < 3);
        seen.insert(l);
      }
    CHECK(seen.size() > 1);

    const auto windows = synthetic_windows(with_labels, 120, 120);
    CHECK(!windows.empty());
    for (const auto& w : windows) {
      CHECK(w.window_len == 120);
      CHECK(w.n_channels == 3);
      CHECK(w.label >= 0);
      CHECK(w.label < 3);
    }
    // unlabeled data cannot be windowed into a classification set
    CHECK_THROWS(synthetic_windows(data, 120, 120));
  }

  SUBCASE("spec validation") {
    auto bad = spec;
    bad.channels.clear();
    CHECK_THROWS(bad.validate());
    auto bad2 = spec;
    bad2.n_classes = 2;  // label process needs a run length too
    CHECK_THROWS(bad2.validate());
    auto bad3 = spec;
    bad3.steps_per_day = 0;
    CHECK_THROWS(bad3.validate());
  }
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gapfill/frame.hpp"

namespace gapfill {

enum class GapClass { S, M, L };

/// Inclusive upper bounds of the short and medium classes and the longest
/// gap the generators will place. Classes partition lengths as
/// S = [1, s_max], M = (s_max, m_max], L = (m_max, ...).
struct GapClassBounds {
  std::size_t s_max = 5;
  std::size_t m_max = 30;
  std::size_t l_max = 120;
};

GapClass classify_gap(std::size_t length, const GapClassBounds& bounds = {});
char gap_class_letter(GapClass cls);
GapClass gap_class_from_letter(char letter);
/// Generation range [lo, hi] for a class.
std::pair<std::size_t, std::size_t> gap_class_range(GapClass cls, const GapClassBounds& bounds = {});

struct GapDescriptor {
  std::size_t channel = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  GapClass cls = GapClass::S;

  bool operator==(const GapDescriptor&) const = default;
};

/// Declares which observed cells an experiment hides. Descriptors are sorted
/// by (channel, start), never overlap, and exactly tile the hidden cells.
struct MaskPlan {
  std::uint64_t seed = 0;
  double ratio = 0.0;
  std::vector<GapDescriptor> gaps;

  std::size_t cell_count() const;
  /// (channel, time) pairs covered by the descriptors, in sorted order.
  std::vector<std::pair<std::size_t, std::size_t>> cells() const;

  bool operator==(const MaskPlan&) const = default;
};

/// Hidden values keyed by cell, enough to score or restore exactly.
struct GroundTruth {
  struct Cell {
    std::size_t channel = 0;
    std::size_t time = 0;
    double value = 0.0;
  };
  std::vector<Cell> cells;  // sorted by (channel, time)
};

/// Places non-overlapping gaps with lengths uniform in `gap_length_range`
/// until each channel loses round(ratio x observed) cells; the last gap per
/// channel is shortened to land on the target exactly. Start positions are
/// rejection-sampled; 1000 consecutive collisions raise an infeasibility
/// error.
MaskPlan mask_by_ratio(const TimeSeriesFrame& frame, double ratio,
                       std::pair<std::size_t, std::size_t> gap_length_range, std::uint64_t seed,
                       const GapClassBounds& bounds = {});

/// `count` gaps per channel with lengths uniform in the class range.
MaskPlan mask_by_length_class(const TimeSeriesFrame& frame, GapClass cls, std::size_t count,
                              std::uint64_t seed, const GapClassBounds& bounds = {});

/// Masks [start, start+length) on every channel, the device-off pattern.
/// Cells that were already missing are skipped, so a channel's descriptors
/// are its maximal observed runs inside the interval.
MaskPlan mask_all_sensors(const TimeSeriesFrame& frame, std::size_t start, std::size_t length,
                          const GapClassBounds& bounds = {});

/// Hides the plan's cells in a copy of the frame and records their values.
std::pair<TimeSeriesFrame, GroundTruth> apply_mask(const TimeSeriesFrame& frame,
                                                   const MaskPlan& plan);

/// Writes the recorded values back; inverse of apply_mask.
void restore(TimeSeriesFrame& frame, const GroundTruth& truth);

// Replay format: `seed=` / `ratio=` header, then `channel,start,length,class`
// rows. Serialization is byte-stable for a given plan.
std::string serialize_mask_plan(const MaskPlan& plan);
MaskPlan parse_mask_plan(const std::string& text);
void save_mask_plan(const MaskPlan& plan, const std::filesystem::path& path);
MaskPlan load_mask_plan(const std::filesystem::path& path);

}  // namespace gapfill

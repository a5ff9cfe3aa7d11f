#include "gapfill/masking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gapfill/rng.hpp"

namespace gapfill {

namespace {

constexpr int kMaxRejections = 1000;

void sort_gaps(std::vector<GapDescriptor>& gaps) {
  std::sort(gaps.begin(), gaps.end(), [](const GapDescriptor& a, const GapDescriptor& b) {
    if (a.channel != b.channel) return a.channel < b.channel;
    return a.start < b.start;
  });
}

// Occupancy grid for one channel: true where a cell is unavailable (already
// missing or claimed by an earlier gap).
std::vector<std::uint8_t> blocked_cells(const TimeSeriesFrame& frame, std::size_t c) {
  const auto obs = frame.channel_observed(c);
  std::vector<std::uint8_t> blocked(obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t) blocked[t] = obs[t] ? 0 : 1;
  return blocked;
}

bool claim(std::vector<std::uint8_t>& blocked, std::size_t start, std::size_t len) {
  for (std::size_t t = start; t < start + len; ++t)
    if (blocked[t]) return false;
  std::fill(blocked.begin() + static_cast<std::ptrdiff_t>(start),
            blocked.begin() + static_cast<std::ptrdiff_t>(start + len), std::uint8_t{1});
  return true;
}

}  // namespace

GapClass classify_gap(std::size_t length, const GapClassBounds& bounds) {
  if (length == 0) throw std::invalid_argument("classify_gap: length must be positive");
  if (length <= bounds.s_max) return GapClass::S;
  if (length <= bounds.m_max) return GapClass::M;
  return GapClass::L;
}

char gap_class_letter(GapClass cls) {
  switch (cls) {
    case GapClass::S: return 'S';
    case GapClass::M: return 'M';
    case GapClass::L: return 'L';
  }
  throw std::logic_error("gap_class_letter: unknown class");
}

GapClass gap_class_from_letter(char letter) {
  switch (letter) {
    case 'S': return GapClass::S;
    case 'M': return GapClass::M;
    case 'L': return GapClass::L;
    default:
      throw std::invalid_argument(std::string("unknown gap class letter '") + letter + "'");
  }
}

std::pair<std::size_t, std::size_t> gap_class_range(GapClass cls, const GapClassBounds& bounds) {
  if (!(bounds.s_max >= 1 && bounds.s_max < bounds.m_max && bounds.m_max < bounds.l_max))
    throw std::invalid_argument("gap class bounds must satisfy 1 <= s_max < m_max < l_max");
  switch (cls) {
    case GapClass::S: return {1, bounds.s_max};
    case GapClass::M: return {bounds.s_max + 1, bounds.m_max};
    case GapClass::L: return {bounds.m_max + 1, bounds.l_max};
  }
  throw std::logic_error("gap_class_range: unknown class");
}

std::size_t MaskPlan::cell_count() const {
  std::size_t n = 0;
  for (const GapDescriptor& g : gaps) n += g.length;
  return n;
}

std::vector<std::pair<std::size_t, std::size_t>> MaskPlan::cells() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(cell_count());
  for (const GapDescriptor& g : gaps)
    for (std::size_t t = g.start; t < g.start + g.length; ++t) out.emplace_back(g.channel, t);
  std::sort(out.begin(), out.end());
  return out;
}

MaskPlan mask_by_ratio(const TimeSeriesFrame& frame, double ratio,
                       std::pair<std::size_t, std::size_t> gap_length_range, std::uint64_t seed,
                       const GapClassBounds& bounds) {
  if (!(ratio >= 0.0 && ratio < 1.0))
    throw std::invalid_argument("mask_by_ratio: ratio must lie in [0, 1)");
  const auto [lo, hi] = gap_length_range;
  if (lo < 1 || lo > hi)
    throw std::invalid_argument("mask_by_ratio: gap length range must satisfy 1 <= lo <= hi");

  MaskPlan plan;
  plan.seed = seed;
  plan.ratio = ratio;
  if (ratio == 0.0) return plan;

  Rng rng(seed);
  const std::size_t n_steps = frame.n_steps;
  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    const std::size_t n_obs = frame.observed_count(c);
    std::size_t remaining = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_obs)));
    if (remaining == 0) continue;

    auto blocked = blocked_cells(frame, c);
    int rejects = 0;
    while (remaining > 0) {
      std::size_t len = rng.range(lo, hi);
      if (len > remaining) len = remaining;  // land exactly on the target
      if (len > n_steps)
        throw std::invalid_argument("mask_by_ratio: gap length exceeds frame length");
      const std::size_t start = rng.bounded(n_steps - len + 1);
      if (!claim(blocked, start, len)) {
        if (++rejects >= kMaxRejections)
          throw std::runtime_error(
              "mask_by_ratio: could not place a gap after " + std::to_string(kMaxRejections) +
              " attempts on channel " + std::to_string(c) +
              "; the requested ratio is too dense for the gap length range");
        continue;
      }
      rejects = 0;
      plan.gaps.push_back({c, start, len, classify_gap(len, bounds)});
      remaining -= len;
    }
  }
  sort_gaps(plan.gaps);
  return plan;
}

MaskPlan mask_by_length_class(const TimeSeriesFrame& frame, GapClass cls, std::size_t count,
                              std::uint64_t seed, const GapClassBounds& bounds) {
  const auto [lo, hi] = gap_class_range(cls, bounds);
  MaskPlan plan;
  plan.seed = seed;
  if (count == 0) return plan;
  if (frame.n_steps < lo)
    throw std::invalid_argument("mask_by_length_class: frame shorter than the class minimum");

  Rng rng(seed);
  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    auto blocked = blocked_cells(frame, c);
    int rejects = 0;
    std::size_t placed = 0;
    while (placed < count) {
      const std::size_t len = std::min(rng.range(lo, hi), frame.n_steps);
      const std::size_t start = rng.bounded(frame.n_steps - len + 1);
      if (!claim(blocked, start, len)) {
        if (++rejects >= kMaxRejections)
          throw std::runtime_error(
              "mask_by_length_class: could not place gap " + std::to_string(placed + 1) + " of " +
              std::to_string(count) + " on channel " + std::to_string(c));
        continue;
      }
      rejects = 0;
      plan.gaps.push_back({c, start, len, cls});
      ++placed;
    }
  }
  sort_gaps(plan.gaps);

  double masked = 0;
  for (const GapDescriptor& g : plan.gaps) masked += static_cast<double>(g.length);
  plan.ratio = frame.values.empty() ? 0.0 : masked / static_cast<double>(frame.values.size());
  return plan;
}

MaskPlan mask_all_sensors(const TimeSeriesFrame& frame, std::size_t start, std::size_t length,
                          const GapClassBounds& bounds) {
  if (length == 0) throw std::invalid_argument("mask_all_sensors: length must be positive");
  if (start + length > frame.n_steps)
    throw std::invalid_argument("mask_all_sensors: interval [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") exceeds frame length " +
                                std::to_string(frame.n_steps));
  MaskPlan plan;
  for (std::size_t c = 0; c < frame.n_channels(); ++c) {
    const auto obs = frame.channel_observed(c);
    std::size_t run_start = start;
    while (run_start < start + length) {
      if (!obs[run_start]) {
        ++run_start;
        continue;
      }
      std::size_t run_end = run_start;
      while (run_end < start + length && obs[run_end]) ++run_end;
      const std::size_t run_len = run_end - run_start;
      plan.gaps.push_back({c, run_start, run_len, classify_gap(run_len, bounds)});
      run_start = run_end;
    }
  }
  sort_gaps(plan.gaps);
  const std::size_t total = frame.n_channels() * frame.n_steps;
  plan.ratio = total == 0 ? 0.0 : static_cast<double>(plan.cell_count()) / static_cast<double>(total);
  return plan;
}

std::pair<TimeSeriesFrame, GroundTruth> apply_mask(const TimeSeriesFrame& frame,
                                                   const MaskPlan& plan) {
  TimeSeriesFrame masked = frame;
  GroundTruth truth;
  truth.cells.reserve(plan.cell_count());
  for (const GapDescriptor& g : plan.gaps) {
    if (g.channel >= frame.n_channels() || g.start + g.length > frame.n_steps)
      throw std::invalid_argument("apply_mask: descriptor outside the frame");
    for (std::size_t t = g.start; t < g.start + g.length; ++t) {
      if (!masked.is_observed(g.channel, t))
        throw std::invalid_argument("apply_mask: plan hides cell (" + std::to_string(g.channel) +
                                    ", " + std::to_string(t) +
                                    ") which is not observed (or is hidden twice)");
      truth.cells.push_back({g.channel, t, masked.raw(g.channel, t)});
      masked.clear(g.channel, t);
    }
  }
  std::sort(truth.cells.begin(), truth.cells.end(), [](const auto& a, const auto& b) {
    if (a.channel != b.channel) return a.channel < b.channel;
    return a.time < b.time;
  });
  return {std::move(masked), std::move(truth)};
}

void restore(TimeSeriesFrame& frame, const GroundTruth& truth) {
  for (const GroundTruth::Cell& cell : truth.cells) frame.set(cell.channel, cell.time, cell.value);
}

std::string serialize_mask_plan(const MaskPlan& plan) {
  std::string out;
  out += "seed=" + std::to_string(plan.seed) + "\n";
  out += "ratio=" + format_double(plan.ratio) + "\n";
  out += "channel,start,length,class\n";
  for (const GapDescriptor& g : plan.gaps) {
    out += std::to_string(g.channel) + "," + std::to_string(g.start) + "," +
           std::to_string(g.length) + "," + gap_class_letter(g.cls) + "\n";
  }
  return out;
}

MaskPlan parse_mask_plan(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  MaskPlan plan;
  int lineno = 0;
  bool saw_seed = false, saw_ratio = false, saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string at = " at line " + std::to_string(lineno);
    if (line.rfind("seed=", 0) == 0) {
      plan.seed = std::stoull(line.substr(5));
      saw_seed = true;
      continue;
    }
    if (line.rfind("ratio=", 0) == 0) {
      plan.ratio = std::stod(line.substr(6));
      saw_ratio = true;
      continue;
    }
    if (line == "channel,start,length,class") {
      saw_header = true;
      continue;
    }
    if (!saw_header)
      throw std::invalid_argument("mask plan: unexpected line before column header" + at);
    std::istringstream row(line);
    std::string f0, f1, f2, f3;
    if (!std::getline(row, f0, ',') || !std::getline(row, f1, ',') || !std::getline(row, f2, ',') ||
        !std::getline(row, f3))
      throw std::invalid_argument("mask plan: malformed row" + at);
    GapDescriptor g;
    try {
      g.channel = std::stoull(f0);
      g.start = std::stoull(f1);
      g.length = std::stoull(f2);
    } catch (const std::exception&) {
      throw std::invalid_argument("mask plan: non-numeric field" + at);
    }
    if (f3.size() != 1) throw std::invalid_argument("mask plan: bad class field" + at);
    if (g.length == 0) throw std::invalid_argument("mask plan: zero-length gap" + at);
    g.cls = gap_class_from_letter(f3[0]);
    plan.gaps.push_back(g);
  }
  if (!saw_seed || !saw_ratio || !saw_header)
    throw std::invalid_argument("mask plan: missing seed=, ratio=, or column header");
  return plan;
}

void save_mask_plan(const MaskPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << serialize_mask_plan(plan);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MaskPlan load_mask_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_mask_plan(buf.str());
}

}  // namespace gapfill

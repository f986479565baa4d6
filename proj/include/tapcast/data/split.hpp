#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "tapcast/error.hpp"

namespace tapcast::data {

enum class Segment { train = 0, val = 1, test = 2 };

inline std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::train: return "train";
    case Segment::val: return "val";
    case Segment::test: return "test";
  }
  return "?";
}

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

// Either ratios or explicit end boundaries (train_end, val_end, test_end).
struct SplitSpec {
  SplitRatios ratios{};
  std::optional<std::array<std::size_t, 3>> boundaries;
  bool lookback_overlap = true;
};

// [begin, end) of timesteps usable by one segment. With lookback overlap,
// begin sits L points before nominal_begin so the first target follows the
// boundary.
struct SegmentRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t nominal_begin = 0;

  std::size_t length() const { return end - begin; }
  std::size_t nominal_length() const { return end - nominal_begin; }
};

struct SplitResult {
  std::array<SegmentRange, 3> segments;

  const SegmentRange& operator[](Segment s) const { return segments[static_cast<int>(s)]; }
  SegmentRange& operator[](Segment s) { return segments[static_cast<int>(s)]; }
};

// Timesteps per hour for a pandas-style frequency string ("1h", "15min", "h", "t").
inline std::size_t points_per_hour(std::string_view freq) {
  std::size_t i = 0;
  while (i < freq.size() && freq[i] >= '0' && freq[i] <= '9') ++i;
  const std::size_t mult = i == 0 ? 1 : std::stoul(std::string(freq.substr(0, i)));
  const auto unit = freq.substr(i);
  if (unit == "h" || unit == "H" || unit == "hour") {
    if (mult != 1) throw ConfigError("ETT protocol needs a sub-hourly or hourly frequency, got '" + std::string(freq) + "'");
    return 1;
  }
  if (unit == "min" || unit == "t" || unit == "T") {
    if (mult == 0 || 60 % mult != 0) throw ConfigError("frequency '" + std::string(freq) + "' does not divide an hour");
    return 60 / mult;
  }
  throw ConfigError("unsupported frequency '" + std::string(freq) + "' for ETT protocol");
}

// Fixed 12/4/4-month boundaries (30-day months) used by the ETT benchmarks.
inline SplitSpec ett_split_spec(std::string_view frequency, bool lookback_overlap = true) {
  const std::size_t month = 30 * 24 * points_per_hour(frequency);
  SplitSpec spec;
  spec.boundaries = std::array<std::size_t, 3>{12 * month, 16 * month, 20 * month};
  spec.lookback_overlap = lookback_overlap;
  return spec;
}

// Chronological contiguous segments. `horizon` = 0 skips the sufficiency check.
inline SplitResult split(std::size_t series_length, const SplitSpec& spec, std::size_t lookback,
                         std::size_t horizon) {
  std::array<std::size_t, 3> ends{};
  if (spec.boundaries) {
    ends = *spec.boundaries;
    if (!(ends[0] > 0 && ends[0] <= ends[1] && ends[1] <= ends[2])) {
      throw ConfigError("split boundaries must be monotone");
    }
    if (ends[2] > series_length) {
      throw InsufficientDataError("split boundaries end at " + std::to_string(ends[2]) +
                                  " but the series has " + std::to_string(series_length) +
                                  " points");
    }
  } else {
    const auto& r = spec.ratios;
    if (r.train <= 0.0 || r.val < 0.0 || r.test < 0.0 ||
        std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
      throw ConfigError("split ratios must be non-negative, train > 0, and sum to 1");
    }
    const auto n = static_cast<double>(series_length);
    const auto n_train = static_cast<std::size_t>(std::floor(n * r.train + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * r.test + 1e-9));
    ends = {n_train, series_length - n_test, series_length};
  }

  SplitResult out;
  std::size_t prev = 0;
  for (int s = 0; s < 3; ++s) {
    SegmentRange seg;
    seg.nominal_begin = prev;
    seg.end = ends[s];
    seg.begin = (s > 0 && spec.lookback_overlap) ? (prev >= lookback ? prev - lookback : 0) : prev;
    out.segments[s] = seg;
    prev = ends[s];
  }
  if (horizon > 0) {
    for (int s = 0; s < 3; ++s) {
      const auto& seg = out.segments[s];
      if (seg.length() < lookback + horizon) {
        throw InsufficientDataError(std::string(to_string(static_cast<Segment>(s))) +
                                    " segment has " + std::to_string(seg.length()) +
                                    " points, needs at least L+T = " +
                                    std::to_string(lookback + horizon));
      }
    }
  }
  return out;
}

// Inputs-only window count (segment length - L + 1). This is the convention
// benchmark tables use when they quote split sizes.
inline std::size_t input_window_count(const SegmentRange& seg, std::size_t lookback) {
  return seg.length() >= lookback ? seg.length() - lookback + 1 : 0;
}

}  // namespace tapcast::data

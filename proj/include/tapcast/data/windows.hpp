#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tapcast/data/series.hpp"
#include "tapcast/data/split.hpp"
#include "tapcast/error.hpp"

namespace tapcast::data {

inline constexpr std::size_t kAllChannels = std::numeric_limits<std::size_t>::max();

// One (input, horizon) sample: input [start, start+L), horizon [start+L, start+L+T).
struct WindowIndex {
  Segment segment = Segment::train;
  std::size_t start = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::size_t channel = kAllChannels;

  friend bool operator==(const WindowIndex&, const WindowIndex&) = default;
};

// Every window whose input and horizon fit inside `seg`. Channel-independent
// lists repeat the starts once per channel (channel-major order).
inline std::vector<WindowIndex> windows(const SegmentRange& seg, Segment which,
                                        std::size_t lookback, std::size_t horizon,
                                        std::size_t channels, bool channel_independent = true) {
  if (lookback == 0) throw ConfigError("windows: L must be positive");
  if (horizon == 0) throw ConfigError("windows: T must be positive");
  std::vector<WindowIndex> out;
  if (seg.length() < lookback + horizon) return out;
  const std::size_t count = seg.length() - lookback - horizon + 1;
  const std::size_t reps = channel_independent ? channels : 1;
  out.reserve(count * reps);
  for (std::size_t c = 0; c < reps; ++c)
    for (std::size_t i = 0; i < count; ++i)
      out.push_back(WindowIndex{which, seg.begin + i, lookback, horizon,
                                channel_independent ? c : kAllChannels});
  return out;
}

// The chronological prefix covering ceil(fraction * length) training timesteps.
inline SegmentRange few_shot_range(const SegmentRange& train, double fraction,
                                   std::size_t lookback, std::size_t horizon) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ConfigError("few-shot fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(train.length()) - 1e-9));
  SegmentRange reduced{train.begin, train.begin + keep, train.nominal_begin};
  if (reduced.length() < lookback + horizon) {
    throw InsufficientDataError("few-shot training prefix has " + std::to_string(keep) +
                                " points, needs at least L+T = " +
                                std::to_string(lookback + horizon));
  }
  return reduced;
}

// Training windows regenerated inside the few-shot prefix. Membership depends
// only on `fraction`; any shuffling happens later in the trainer.
inline std::vector<WindowIndex> few_shot_subset(const SegmentRange& train, double fraction,
                                                std::size_t lookback, std::size_t horizon,
                                                std::size_t channels,
                                                bool channel_independent = true) {
  return windows(few_shot_range(train, fraction, lookback, horizon), Segment::train, lookback,
                 horizon, channels, channel_independent);
}

// Train/val on the source, test on the target. The source test segment is unused.
struct TransferPlan {
  std::string source_name;
  std::string target_name;
  SegmentRange train;
  SegmentRange val;
  SegmentRange test;
  std::size_t source_channels = 0;
  std::size_t target_channels = 0;
  bool same_dataset = false;
};

inline TransferPlan zero_shot_pair(const SeriesDataset& source, const SplitSpec& source_spec,
                                   const SeriesDataset& target, const SplitSpec& target_spec,
                                   std::size_t lookback, std::size_t horizon) {
  const auto src = split(source.length(), source_spec, lookback, horizon);
  const auto tgt = split(target.length(), target_spec, lookback, horizon);
  TransferPlan plan;
  plan.source_name = source.name;
  plan.target_name = target.name;
  plan.train = src[Segment::train];
  plan.val = src[Segment::val];
  plan.test = tgt[Segment::test];
  plan.source_channels = source.channel_count();
  plan.target_channels = target.channel_count();
  plan.same_dataset = &source == &target ||
                      (source.name == target.name && source.channels == target.channels);
  return plan;
}

}  // namespace tapcast::data

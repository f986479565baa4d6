#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/data/series.hpp"
#include "tapcast/error.hpp"
#include "tapcast/numerics/rng.hpp"

namespace tapcast::data {

enum class SynthKind { sine_mix, ramp, noise };

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "sine_mix") return SynthKind::sine_mix;
  if (s == "ramp") return SynthKind::ramp;
  if (s == "noise") return SynthKind::noise;
  throw ConfigError("unknown synthetic kind '" + std::string(s) + "'");
}

struct SynthSpec {
  SynthKind kind = SynthKind::sine_mix;
  std::size_t length = 4000;
  std::size_t channels = 2;
  std::uint64_t seed = 1;
  double noise = 0.05;  // gaussian std added to sine_mix; std of the noise kind
};

struct SineComponent {
  double amplitude;
  double period;
  double phase;
};

// Two or three sinusoids per channel with periods drawn from a continuous
// range, so their ratios are irrational with probability one.
inline std::vector<SineComponent> sine_mix_components(std::uint64_t seed, std::size_t channel) {
  auto rng = make_stream(seed, Stream::synth, 2 * channel + 1);
  std::uniform_real_distribution<double> amp(0.5, 2.0), period(8.0, 96.0),
      phase(0.0, 2.0 * std::numbers::pi);
  const std::size_t n = 2 + static_cast<std::size_t>(rng() % 2);
  std::vector<SineComponent> out;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = amp(rng);
    const double p = period(rng);
    const double ph = phase(rng);
    out.push_back({a, p, ph});
  }
  return out;
}

inline double sine_mix_value(const std::vector<SineComponent>& comps, std::size_t t) {
  double v = 0.0;
  for (const auto& c : comps)
    v += c.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / c.period + c.phase);
  return v;
}

// "YYYY-MM-DD hh:00:00", hourly from 2000-01-01.
inline std::string hourly_timestamp(std::size_t t) {
  using namespace std::chrono;
  const sys_days origin = year{2000} / January / 1;
  const auto tp = origin + hours(static_cast<long long>(t));
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const auto hh = duration_cast<hours>(tp - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:00:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hh));
  return buf;
}

inline SeriesDataset synth_generate(const SynthSpec& spec) {
  if (spec.length == 0 || spec.channels == 0) throw ConfigError("synthetic series needs length and channels");
  SeriesDataset ds;
  ds.name = spec.kind == SynthKind::sine_mix ? "sine_mix" : spec.kind == SynthKind::ramp ? "ramp" : "noise";
  ds.frequency = "1h";
  ds.timestamps.emplace();
  for (std::size_t t = 0; t < spec.length; ++t) ds.timestamps->push_back(hourly_timestamp(t));
  for (std::size_t c = 0; c < spec.channels; ++c) {
    ds.channel_names.push_back("ch" + std::to_string(c));
    std::vector<double> col(spec.length);
    auto noise_rng = make_stream(spec.seed, Stream::synth, 2 * c + 2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    switch (spec.kind) {
      case SynthKind::sine_mix: {
        const auto comps = sine_mix_components(spec.seed, c);
        for (std::size_t t = 0; t < spec.length; ++t) {
          col[t] = sine_mix_value(comps, t);
          if (spec.noise > 0.0) col[t] += spec.noise * gauss(noise_rng);
        }
        break;
      }
      case SynthKind::ramp:
        for (std::size_t t = 0; t < spec.length; ++t) col[t] = static_cast<double>(t);
        break;
      case SynthKind::noise:
        for (std::size_t t = 0; t < spec.length; ++t) col[t] = spec.noise * gauss(noise_rng);
        break;
    }
    ds.channels.push_back(std::move(col));
  }
  return ds;
}

// Header "date,<channel names>" (date omitted when there are no timestamps),
// values in shortest round-trip form.
inline void write_csv(const SeriesDataset& ds, const std::string& path) {
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  const bool dated = ds.timestamps.has_value();
  if (dated) out << "date";
  for (std::size_t c = 0; c < ds.channel_count(); ++c)
    out << (dated || c ? "," : "") << ds.channel_names[c];
  out << '\n';
  char buf[32];
  for (std::size_t t = 0; t < ds.length(); ++t) {
    if (dated) out << (*ds.timestamps)[t];
    for (std::size_t c = 0; c < ds.channel_count(); ++c) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, ds.channels[c][t]);
      out << (dated || c ? "," : "") << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace tapcast::data

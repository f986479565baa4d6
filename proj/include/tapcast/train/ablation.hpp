#pragma once

#include <charconv>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/train/parallel.hpp"
#include "tapcast/train/protocol.hpp"
#include "tapcast/train/report.hpp"

namespace tapcast::train {

enum class AblationAxis { freeze_policy, fusion_variant, layer_selection, n_layers, local_tap, seq_len };

inline std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::freeze_policy: return "freeze_policy";
    case AblationAxis::fusion_variant: return "fusion_variant";
    case AblationAxis::layer_selection: return "layer_selection";
    case AblationAxis::n_layers: return "n_layers";
    case AblationAxis::local_tap: return "local_tap";
    case AblationAxis::seq_len: return "seq_len";
  }
  return "?";
}

inline AblationAxis parse_axis(std::string_view s) {
  for (auto a : {AblationAxis::freeze_policy, AblationAxis::fusion_variant,
                 AblationAxis::layer_selection, AblationAxis::n_layers, AblationAxis::local_tap,
                 AblationAxis::seq_len}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation axis '" + std::string(s) + "'");
}

// The values each axis is swept over when none are given.
inline std::vector<std::string> default_axis_values(AblationAxis a) {
  switch (a) {
    case AblationAxis::freeze_policy: return {"ln_pe", "ln", "pe", "full", "none"};
    case AblationAxis::fusion_variant: return {"mixer", "add", "cross", "none"};
    case AblationAxis::layer_selection: return {"boundary", "half_average", "local_only", "global_only"};
    case AblationAxis::n_layers: return {"2", "4", "6"};
    case AblationAxis::local_tap: return {"1", "2", "3", "4", "5", "6"};
    case AblationAxis::seq_len: return {"96", "192", "336", "512", "720"};
  }
  return {};
}

inline std::size_t parse_size(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError(std::string(what) + ": bad value '" + std::string(s) + "'");
  }
  return v;
}

inline ExperimentConfig with_axis_value(ExperimentConfig cfg, AblationAxis axis, std::string_view value) {
  auto& m = cfg.model;
  switch (axis) {
    case AblationAxis::freeze_policy: m.freeze = backbone::parse_freeze_policy(value); break;
    case AblationAxis::fusion_variant: m.fusion = mixers::parse_fusion(value); break;
    case AblationAxis::layer_selection: m.selection = mixers::parse_selection(value); break;
    case AblationAxis::n_layers: m.backbone.n_layers = parse_size(value, "n_layers"); break;
    case AblationAxis::local_tap: m.local_tap = parse_size(value, "local_tap"); break;
    case AblationAxis::seq_len: m.seq_len = parse_size(value, "seq_len"); break;
  }
  m.validate();
  return cfg;
}

struct AblationRow {
  std::string axis;
  std::string value;
  double avg_mse = 0.0;
  double avg_mae = 0.0;
  std::size_t params_total = 0;
  std::size_t params_trainable = 0;
  std::size_t pretrained_trainable = 0;
  std::vector<RunReport> runs;
};

// Runs the protocol once per value with the shared seed and data; one row per value.
template <typename T = double>
std::vector<AblationRow> ablation_sweep(AblationAxis axis, const std::vector<std::string>& values,
                                        const ExperimentConfig& base, const Protocol& protocol,
                                        const data::SeriesDataset& source,
                                        const data::SeriesDataset* target = nullptr) {
  if (values.empty()) throw ConfigError("ablation sweep needs at least one value");
  std::vector<ExperimentConfig> cells;
  for (const auto& v : values) cells.push_back(with_axis_value(base, axis, v));

  std::vector<AblationRow> rows(values.size());
  parallel_for(values.size(), base.jobs, [&](std::size_t i) {
    ExperimentConfig cell = cells[i];
    cell.jobs = 1;
    auto outcomes = run_protocol<T>(protocol, cell, source, target);
    AblationRow row;
    row.axis = std::string(to_string(axis));
    row.value = values[i];
    for (auto& o : outcomes) row.runs.push_back(std::move(o.report));
    const auto m = summarize(row.runs);
    row.avg_mse = m.avg_mse;
    row.avg_mae = m.avg_mae;
    row.params_total = row.runs.front().params_total;
    row.params_trainable = row.runs.front().params_trainable;
    row.pretrained_trainable = row.runs.front().pretrained_trainable;
    rows[i] = std::move(row);
  });
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "axis,value,mse,mae,params_total,params_trainable,pretrained_trainable\n";
  for (const auto& r : rows) {
    os << r.axis << ',' << r.value << ',' << fmt(r.avg_mse) << ',' << fmt(r.avg_mae) << ','
       << r.params_total << ',' << r.params_trainable << ',' << r.pretrained_trainable << '\n';
  }
  return os.str();
}

}  // namespace tapcast::train

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tapcast/config.hpp"
#include "tapcast/data/series.hpp"
#include "tapcast/data/split.hpp"
#include "tapcast/model.hpp"
#include "tapcast/train/trainer.hpp"

namespace tapcast::train {

// Dataset manifest: where the CSV lives and how it is split.
struct DatasetSpec {
  std::string name;
  std::string path;
  std::string frequency = "1h";
  bool ett_protocol = false;
  data::SplitRatios ratios{};
  bool lookback_overlap = true;
  std::string date_column = "date";
  std::vector<std::string> columns;

  data::SplitSpec split_spec() const {
    if (ett_protocol) return data::ett_split_spec(frequency, lookback_overlap);
    data::SplitSpec s;
    s.ratios = ratios;
    s.lookback_overlap = lookback_overlap;
    return s;
  }
};

inline data::SeriesDataset load_dataset(const DatasetSpec& spec) {
  if (spec.path.empty()) throw ConfigError("dataset path is empty");
  data::CsvSchema schema;
  schema.timestamp_column = spec.date_column;
  schema.value_columns = spec.columns;
  auto ds = data::load_csv(spec.path, schema);
  if (!spec.name.empty()) ds.name = spec.name;
  ds.frequency = spec.frequency;
  return ds;
}

struct ExperimentConfig {
  DatasetSpec data;
  std::optional<DatasetSpec> target;
  ModelConfig model;  // model.horizon is overwritten per run
  std::vector<std::size_t> horizons{96, 192, 336, 720};
  TrainConfig train;
  double few_shot_fraction = 0.05;
  std::size_t jobs = 1;
  std::string snapshot;  // full key = value dump of the originating config
};

inline DatasetSpec dataset_from_config(const Config& c, const std::string& section) {
  DatasetSpec d;
  d.name = c.str(section + ".name");
  d.path = c.str(section + ".path");
  d.frequency = c.str(section + ".frequency");
  d.ett_protocol = c.boolean(section + ".ett_protocol");
  d.ratios = {c.real(section + ".train_ratio"), c.real(section + ".val_ratio"),
              c.real(section + ".test_ratio")};
  d.lookback_overlap = c.boolean(section + ".lookback_overlap");
  d.date_column = c.str(section + ".date_column");
  d.columns = c.list(section + ".columns");
  return d;
}

inline bool parse_scale(const Config& c, const std::string& key) {
  const auto& s = c.str(key);
  if (s == "normalized") return true;
  if (s == "denormalized") return false;
  throw ConfigError(key + ": expected normalized | denormalized, got '" + s + "'");
}

inline ExperimentConfig experiment_from_config(const Config& c) {
  ExperimentConfig e;
  e.data = dataset_from_config(c, "data");
  if (!c.str("target.path").empty()) e.target = dataset_from_config(c, "target");

  auto& m = e.model;
  m.seq_len = c.count("model.seq_len");
  m.patch.length = c.count("model.patch_len");
  m.patch.stride = c.count("model.stride");
  const auto pad = c.integer("model.pad");
  m.patch.pad = pad < 0 ? m.patch.stride : static_cast<std::size_t>(pad);
  auto& b = m.backbone;
  b.n_layers = c.count("model.n_layers");
  b.d_model = c.count("model.d_model");
  b.n_heads = c.count("model.n_heads");
  b.d_ff = c.count("model.d_ff");
  b.max_patches = c.count("model.max_patches");
  b.patch_len = m.patch.length;
  b.causal = c.boolean("model.causal");
  b.dropout = c.real("model.dropout");
  b.use_bias = c.boolean("model.use_bias");
  b.ln_eps = c.real("model.ln_eps");
  b.init_std = c.real("model.init_std");
  m.mixer_hidden = c.count("model.mixer_hidden");
  m.fusion = mixers::parse_fusion(c.str("model.fusion"));
  m.selection = mixers::parse_selection(c.str("model.selection"));
  m.local_tap = c.count("model.local_tap");
  m.freeze = backbone::parse_freeze_policy(c.str("model.freeze"));
  m.ln_scope = backbone::parse_ln_scope(c.str("model.ln_scope"));
  m.revin_eps = c.real("model.revin_eps");

  e.horizons.clear();
  for (const auto& h : c.list("train.horizons")) {
    std::size_t v = 0;
    try {
      v = std::stoul(h);
    } catch (const std::exception&) {
      throw ConfigError("train.horizons: bad value '" + h + "'");
    }
    if (v == 0) throw ConfigError("train.horizons: horizons must be positive");
    e.horizons.push_back(v);
  }
  if (e.horizons.empty()) throw ConfigError("train.horizons must not be empty");
  m.horizon = e.horizons.front();

  auto& t = e.train;
  t.epochs = c.count("train.epochs");
  t.max_steps = c.count("train.max_steps");
  t.batch_size = c.count("train.batch_size");
  t.eval_batch_size = c.count("train.eval_batch_size");
  t.patience = c.count("train.patience");
  t.adam = {c.real("train.lr"), c.real("train.beta1"), c.real("train.beta2"), c.real("train.adam_eps")};
  t.seed = static_cast<std::uint64_t>(c.integer("train.seed"));
  t.loss_on_normalized_scale = parse_scale(c, "train.loss_scale");
  t.metrics_on_normalized_scale = parse_scale(c, "train.metric_scale");
  e.few_shot_fraction = c.real("train.few_shot_fraction");
  e.jobs = std::max<std::size_t>(1, c.count("run.jobs"));
  e.snapshot = c.to_text();
  m.validate();
  return e;
}

}  // namespace tapcast::train

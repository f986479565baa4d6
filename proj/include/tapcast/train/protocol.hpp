#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/data/series.hpp"
#include "tapcast/data/split.hpp"
#include "tapcast/data/windows.hpp"
#include "tapcast/model.hpp"
#include "tapcast/train/experiment.hpp"
#include "tapcast/train/metrics.hpp"
#include "tapcast/train/parallel.hpp"
#include "tapcast/train/trainer.hpp"

namespace tapcast::train {

enum class ProtocolKind { long_term, few_shot, zero_shot };

struct Protocol {
  ProtocolKind kind = ProtocolKind::long_term;
  double fraction = 1.0;  // few-shot training fraction

  static Protocol long_term() { return {}; }
  static Protocol few_shot(double f) { return {ProtocolKind::few_shot, f}; }
  static Protocol zero_shot() { return {ProtocolKind::zero_shot, 1.0}; }
};

inline std::string_view protocol_name(const Protocol& p) {
  switch (p.kind) {
    case ProtocolKind::long_term: return "long_term";
    case ProtocolKind::few_shot: return "few_shot";
    case ProtocolKind::zero_shot: return "zero_shot";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s, double fraction) {
  if (s == "long_term") return Protocol::long_term();
  if (s == "few_shot") return Protocol::few_shot(fraction);
  if (s == "zero_shot") return Protocol::zero_shot();
  throw ConfigError("unknown protocol '" + std::string(s) + "'");
}

struct RunReport {
  std::string dataset;
  std::string target_dataset;
  std::string protocol;
  std::size_t horizon = 0;
  ErrorStats test;
  ErrorStats persistence;
  std::size_t params_total = 0;
  std::size_t params_trainable = 0;
  std::size_t pretrained_total = 0;
  std::size_t pretrained_trainable = 0;
  TrainResult training;
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;
  std::size_t test_windows = 0;
  double seconds = 0.0;
  std::uint64_t fingerprint_before_test = 0;
  std::uint64_t fingerprint_after_test = 0;
  std::string config_snapshot;
};

template <typename T>
struct RunOutcome {
  RunReport report;
  Model<T> model;
};

struct ResolvedWindows {
  std::vector<data::WindowIndex> train, val, test;
};

// Window lists for one horizon under a protocol. Zero-shot draws test
// windows from the target; every other segment comes from the source.
inline ResolvedWindows resolve_windows(const Protocol& protocol, const ExperimentConfig& cfg,
                                       const data::SeriesDataset& source,
                                       const data::SeriesDataset* target, std::size_t horizon) {
  const std::size_t L = cfg.model.seq_len;
  data::SegmentRange train_seg, val_seg, test_seg;
  const data::SeriesDataset* test_ds = &source;
  if (protocol.kind == ProtocolKind::zero_shot) {
    if (!target || !cfg.target) throw ConfigError("zero-shot protocol needs a target dataset");
    const auto plan = data::zero_shot_pair(source, cfg.data.split_spec(), *target,
                                           cfg.target->split_spec(), L, horizon);
    train_seg = plan.train;
    val_seg = plan.val;
    test_seg = plan.test;
    test_ds = target;
  } else {
    const auto s = data::split(source.length(), cfg.data.split_spec(), L, horizon);
    train_seg = s[data::Segment::train];
    val_seg = s[data::Segment::val];
    test_seg = s[data::Segment::test];
    if (protocol.kind == ProtocolKind::few_shot) {
      train_seg = data::few_shot_range(train_seg, protocol.fraction, L, horizon);
    }
  }
  ResolvedWindows w;
  w.train = data::windows(train_seg, data::Segment::train, L, horizon, source.channel_count());
  w.val = data::windows(val_seg, data::Segment::val, L, horizon, source.channel_count());
  w.test = data::windows(test_seg, data::Segment::test, L, horizon, test_ds->channel_count());
  return w;
}

template <typename T = double>
RunOutcome<T> run_horizon(const Protocol& protocol, const ExperimentConfig& cfg,
                          const data::SeriesDataset& source, const data::SeriesDataset* target,
                          std::size_t horizon) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto wins = resolve_windows(protocol, cfg, source, target, horizon);
  const data::SeriesDataset& test_ds = protocol.kind == ProtocolKind::zero_shot ? *target : source;

  ModelConfig mc = cfg.model;
  mc.horizon = horizon;
  RunOutcome<T> out{RunReport{}, build_model<T>(mc, cfg.train.seed)};
  auto& r = out.report;
  r.dataset = source.name;
  r.target_dataset = test_ds.name;
  r.protocol = std::string(protocol_name(protocol));
  r.horizon = horizon;
  r.params_total = out.model.total_params();
  r.params_trainable = out.model.trainable_params();
  r.pretrained_total = out.model.freeze.total;
  r.pretrained_trainable = out.model.freeze.trainable;
  r.train_windows = wins.train.size();
  r.val_windows = wins.val.size();
  r.test_windows = wins.test.size();
  r.config_snapshot = cfg.snapshot;

  r.training = train::train(out.model, source, wins.train, wins.val, cfg.train);
  r.fingerprint_before_test = out.model.params.fingerprint();
  r.test = evaluate(out.model, test_ds, wins.test, cfg.train.eval_batch_size,
                    cfg.train.metrics_on_normalized_scale);
  r.fingerprint_after_test = out.model.params.fingerprint();
  r.persistence = persistence_baseline(test_ds, wins.test);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// One run per configured horizon, in horizon order.
template <typename T = double>
std::vector<RunOutcome<T>> run_protocol(const Protocol& protocol, const ExperimentConfig& cfg,
                                        const data::SeriesDataset& source,
                                        const data::SeriesDataset* target = nullptr) {
  std::vector<std::optional<RunOutcome<T>>> slots(cfg.horizons.size());
  parallel_for(cfg.horizons.size(), cfg.jobs, [&](std::size_t i) {
    slots[i].emplace(run_horizon<T>(protocol, cfg, source, target, cfg.horizons[i]));
  });
  std::vector<RunOutcome<T>> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline Metrics summarize(const std::vector<RunReport>& reports) {
  std::vector<HorizonMetrics> h;
  for (const auto& r : reports) h.push_back({r.horizon, r.test.mse, r.test.mae});
  return summarize(std::move(h));
}

}  // namespace tapcast::train

#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tapcast/backbone/weights_io.hpp"
#include "tapcast/config.hpp"
#include "tapcast/data/synth.hpp"
#include "tapcast/diagnostics.hpp"
#include "tapcast/error.hpp"
#include "tapcast/mixers/similarity.hpp"
#include "tapcast/numerics/grad_check.hpp"
#include "tapcast/train/ablation.hpp"
#include "tapcast/train/experiment.hpp"
#include "tapcast/train/protocol.hpp"
#include "tapcast/train/report.hpp"

namespace tapcast::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline constexpr const char* kOutputRootEnv = "TAPCAST_OUT";

struct Options {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::size_t> jobs;
  std::string weights;
  std::string layer = "all";
  std::string axis;
  std::string values;
  // synth
  std::string synth_kind = "sine_mix";
  std::size_t synth_length = 4000;
  std::size_t synth_channels = 2;
  std::uint64_t synth_seed = 1;
  double synth_noise = 0.05;
  std::size_t synth_seq_len = 96;
  std::size_t synth_horizon = 96;
  std::string synth_output;
};

// Config file (if any) + --set overrides + flag overrides.
inline Config resolve_config(const Options& o) {
  Config c = o.config_path.empty() ? Config{} : Config::from_file(o.config_path);
  for (const auto& s : o.overrides) c.apply_override(s);
  if (!o.out.empty()) c.set("run.output_root", o.out);
  if (o.jobs) c.set("run.jobs", std::to_string(*o.jobs));
  return c;
}

inline std::filesystem::path run_directory(const Config& c) {
  std::string root = c.str("run.output_root");
  if (root.empty()) {
    const char* env = std::getenv(kOutputRootEnv);
    root = env && *env ? env : "out";
  }
  std::filesystem::path dir = std::filesystem::path(root) / c.str("run.name");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline std::string weights_name(std::size_t horizon, std::size_t horizon_count) {
  return horizon_count == 1 ? "weights.bin" : "weights_T" + std::to_string(horizon) + ".bin";
}

template <typename T>
int run_protocol_command(const Config& c, const train::Protocol& protocol, std::ostream& out) {
  const auto e = train::experiment_from_config(c);
  const auto source = train::load_dataset(e.data);
  std::optional<data::SeriesDataset> target;
  if (protocol.kind == train::ProtocolKind::zero_shot) {
    if (!e.target) throw ConfigError("zeroshot needs target.path");
    target = train::load_dataset(*e.target);
  }
  auto outcomes = train::run_protocol<T>(protocol, e, source, target ? &*target : nullptr);
  const auto dir = run_directory(c);
  std::vector<train::RunReport> reports;
  std::vector<std::string> artifacts{"metrics.csv"};
  for (auto& o : outcomes) {
    const auto name = weights_name(o.report.horizon, outcomes.size());
    backbone::save_weights(o.model.params, (dir / name).string());
    artifacts.push_back(name);
    reports.push_back(o.report);
  }
  train::write_text_file((dir / "metrics.csv").string(),
                         train::metrics_csv(reports, c.boolean("run.timing_in_metrics")));
  train::write_text_file((dir / "report.txt").string(), train::report_text(reports, artifacts));
  for (const auto& r : reports) {
    out << r.protocol << " T=" << r.horizon << " mse=" << train::fmt(r.test.mse)
        << " mae=" << train::fmt(r.test.mae) << " persistence_mse=" << train::fmt(r.persistence.mse)
        << '\n';
  }
  out << "wrote " << dir.string() << '\n';
  return kOk;
}

template <typename T>
Model<T> model_with_weights(const ModelConfig& mc, std::uint64_t seed, const std::string& path) {
  auto model = build_model<T>(mc, seed);
  if (!path.empty()) model.params = backbone::load_weights<T>(path, model.params);
  return model;
}

template <typename T>
int run_eval(const Config& c, const Options& o, std::ostream& out) {
  if (o.weights.empty()) throw ConfigError("eval needs --weights");
  auto e = train::experiment_from_config(c);
  const auto ds = train::load_dataset(e.data);
  const std::size_t horizon = e.horizons.front();
  auto model = model_with_weights<T>(e.model, e.train.seed, o.weights);
  const auto s = data::split(ds.length(), e.data.split_spec(), e.model.seq_len, horizon);
  const auto wins = data::windows(s[data::Segment::test], data::Segment::test, e.model.seq_len, horizon,
                                  ds.channel_count());
  train::RunReport r;
  r.dataset = r.target_dataset = ds.name;
  r.protocol = "eval";
  r.horizon = horizon;
  r.params_total = model.total_params();
  r.params_trainable = model.trainable_params();
  r.test_windows = wins.size();
  r.config_snapshot = e.snapshot;
  r.test = train::evaluate(model, ds, wins, e.train.eval_batch_size, e.train.metrics_on_normalized_scale);
  r.persistence = train::persistence_baseline(ds, wins);
  const auto dir = run_directory(c);
  train::write_text_file((dir / "metrics.csv").string(), train::metrics_csv({r}, false));
  train::write_text_file((dir / "report.txt").string(), train::report_text({r}, {"metrics.csv"}));
  out << "eval T=" << horizon << " mse=" << train::fmt(r.test.mse) << " mae=" << train::fmt(r.test.mae)
      << '\n';
  return kOk;
}

template <typename T>
int run_ablate(const Config& c, const Options& o, std::ostream& out) {
  const auto e = train::experiment_from_config(c);
  const auto axis = train::parse_axis(o.axis.empty() ? c.str("ablate.axis") : o.axis);
  std::vector<std::string> values;
  if (!o.values.empty()) {
    Config tmp;
    tmp.set("ablate.values", o.values);
    values = tmp.list("ablate.values");
  } else {
    values = c.list("ablate.values");
  }
  if (values.empty()) values = train::default_axis_values(axis);
  const auto protocol = train::parse_protocol(c.str("ablate.protocol"), e.few_shot_fraction);
  if (protocol.kind == train::ProtocolKind::zero_shot) throw ConfigError("ablate.protocol must be long_term or few_shot");
  const auto source = train::load_dataset(e.data);
  const auto rows = train::ablation_sweep<T>(axis, values, e, protocol, source);
  const auto dir = run_directory(c);
  const auto csv = train::ablation_csv(rows);
  train::write_text_file((dir / "ablation.csv").string(), csv);
  std::vector<train::RunReport> all;
  for (const auto& r : rows) all.insert(all.end(), r.runs.begin(), r.runs.end());
  train::write_text_file((dir / "metrics.csv").string(),
                         train::metrics_csv(all, c.boolean("run.timing_in_metrics")));
  std::string report = "# ablation over " + std::string(train::to_string(axis)) + "\n\n" + csv + "\n";
  train::write_text_file((dir / "report.txt").string(), report + train::report_text(all));
  out << csv;
  return kOk;
}

template <typename T>
int run_probe(const Config& c, const Options& o, std::ostream& out) {
  auto e = train::experiment_from_config(c);
  const auto ds = train::load_dataset(e.data);
  const std::size_t L = e.model.seq_len, horizon = e.horizons.front();
  e.model.horizon = horizon;
  auto model = model_with_weights<T>(e.model, e.train.seed, o.weights);
  const std::size_t channel = c.count("probe.channel");
  if (channel >= ds.channel_count()) throw ConfigError("probe.channel out of range");
  const auto s = data::split(ds.length(), e.data.split_spec(), L, horizon);
  std::vector<data::WindowIndex> wins;
  for (const auto& w : data::windows(s[data::Segment::test], data::Segment::test, L, horizon, ds.channel_count()))
    if (w.channel == channel) wins.push_back(w);
  const std::size_t index = c.count("probe.window");
  if (index >= wins.size()) {
    throw ConfigError("probe.window " + std::to_string(index) + " out of range (" +
                      std::to_string(wins.size()) + " test windows)");
  }
  const std::vector<data::WindowIndex> one{wins[index]};
  const auto batch = preprocess::make_batch<T>(ds, one, e.model.patch, e.model.revin_eps);
  const auto taps = layer_taps(model, batch);
  std::vector<std::size_t> layers;
  if (o.layer == "all") {
    for (std::size_t n = 0; n < taps.size(); ++n) layers.push_back(n);
  } else {
    const auto n = train::parse_size(o.layer, "--layer");
    if (n >= taps.size()) throw ConfigError("--layer must be in 0.." + std::to_string(taps.size() - 1));
    layers.push_back(n);
  }
  const auto dir = run_directory(c);
  std::string report = "# similarity probe\n\nwindow_start = " + std::to_string(one[0].start) +
                       "\nchannel = " + std::to_string(channel) + "\n";
  for (auto n : layers) {
    const auto m = mixers::cosine_similarity(taps[n]);
    const auto name = "sim_layer_" + std::to_string(n) + ".csv";
    mixers::write_similarity_csv(m, (dir / name).string());
    report += name + " zero_rows=" + std::to_string(m.zero_rows.size()) + "\n";
    out << "wrote " << (dir / name).string() << '\n';
  }
  train::write_text_file((dir / "report.txt").string(), report);
  return kOk;
}

inline int run_gradcheck(const Config& c, std::ostream& out) {
  auto setup = make_gradcheck_setup<double>(tiny_gradcheck_config(), static_cast<std::uint64_t>(c.integer("train.seed")));
  GradCheckOptions opts;
  opts.h = c.real("gradcheck.h");
  const double tol = c.real("gradcheck.tolerance");
  const auto r = grad_check<double>(model_loss(setup.model, setup.batch), setup.model.params, opts);
  out << "checked " << r.checked << " scalars, max relative error " << train::fmt(r.max_rel_error)
      << " (" << r.worst_param << "[" << r.worst_index << "])\n";
  if (!(r.max_rel_error <= tol)) {
    out << "FAIL: above tolerance " << train::fmt(tol) << '\n';
    return kNumerical;
  }
  out << "PASS: within tolerance " << train::fmt(tol) << '\n';
  return kOk;
}

inline int run_synth(const Options& o, std::ostream& out) {
  if (o.synth_output.empty()) throw ConfigError("synth needs --output");
  if (o.synth_length < 2 * (o.synth_seq_len + o.synth_horizon)) {
    throw ConfigError("synth length " + std::to_string(o.synth_length) + " is below 2(L+T) = " +
                      std::to_string(2 * (o.synth_seq_len + o.synth_horizon)));
  }
  data::SynthSpec spec;
  spec.kind = data::parse_synth_kind(o.synth_kind);
  spec.length = o.synth_length;
  spec.channels = o.synth_channels;
  spec.seed = o.synth_seed;
  spec.noise = o.synth_noise;
  data::write_csv(data::synth_generate(spec), o.synth_output);
  out << "wrote " << o.synth_output << '\n';
  return kOk;
}

template <typename T>
int dispatch_typed(const Config& c, const Options& o, std::ostream& out) {
  const double frac = c.real("train.few_shot_fraction");
  if (o.command == "train") return run_protocol_command<T>(c, train::Protocol::long_term(), out);
  if (o.command == "fewshot") return run_protocol_command<T>(c, train::Protocol::few_shot(frac), out);
  if (o.command == "zeroshot") return run_protocol_command<T>(c, train::Protocol::zero_shot(), out);
  if (o.command == "eval") return run_eval<T>(c, o, out);
  if (o.command == "ablate") return run_ablate<T>(c, o, out);
  if (o.command == "probe") return run_probe<T>(c, o, out);
  throw ConfigError("unknown command '" + o.command + "'");
}

inline int execute(const Options& o, std::ostream& out) {
  if (o.command == "synth") return run_synth(o, out);
  const Config c = resolve_config(o);
  if (o.command == "gradcheck") return run_gradcheck(c, out);
  if (o.config_path.empty()) throw ConfigError(o.command + " needs --config");
  const auto& precision = c.str("run.precision");
  if (precision == "double") return dispatch_typed<double>(c, o, out);
  if (precision == "float") return dispatch_typed<float>(c, o, out);
  throw ConfigError("run.precision: expected double | float, got '" + precision + "'");
}

inline int main(int argc, const char* const* argv, std::ostream& out = std::cout,
                std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"tapcast: patch-based forecasting with layer taps"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config,-c", o.config_path, "config file")->check(CLI::ExistingFile);
    sub->add_option("--set,-s", o.overrides, "override, section.key=value (repeatable)");
    sub->add_option("--out,-o", o.out, "output root (default $TAPCAST_OUT or ./out)");
    sub->add_option("--jobs,-j", o.jobs, "parallel runs");
  };
  const std::pair<const char*, const char*> commands[] = {
      {"train", "train and test one model per horizon"},
      {"fewshot", "train on the leading fraction of the training segment"},
      {"zeroshot", "train on the source dataset, test on the target"},
      {"eval", "score saved weights on the test windows"},
      {"ablate", "sweep one setting and tabulate averaged metrics"},
      {"probe", "write patch similarity matrices per layer tap"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, true);
    const std::string n = name;
    if (n == "eval" || n == "probe") sub->add_option("--weights,-w", o.weights, "weight file");
    if (n == "probe") sub->add_option("--layer", o.layer, "tap index or 'all'");
    if (n == "ablate") {
      sub->add_option("--axis", o.axis, "ablation axis");
      sub->add_option("--values", o.values, "comma-separated values");
    }
  }
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check on a tiny model");
  add_common(gc, true);
  auto* sy = app.add_subcommand("synth", "write a synthetic dataset");
  sy->add_option("--kind", o.synth_kind, "sine_mix | ramp | noise");
  sy->add_option("--length", o.synth_length);
  sy->add_option("--channels", o.synth_channels);
  sy->add_option("--seed", o.synth_seed);
  sy->add_option("--noise", o.synth_noise);
  sy->add_option("--seq-len", o.synth_seq_len);
  sy->add_option("--horizon", o.synth_horizon);
  sy->add_option("--output", o.synth_output, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  for (auto* sub : app.get_subcommands()) o.command = sub->get_name();

  try {
    return execute(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const HarnessError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace tapcast::cli

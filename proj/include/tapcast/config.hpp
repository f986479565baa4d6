#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/error.hpp"

namespace tapcast {

struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* help;
};

// Every recognised key with its default. Keys are "section.name".
inline const std::vector<ConfigKey>& config_table() {
  static const std::vector<ConfigKey> table = {
      {"run.name", "run", "output subdirectory under run.output_root"},
      {"run.output_root", "", "output root; empty = $TAPCAST_OUT or ./out"},
      {"run.jobs", "1", "parallel horizon runs / ablation cells"},
      {"run.precision", "double", "double | float"},
      {"run.timing_in_metrics", "false", "write wall-clock seconds into metrics.csv"},

      {"data.name", "", "dataset name (defaults to the file stem)"},
      {"data.path", "", "CSV file"},
      {"data.frequency", "1h", "sampling frequency, e.g. 1h or 15min"},
      {"data.ett_protocol", "false", "fixed 12/4/4-month boundaries"},
      {"data.train_ratio", "0.7", "ratio split when ett_protocol is false"},
      {"data.val_ratio", "0.1", ""},
      {"data.test_ratio", "0.2", ""},
      {"data.lookback_overlap", "true", "val/test segments reach L points back"},
      {"data.date_column", "date", "timestamp column name"},
      {"data.columns", "", "comma list of value columns; empty = all"},

      {"target.name", "", "zero-shot target dataset"},
      {"target.path", "", ""},
      {"target.frequency", "1h", ""},
      {"target.ett_protocol", "false", ""},
      {"target.train_ratio", "0.7", ""},
      {"target.val_ratio", "0.1", ""},
      {"target.test_ratio", "0.2", ""},
      {"target.lookback_overlap", "true", ""},
      {"target.date_column", "date", ""},
      {"target.columns", "", ""},

      {"model.seq_len", "96", "input length L"},
      {"model.patch_len", "16", "P"},
      {"model.stride", "8", "S"},
      {"model.pad", "-1", "tail replication pad; -1 = stride"},
      {"model.n_layers", "6", "transformer blocks N"},
      {"model.d_model", "64", ""},
      {"model.n_heads", "4", ""},
      {"model.d_ff", "256", ""},
      {"model.max_patches", "128", "positional table rows"},
      {"model.causal", "true", "causal self-attention"},
      {"model.dropout", "0.1", ""},
      {"model.use_bias", "true", "biases in linear layers"},
      {"model.mixer_hidden", "0", "mixer hidden width; 0 = d_model"},
      {"model.fusion", "mixer", "mixer | add | cross | none"},
      {"model.selection", "boundary", "boundary | half_average | local_only | global_only"},
      {"model.local_tap", "1", "tap feeding the local branch (0..N)"},
      {"model.freeze", "ln_pe", "ln_pe | ln | pe | full | none"},
      {"model.ln_scope", "all", "all | final_only"},
      {"model.revin_eps", "1e-5", ""},
      {"model.ln_eps", "1e-5", ""},
      {"model.init_std", "0.02", ""},

      {"train.horizons", "96,192,336,720", "prediction lengths T"},
      {"train.epochs", "10", ""},
      {"train.max_steps", "0", "optimizer step cap; 0 = none"},
      {"train.batch_size", "32", ""},
      {"train.eval_batch_size", "256", ""},
      {"train.lr", "1e-4", ""},
      {"train.beta1", "0.9", ""},
      {"train.beta2", "0.999", ""},
      {"train.adam_eps", "1e-8", ""},
      {"train.patience", "3", "early-stopping patience in epochs"},
      {"train.seed", "2024", ""},
      {"train.loss_scale", "denormalized", "denormalized | normalized"},
      {"train.metric_scale", "denormalized", "denormalized | normalized"},
      {"train.few_shot_fraction", "0.05", ""},

      {"ablate.axis", "freeze_policy",
       "freeze_policy | fusion_variant | layer_selection | n_layers | local_tap | seq_len"},
      {"ablate.values", "", "comma list; empty = the axis' standard set"},
      {"ablate.protocol", "few_shot", "long_term | few_shot"},

      {"probe.window", "0", "index into the test windows"},
      {"probe.channel", "0", ""},

      {"gradcheck.h", "1e-4", ""},
      {"gradcheck.tolerance", "1e-4", ""},
  };
  return table;
}

class Config {
 public:
  Config() {
    for (const auto& k : config_table()) values_.emplace(k.key, k.default_value);
  }

  // INI-style: "[section]" headers, "key = value" lines, '#' or ';' comments.
  static Config from_text(std::string_view text, const std::string& source = "<config>") {
    Config c;
    std::istringstream in{std::string(text)};
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto s = trim(line);
      if (s.empty() || s.front() == '#' || s.front() == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError(source + ":" + std::to_string(lineno) + ": bad section header");
        section = std::string(trim(s.substr(1, s.size() - 2)));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
      }
      auto key = std::string(trim(s.substr(0, eq)));
      auto value = std::string(unquote(trim(s.substr(eq + 1))));
      if (!section.empty()) key = section + "." + key;
      if (!c.values_.contains(key)) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
      c.values_[key] = value;
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path);
  }

  // Applies "section.key=value".
  void apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    }
    set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
  }

  void set(const std::string& key, std::string value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = std::move(value);
  }

  bool contains(const std::string& key) const { return values_.contains(key); }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  long long integer(const std::string& key) const {
    const auto& s = str(key);
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
    return v;
  }

  std::size_t count(const std::string& key) const {
    const auto v = integer(key);
    if (v < 0) throw ConfigError(key + ": expected a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
    return v;
  }

  bool boolean(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + s + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::string_view s = str(key);
    while (!s.empty()) {
      const auto comma = s.find(',');
      auto item = trim(s.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return out;
  }

  // Deterministic dump in the same INI syntax; parses back to an equal Config.
  std::string to_text() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, value] : values_) {
      const auto dot = key.find('.');
      const auto sec = key.substr(0, dot);
      if (sec != section) {
        if (!section.empty()) os << '\n';
        os << '[' << sec << "]\n";
        section = sec;
      }
      os << key.substr(dot + 1) << " = " << value << '\n';
    }
    return os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }
  friend bool operator==(const Config&, const Config&) = default;

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }
  static std::string_view unquote(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace tapcast

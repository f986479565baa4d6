#pragma once

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/train/metrics.hpp"
#include "tapcast/train/protocol.hpp"

namespace tapcast::train {

// Shortest round-trip decimal form, so equal doubles always print identically.
inline std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string metrics_csv(const std::vector<RunReport>& reports, bool with_timing) {
  std::ostringstream os;
  os << "dataset,protocol,horizon,mse,mae,params_total,params_trainable,seconds\n";
  for (const auto& r : reports) {
    const std::string ds = r.protocol == "zero_shot" ? r.dataset + "->" + r.target_dataset : r.dataset;
    os << ds << ',' << r.protocol << ',' << r.horizon << ',' << fmt(r.test.mse) << ','
       << fmt(r.test.mae) << ',' << r.params_total << ',' << r.params_trainable << ','
       << (with_timing ? fmt(r.seconds) : std::string("-")) << '\n';
  }
  if (reports.size() > 1) {
    const auto m = summarize(reports);
    const auto& r = reports.front();
    const std::string ds = r.protocol == "zero_shot" ? r.dataset + "->" + r.target_dataset : r.dataset;
    double secs = 0.0;
    for (const auto& x : reports) secs += x.seconds;
    os << ds << ',' << r.protocol << ",avg," << fmt(m.avg_mse) << ',' << fmt(m.avg_mae) << ",-,-,"
       << (with_timing ? fmt(secs) : std::string("-")) << '\n';
  }
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

inline std::string report_text(const std::vector<RunReport>& reports,
                               const std::vector<std::string>& artifacts = {}) {
  std::ostringstream os;
  os << "# run report\n\n";
  if (!reports.empty()) {
    os << "[config]\n" << reports.front().config_snapshot << '\n';
  }
  for (const auto& r : reports) {
    os << "[run horizon=" << r.horizon << "]\n";
    os << "dataset = " << r.dataset << '\n';
    os << "test_dataset = " << r.target_dataset << '\n';
    os << "protocol = " << r.protocol << '\n';
    os << "windows = train " << r.train_windows << ", val " << r.val_windows << ", test "
       << r.test_windows << '\n';
    os << "test_mse = " << fmt(r.test.mse) << '\n';
    os << "test_mae = " << fmt(r.test.mae) << '\n';
    os << "persistence_mse = " << fmt(r.persistence.mse) << '\n';
    os << "persistence_mae = " << fmt(r.persistence.mae) << '\n';
    os << "params_total = " << r.params_total << '\n';
    os << "params_trainable = " << r.params_trainable << '\n';
    os << "pretrained_params = " << r.pretrained_total << " (trainable " << r.pretrained_trainable
       << ")\n";
    os << "steps = " << r.training.steps << '\n';
    os << "best_epoch = " << r.training.best_epoch << '\n';
    os << "best_val_mse = " << fmt(r.training.best_val_mse) << '\n';
    os << "early_stopped = " << (r.training.early_stopped ? "true" : "false") << '\n';
    os << "train_loss_curve =";
    for (double v : r.training.epoch_train_loss) os << ' ' << fmt(v);
    os << "\nval_mse_curve =";
    for (double v : r.training.epoch_val_mse) os << ' ' << fmt(v);
    os << "\nseconds = " << fmt(r.seconds) << "\n\n";
  }
  if (reports.size() > 1) {
    const auto m = summarize(reports);
    os << "[average]\nmse = " << fmt(m.avg_mse) << "\nmae = " << fmt(m.avg_mae) << "\n\n";
  }
  if (!artifacts.empty()) {
    os << "[artifacts]\n";
    for (const auto& a : artifacts) os << a << '\n';
  }
  return os.str();
}

}  // namespace tapcast::train

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "tapcast/data/synth.hpp"
#include "tapcast/model.hpp"
#include "tapcast/numerics/tensor.hpp"
#include "tapcast/train/experiment.hpp"

namespace tapcast::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

inline double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? d : d / s;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tapcast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A small model that trains in well under a second per step.
inline ModelConfig tiny_model(std::size_t horizon = 8) {
  ModelConfig c;
  c.seq_len = 48;
  c.horizon = horizon;
  c.backbone.n_layers = 2;
  c.backbone.d_model = 16;
  c.backbone.n_heads = 2;
  c.backbone.d_ff = 32;
  c.backbone.max_patches = 16;
  return c;
}

inline data::SeriesDataset synth(data::SynthKind kind, std::size_t length, std::size_t channels,
                                 std::uint64_t seed = 1, double noise = 0.05) {
  data::SynthSpec s;
  s.kind = kind;
  s.length = length;
  s.channels = channels;
  s.seed = seed;
  s.noise = noise;
  return data::synth_generate(s);
}

inline train::ExperimentConfig tiny_experiment(std::size_t horizon = 8) {
  train::ExperimentConfig e;
  e.model = tiny_model(horizon);
  e.horizons = {horizon};
  e.train.epochs = 2;
  e.train.max_steps = 12;
  e.train.batch_size = 8;
  e.train.eval_batch_size = 64;
  e.train.adam.lr = 1e-3;
  e.data.name = "synthetic";
  return e;
}

}  // namespace tapcast::testing

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/tensor.hpp"

namespace tapcast::mixers {

struct SimilarityMatrix {
  Tensor<double> values;               // [N_p × N_p]
  std::vector<std::size_t> zero_rows;  // patches whose hidden vector is all zeros
};

// Pairwise cosine similarity between the patch vectors of one tap ([N_p × d]
// or [1 × N_p × d]). Zero rows get similarity 0 to everything and 1 on the diagonal.
template <typename T>
SimilarityMatrix cosine_similarity(const Tensor<T>& tap) {
  if (tap.rank() == 3 && tap.dim(0) != 1) {
    throw DimensionError("similarity: expected a single window, got " + shape_string(tap.shape()));
  }
  if (tap.rank() != 2 && tap.rank() != 3) throw DimensionError("similarity: bad tap rank");
  const std::size_t d = tap.cols(), np = tap.rows();
  std::vector<double> norms(np);
  SimilarityMatrix out{Tensor<double>({np, np}), {}};
  for (std::size_t i = 0; i < np; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += static_cast<double>(tap[i * d + c]) * tap[i * d + c];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) out.zero_rows.push_back(i);
  }
  for (std::size_t i = 0; i < np; ++i) {
    out.values.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < np; ++j) {
      double v = 0.0;
      if (norms[i] > 0.0 && norms[j] > 0.0) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(tap[i * d + c]) * tap[j * d + c];
        v = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      }
      out.values.at(i, j) = v;
      out.values.at(j, i) = v;
    }
  }
  return out;
}

template <typename T>
std::vector<SimilarityMatrix> similarity_matrices(const std::vector<Tensor<T>>& taps) {
  std::vector<SimilarityMatrix> out;
  out.reserve(taps.size());
  for (const auto& t : taps) out.push_back(cosine_similarity(t));
  return out;
}

inline std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Header "p0,...,p{N_p-1}" then one row per patch.
inline void write_similarity_csv(const SimilarityMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::size_t np = m.values.dim(0);
  for (std::size_t j = 0; j < np; ++j) out << (j ? "," : "") << 'p' << j;
  out << '\n';
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < np; ++j) out << (j ? "," : "") << format_real(m.values.at(i, j));
    out << '\n';
  }
}

}  // namespace tapcast::mixers

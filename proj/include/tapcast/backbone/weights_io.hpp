#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/param_set.hpp"

// Weight file layout (all integers and floats little-endian):
//   "LOGOW"  u16 version  u32 count
//   count × { u32 name_len, name bytes (UTF-8), u32 rank, rank × u32 dim, u8 trainable }
//   then every tensor's data as f64 in manifest order.
namespace tapcast::backbone {

inline constexpr char kWeightsMagic[5] = {'L', 'O', 'G', 'O', 'W'};
inline constexpr std::uint16_t kWeightsVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double d) { le(std::bit_cast<std::uint64_t>(d)); }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> buf, std::string source)
      : buf_(std::move(buf)), source_(std::move(source)) {}

  const unsigned char* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError(source_ + ": truncated weight file");
    const auto* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U le() {
    const auto* p = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  bool at_end() const { return pos_ == buf_.size(); }
  const std::string& source() const { return source_; }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace detail

template <typename T>
std::vector<unsigned char> serialize_weights(const ParamSet<T>& params) {
  detail::ByteWriter w;
  w.bytes(kWeightsMagic, sizeof kWeightsMagic);
  w.le<std::uint16_t>(kWeightsVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.le<std::uint8_t>(e.trainable ? 1 : 0);
  }
  for (const auto& e : params)
    for (T v : e.tensor.data()) w.f64(static_cast<double>(v));
  return w.data();
}

template <typename T>
ParamSet<T> deserialize_weights(std::vector<unsigned char> bytes, const std::string& source) {
  detail::ByteReader r(std::move(bytes), source);
  if (std::memcmp(r.take(sizeof kWeightsMagic), kWeightsMagic, sizeof kWeightsMagic) != 0) {
    throw FormatError(source + ": bad magic, not a weight file");
  }
  if (auto v = r.le<std::uint16_t>(); v != kWeightsVersion) {
    throw FormatError(source + ": unsupported weight file version " + std::to_string(v));
  }
  struct Manifest {
    std::string name;
    Shape shape;
    bool trainable;
  };
  const auto count = r.le<std::uint32_t>();
  std::vector<Manifest> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Manifest m;
    const auto len = r.le<std::uint32_t>();
    const auto* p = r.take(len);
    m.name.assign(reinterpret_cast<const char*>(p), len);
    const auto rank = r.le<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError(source + ": bad rank for '" + m.name + "'");
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.le<std::uint32_t>();
      if (d == 0) throw FormatError(source + ": zero dimension in '" + m.name + "'");
      m.shape.push_back(d);
    }
    const auto flag = r.le<std::uint8_t>();
    if (flag > 1) throw FormatError(source + ": bad trainable flag for '" + m.name + "'");
    m.trainable = flag == 1;
    manifest.push_back(std::move(m));
  }
  ParamSet<T> params;
  for (auto& m : manifest) {
    Tensor<T> t(m.shape);
    for (auto& v : t.data()) v = static_cast<T>(r.f64());
    try {
      params.add(m.name, std::move(t), m.trainable);
    } catch (const StateError&) {
      throw FormatError(source + ": duplicate tensor '" + m.name + "'");
    }
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after tensor data");
  return params;
}

template <typename T>
void save_weights(const ParamSet<T>& params, const std::string& path) {
  const auto bytes = serialize_weights(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write weight file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing weight file '" + path + "'");
}

template <typename T = double>
ParamSet<T> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weight file '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_weights<T>(std::move(bytes), path);
}

// Loads a file and checks it against the layout `expected` was built with:
// same names, same shapes. Unknown and missing tensors are listed by name.
template <typename T>
ParamSet<T> load_weights(const std::string& path, const ParamSet<T>& expected) {
  ParamSet<T> loaded = load_weights<T>(path);
  std::vector<std::string> unknown, missing, mismatched;
  for (const auto& e : loaded) {
    if (!expected.contains(e.name)) unknown.push_back(e.name);
    else if (expected.at(e.name).shape() != e.tensor.shape()) mismatched.push_back(e.name);
  }
  for (const auto& e : expected)
    if (!loaded.contains(e.name)) missing.push_back(e.name);
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  if (!unknown.empty()) throw FormatError(path + ": unknown tensors: " + join(unknown));
  if (!missing.empty()) throw FormatError(path + ": missing tensors: " + join(missing));
  if (!mismatched.empty()) throw FormatError(path + ": shape mismatch for: " + join(mismatched));
  // Re-emit in the expected order so downstream layouts line up.
  ParamSet<T> ordered;
  for (const auto& e : expected) {
    const auto& src = loaded.entry(e.name);
    ordered.add(e.name, src.tensor, src.trainable);
  }
  return ordered;
}

}  // namespace tapcast::backbone

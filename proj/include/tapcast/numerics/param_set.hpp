#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tapcast/error.hpp"
#include "tapcast/numerics/tensor.hpp"

namespace tapcast {

// Named parameters in insertion order, each with a trainable flag.
// Non-trainable entries are never given a gradient slot by the tape.
template <typename T = double>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;
  };

  Tensor<T>& add(std::string name, Tensor<T> tensor, bool trainable = true) {
    if (index_.contains(name)) throw StateError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(tensor), trainable});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Entry& entry(const std::string& name) { return entries_[lookup(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[lookup(name)]; }

  Tensor<T>& at(const std::string& name) { return entry(name).tensor; }
  const Tensor<T>& at(const std::string& name) const { return entry(name).tensor; }

  bool trainable(const std::string& name) const { return entry(name).trainable; }
  void set_trainable(const std::string& name, bool on) {
    auto& e = entry(name);
    e.trainable = on;
    if (!on) e.tensor.clear_grad();
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  std::size_t trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.tensor.size();
    return n;
  }

  void clear_grads() {
    for (auto& e : entries_) e.tensor.clear_grad();
  }

  // Copies values (not gradients or flags) from another set with identical layout.
  void assign_values(const ParamSet& other) {
    if (other.size() != size()) throw StateError("parameter layouts differ");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name ||
          entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) {
        throw StateError("parameter layouts differ at '" + entries_[i].name + "'");
      }
      auto src = other.entries_[i].tensor.data();
      auto dst = entries_[i].tensor.data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& e : entries_) {
      h ^= byte_hash(e.tensor);
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw StateError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace tapcast

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "remtkd/tensor.hpp"

namespace remtkd {

struct ParamEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Named parameter tensors packed into one flat buffer. The flat layout is what
// the optimizer, the checksum/hash and the checkpoint writer operate on.
template <class T>
class ParamStore {
 public:
  std::size_t add(const std::string& name, const Shape& shape) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    ParamEntry e{name, shape, values_.size(), shape_numel(shape)};
    values_.resize(values_.size() + e.size, T(0));
    index_.emplace(name, entries_.size());
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t num_tensors() const { return entries_.size(); }
  std::size_t num_values() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::span<T> view(std::size_t i) { return {values_.data() + entries_[i].offset, entries_[i].size}; }
  std::span<const T> view(std::size_t i) const {
    return {values_.data() + entries_[i].offset, entries_[i].size};
  }
  std::span<T> view(const std::string& name) { return view(index_of(name)); }
  std::span<const T> view(const std::string& name) const { return view(index_of(name)); }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.shape);
    auto dst = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = static_cast<U>(values_[i]);
    return out;
  }

  bool operator==(const ParamStore& o) const {
    if (entries_.size() != o.entries_.size() || values_ != o.values_) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name != o.entries_[i].name || entries_[i].shape != o.entries_[i].shape)
        return false;
    return true;
  }

 private:
  std::vector<ParamEntry> entries_;
  std::vector<T> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Content hash over names, shapes and raw value bytes (FNV-1a 64).
template <class T>
std::uint64_t param_hash(const ParamStore<T>& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : p.entries()) {
    mix(e.name.data(), e.name.size());
    mix(e.shape.data(), e.shape.size() * sizeof(int));
  }
  mix(p.values().data(), p.values().size() * sizeof(T));
  return h;
}

}  // namespace remtkd

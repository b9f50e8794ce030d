#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "th/errors.hpp"

namespace th {

/// Dense model index of an interned 64-bit key.
struct SymbolId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(SymbolId, SymbolId) = default;
};

/// Maps sparse 64-bit keys (message ids, tagged trap numbers) onto dense
/// indices in first-seen order. Single writer; lookups are const.
class SymbolRegistry {
 public:
  static constexpr std::size_t kDefaultCapacity = 65536;

  explicit SymbolRegistry(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {}

  SymbolId intern(std::uint64_t key) {
    if (auto it = index_.find(key); it != index_.end()) return SymbolId{it->second};
    if (keys_.size() >= capacity_)
      throw CapacityError("symbol registry full (" + std::to_string(capacity_) + " symbols)");
    const auto id = static_cast<std::uint32_t>(keys_.size());
    keys_.push_back(key);
    index_.emplace(key, id);
    return SymbolId{id};
  }

  /// Index of `key` if it was interned, without interning it.
  const std::uint32_t* find(std::uint64_t key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &it->second;
  }

  std::uint64_t key(SymbolId id) const { return keys_.at(id.value); }

  std::size_t size() const noexcept { return keys_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::vector<std::uint64_t>& keys() const noexcept { return keys_; }

  friend bool operator==(const SymbolRegistry& a, const SymbolRegistry& b) {
    return a.keys_ == b.keys_;
  }

 private:
  std::size_t capacity_;
  std::vector<std::uint64_t> keys_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

}  // namespace th

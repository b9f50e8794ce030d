#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "th/errors.hpp"
#include "th/sequence_window.hpp"
#include "th/symbol_registry.hpp"

namespace th {

inline constexpr std::size_t kMaxWindowSize = 32;

/// A (current, previous, distance) observation.
struct PairTriple {
  SymbolId current;
  SymbolId previous;
  std::uint32_t distance = 0;
  friend constexpr auto operator<=>(const PairTriple&, const PairTriple&) = default;
};

struct Mismatch {
  std::uint32_t distance = 0;
  SymbolId previous;
  friend constexpr bool operator==(const Mismatch&, const Mismatch&) = default;
};

struct MismatchReport {
  std::uint64_t position = 0;
  SymbolId current;
  std::vector<Mismatch> mismatches;

  std::size_t mismatch_count() const noexcept { return mismatches.size(); }
};

/// Lookahead-pairs table: cell [current][previous] is a bitmask whose bit
/// (d-1) is set once `previous` has been seen d positions before `current`.
///
/// Symbols get a table-local slot on first training use so that a table
/// only pays for the symbols its own thread uses, while lookups stay O(1).
class LookaheadTable {
 public:
  using Mask = std::uint32_t;

  explicit LookaheadTable(std::size_t symbol_capacity = SymbolRegistry::kDefaultCapacity)
      : symbol_capacity_(symbol_capacity) {}

  /// Records every (current, predecessor, distance) pair in `w`.
  /// Returns true iff at least one bit went from 0 to 1.
  bool train(const SequenceWindow& w) {
    if (w.empty()) return false;
    const auto cur = slot_for(w.current());
    const auto n = std::min(w.predecessors(), kMaxWindowSize);
    bool modified = false;
    for (std::size_t d = 1; d <= n; ++d) {
      const auto prev = slot_for(w.at_distance(d));
      auto& row = rows_[cur];
      if (row.size() <= prev) row.resize(symbols_.size(), 0);
      const Mask bit = Mask{1} << (d - 1);
      if ((row[prev] & bit) == 0) {
        row[prev] |= bit;
        ++set_bits_;
        modified = true;
      }
    }
    return modified;
  }

  /// Checks every predecessor of the current symbol against the table.
  MismatchReport detect(const SequenceWindow& w, std::uint64_t position = 0) const {
    MismatchReport r;
    r.position = position;
    if (w.empty()) return r;
    r.current = w.current();
    const auto n = std::min(w.predecessors(), kMaxWindowSize);
    for (std::size_t d = 1; d <= n; ++d) {
      const SymbolId prev = w.at_distance(d);
      if (!test(r.current, prev, static_cast<std::uint32_t>(d)))
        r.mismatches.push_back({static_cast<std::uint32_t>(d), prev});
    }
    return r;
  }

  bool test(SymbolId current, SymbolId previous, std::uint32_t distance) const noexcept {
    if (distance == 0 || distance > kMaxWindowSize) return false;
    const auto cur = find_slot(current);
    const auto prev = find_slot(previous);
    if (cur == kNoSlot || prev == kNoSlot) return false;
    const auto& row = rows_[cur];
    return prev < row.size() && (row[prev] & (Mask{1} << (distance - 1))) != 0;
  }

  /// Sets the whole mask of one cell (bits are OR-ed in).
  void set_mask(SymbolId current, SymbolId previous, Mask mask) {
    if (mask == 0) return;
    const auto cur = slot_for(current);
    const auto prev = slot_for(previous);
    auto& row = rows_[cur];
    if (row.size() <= prev) row.resize(symbols_.size(), 0);
    set_bits_ += static_cast<std::size_t>(std::popcount(mask & ~row[prev]));
    row[prev] |= mask;
  }

  Mask mask(SymbolId current, SymbolId previous) const noexcept {
    const auto cur = find_slot(current);
    const auto prev = find_slot(previous);
    if (cur == kNoSlot || prev == kNoSlot || prev >= rows_[cur].size()) return 0;
    return rows_[cur][prev];
  }

  /// Non-zero cells as (current, previous, mask), sorted by symbol ids.
  std::vector<std::tuple<SymbolId, SymbolId, Mask>> cells() const {
    std::vector<std::tuple<SymbolId, SymbolId, Mask>> out;
    for (std::size_t c = 0; c < rows_.size(); ++c)
      for (std::size_t p = 0; p < rows_[c].size(); ++p)
        if (rows_[c][p] != 0) out.emplace_back(symbols_[c], symbols_[p], rows_[c][p]);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Every set bit as a triple, sorted.
  std::vector<PairTriple> triples() const {
    std::vector<PairTriple> out;
    out.reserve(set_bits_);
    for (const auto& [cur, prev, m] : cells())
      for (std::uint32_t d = 1; d <= kMaxWindowSize; ++d)
        if (m & (Mask{1} << (d - 1))) out.push_back({cur, prev, d});
    return out;
  }

  std::size_t set_bits() const noexcept { return set_bits_; }
  std::size_t symbol_count() const noexcept { return symbols_.size(); }
  std::size_t symbol_capacity() const noexcept { return symbol_capacity_; }
  bool empty() const noexcept { return set_bits_ == 0; }

  void reset() {
    slot_of_.clear();
    symbols_.clear();
    rows_.clear();
    set_bits_ = 0;
  }

  friend bool operator==(const LookaheadTable& a, const LookaheadTable& b) {
    return a.set_bits_ == b.set_bits_ && a.cells() == b.cells();
  }

 private:
  static constexpr std::uint32_t kNoSlot = std::numeric_limits<std::uint32_t>::max();

  std::uint32_t find_slot(SymbolId s) const noexcept {
    return s.value < slot_of_.size() ? slot_of_[s.value] : kNoSlot;
  }

  std::uint32_t slot_for(SymbolId s) {
    if (s.value >= symbol_capacity_)
      throw CapacityError("symbol index " + std::to_string(s.value) + " exceeds capacity " +
                          std::to_string(symbol_capacity_));
    if (s.value >= slot_of_.size()) slot_of_.resize(s.value + 1, kNoSlot);
    auto& slot = slot_of_[s.value];
    if (slot == kNoSlot) {
      slot = static_cast<std::uint32_t>(symbols_.size());
      symbols_.push_back(s);
      rows_.emplace_back();
    }
    return slot;
  }

  std::size_t symbol_capacity_;
  std::vector<std::uint32_t> slot_of_;
  std::vector<SymbolId> symbols_;
  std::vector<std::vector<Mask>> rows_;
  std::size_t set_bits_ = 0;
};

}  // namespace th

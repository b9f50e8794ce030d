#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "th/symbol_registry.hpp"

namespace th {

/// Ring buffer holding the current symbol and up to `window_size`
/// predecessors. Eviction is FIFO.
class SequenceWindow {
 public:
  explicit SequenceWindow(std::size_t window_size = 8)
      : window_size_(window_size), buf_(window_size + 1) {}

  void push(SymbolId s) noexcept {
    head_ = (head_ + 1) % buf_.size();
    buf_[head_] = s;
    if (fill_ < buf_.size()) ++fill_;
  }

  void clear() noexcept { fill_ = 0; }

  /// Newest element. Requires !empty().
  SymbolId current() const noexcept {
    assert(fill_ > 0);
    return buf_[head_];
  }

  /// Symbol `distance` positions before the current one, 1 <= distance <= predecessors().
  SymbolId at_distance(std::size_t distance) const noexcept {
    assert(distance < fill_);
    return buf_[(head_ + buf_.size() - distance) % buf_.size()];
  }

  std::size_t predecessors() const noexcept { return fill_ == 0 ? 0 : fill_ - 1; }
  std::size_t fill() const noexcept { return fill_; }
  std::size_t capacity() const noexcept { return buf_.size(); }
  std::size_t window_size() const noexcept { return window_size_; }
  bool empty() const noexcept { return fill_ == 0; }

  /// Contents oldest-first.
  std::vector<SymbolId> contents() const {
    std::vector<SymbolId> out;
    out.reserve(fill_);
    for (std::size_t d = fill_; d-- > 0;) out.push_back(d == 0 ? current() : at_distance(d));
    return out;
  }

 private:
  std::size_t window_size_;
  std::vector<SymbolId> buf_;
  std::size_t head_ = 0;
  std::size_t fill_ = 0;
};

}  // namespace th

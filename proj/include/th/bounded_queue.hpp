#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>

namespace th {

/// Multi-producer/multi-consumer FIFO with a fixed capacity.
///
/// push() blocks while full and never drops; each push that had to wait
/// longer than the stall threshold is counted. try_push() drops instead of
/// waiting and counts the drop.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity,
                        std::chrono::milliseconds stall_threshold = std::chrono::milliseconds(100))
      : capacity_(capacity == 0 ? 1 : capacity), stall_threshold_(stall_threshold) {}

  /// Returns false if the queue was closed.
  bool push(T value) {
    std::unique_lock lock(mu_);
    if (items_.size() >= capacity_ && !closed_) {
      const bool timely = not_full_.wait_for(lock, stall_threshold_, [&] {
        return items_.size() < capacity_ || closed_;
      });
      if (!timely) {
        ++stalls_;
        not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
      }
    }
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  bool try_push(T value) {
    std::lock_guard lock(mu_);
    if (closed_ || items_.size() >= capacity_) {
      ++drops_;
      return false;
    }
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  /// Blocks until an item is available; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::uint64_t stalls() const {
    std::lock_guard lock(mu_);
    return stalls_;
  }

  std::uint64_t drops() const {
    std::lock_guard lock(mu_);
    return drops_;
  }

  std::size_t capacity() const noexcept { return capacity_; }

 private:
  const std::size_t capacity_;
  const std::chrono::milliseconds stall_threshold_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  bool closed_ = false;
  std::uint64_t stalls_ = 0;
  std::uint64_t drops_ = 0;
};

}  // namespace th

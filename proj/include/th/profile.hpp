#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "th/lookahead_table.hpp"
#include "th/sequence_window.hpp"

namespace th {

/// Virtual or wall time in microseconds.
using Micros = std::int64_t;
inline constexpr Micros kMicrosPerSecond = 1'000'000;

enum class ProfileState : std::uint8_t { Thawed = 0, Frozen = 1, Normal = 2 };
enum class RuntimeMode : std::uint8_t { Learning = 0, Detection = 1 };
enum class Aggregation : std::uint8_t { PerThread = 0, PerProcess = 1 };

inline std::string_view to_string(ProfileState s) {
  switch (s) {
    case ProfileState::Thawed: return "THAWED";
    case ProfileState::Frozen: return "FROZEN";
    case ProfileState::Normal: return "NORMAL";
  }
  return "?";
}

struct LifecycleConfig {
  std::size_t window_size = 8;
  std::uint64_t freeze_factor = 4;
  std::uint64_t min_train_count = 128;
  Micros normal_wait = 180 * kMicrosPerSecond;
  std::size_t symbol_capacity = SymbolRegistry::kDefaultCapacity;
};

struct ThreadIdentity {
  std::uint16_t process = 0;
  std::uint16_t thread = 0;  // 0 for a shared per-process profile
  std::uint8_t node = 0;
  friend constexpr auto operator<=>(const ThreadIdentity&, const ThreadIdentity&) = default;
};

/// Training and testing state of one monitored thread.
struct ThreadProfile {
  ThreadProfile() = default;
  ThreadProfile(ThreadIdentity identity, const LifecycleConfig& cfg)
      : id(identity),
        window_size(cfg.window_size),
        train_table(cfg.symbol_capacity),
        test_table(cfg.symbol_capacity),
        window(cfg.window_size) {}

  ThreadIdentity id;
  ProfileState state = ProfileState::Thawed;
  // Created for a thread that was unknown while detecting; every event it
  // emits is reported as an UNKNOWN_THREAD anomaly and counted here.
  bool quarantined = false;
  std::size_t window_size = 8;

  LookaheadTable train_table;
  LookaheadTable test_table;
  SequenceWindow window;

  std::uint64_t train_count = 0;
  std::uint64_t last_mod_count = 0;
  std::uint64_t normal_count = 0;
  std::uint64_t anomalies = 0;
  std::uint64_t sequences = 0;
  std::uint64_t test_count = 0;

  bool started = false;
  Micros created_at = 0;
  Micros frozen_since = 0;
  Micros last_seen = 0;
  Micros time_to_normal = 0;

  /// Shifts the profile's timestamps so that `last_seen` becomes `now`.
  /// Used when a saved profile resumes under a new clock origin.
  void rebase(Micros now) {
    if (!started) return;
    const Micros delta = now - last_seen;
    created_at += delta;
    frozen_since += delta;
    last_seen = now;
  }
};

/// THAWED -> FROZEN once at least 1/freeze_factor of all training events
/// arrived since the model last changed.
inline ProfileState check_freeze(ThreadProfile& p, const LifecycleConfig& cfg, Micros now) {
  if (p.state == ProfileState::Thawed && p.last_mod_count > 0 &&
      p.train_count >= cfg.min_train_count &&
      p.last_mod_count * cfg.freeze_factor >= p.train_count) {
    p.state = ProfileState::Frozen;
    p.frozen_since = now;
  }
  return p.state;
}

/// FROZEN -> NORMAL after staying frozen for normal_wait. The testing table
/// becomes a copy of the training table.
inline ProfileState check_normalize(ThreadProfile& p, const LifecycleConfig& cfg, Micros now) {
  if (p.state == ProfileState::Frozen && now - p.frozen_since >= cfg.normal_wait) {
    p.test_table = p.train_table;
    p.state = ProfileState::Normal;
    p.normal_count = p.train_count;
    p.time_to_normal = now - p.created_at;
  }
  return p.state;
}

/// Feeds one symbol to a profile. Returns the mismatch report when the
/// event is an anomaly (NORMAL profile, detection mode, any mismatch).
inline std::optional<MismatchReport> ingest_event(ThreadProfile& p, SymbolId s, Micros now,
                                                  RuntimeMode mode, const LifecycleConfig& cfg,
                                                  std::uint64_t position = 0) {
  if (!p.started) {
    p.started = true;
    p.created_at = now;
  }
  p.last_seen = now;
  p.window.push(s);

  if (p.state != ProfileState::Normal) {
    const bool modified = p.train_table.train(p.window);
    ++p.train_count;
    if (modified) {
      p.last_mod_count = 0;
      ++p.sequences;
      p.state = ProfileState::Thawed;
    } else {
      ++p.last_mod_count;
    }
    check_freeze(p, cfg, now);
    check_normalize(p, cfg, now);
    return std::nullopt;
  }

  ++p.test_count;
  auto report = p.test_table.detect(p.window, position);
  if (report.mismatch_count() == 0) return std::nullopt;
  if (mode == RuntimeMode::Learning) {
    p.test_table.train(p.window);
    return std::nullopt;
  }
  ++p.anomalies;
  return report;
}

/// Profiles of one executable. In PER_PROCESS mode a single shared profile
/// is bound to every thread index.
struct ProcessProfile {
  std::string path;
  Aggregation aggregation = Aggregation::PerThread;
  std::deque<ThreadProfile> profiles;
  std::map<std::uint16_t, std::size_t> by_thread;

  ThreadProfile* find(std::uint16_t tid) {
    auto it = by_thread.find(tid);
    return it == by_thread.end() ? nullptr : &profiles[it->second];
  }

  const ThreadProfile* find(std::uint16_t tid) const {
    auto it = by_thread.find(tid);
    return it == by_thread.end() ? nullptr : &profiles[it->second];
  }

  /// Returns the profile for `id.thread`, creating it if needed.
  /// References stay valid as profiles are added.
  ThreadProfile& bind(ThreadIdentity id, const LifecycleConfig& cfg) {
    const auto tid = id.thread;
    if (auto* p = find(tid)) return *p;
    if (aggregation == Aggregation::PerProcess) {
      if (profiles.empty()) {
        id.thread = 0;
        profiles.emplace_back(id, cfg);
      }
      by_thread.emplace(tid, 0);
      return profiles.front();
    }
    profiles.emplace_back(id, cfg);
    by_thread.emplace(tid, profiles.size() - 1);
    return profiles.back();
  }
};

}  // namespace th

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "th/archive.hpp"
#include "th/bounded_queue.hpp"
#include "th/config.hpp"
#include "th/errors.hpp"
#include "th/profile.hpp"
#include "th/profile_store.hpp"
#include "th/status.hpp"
#include "th/trace_event.hpp"
#include "th/trace_io.hpp"

namespace th {

enum class AnomalyKind : std::uint8_t { Sequence, UnknownThread };

inline std::string_view to_string(AnomalyKind k) {
  return k == AnomalyKind::Sequence ? "SEQUENCE" : "UNKNOWN_THREAD";
}

struct AnomalyRecord {
  std::uint64_t offset = 0;  // byte offset of the record in the trace
  ThreadIdentity thread;
  SymbolId symbol;
  std::uint64_t symbol_key = 0;
  std::vector<Mismatch> mismatches;
  AnomalyKind kind = AnomalyKind::Sequence;
  Micros timestamp = 0;
};

/// `ts<TAB>pid<TAB>tid<TAB>symbol_key_hex<TAB>mismatches<TAB>kind`
inline std::string format_anomaly(const AnomalyRecord& a) {
  return std::to_string(a.timestamp) + '\t' + std::to_string(a.thread.process) + '\t' +
         std::to_string(a.thread.thread) + '\t' + hex64(a.symbol_key) + '\t' +
         std::to_string(a.mismatches.size()) + '\t' + std::string(to_string(a.kind));
}

struct IngestStats {
  std::uint64_t records = 0;        // every framed record
  std::uint64_t events = 0;         // records ingested into a profile
  std::uint64_t skipped = 0;        // unknown event class
  std::uint64_t other_class = 0;    // known class the detector is not consuming
  std::uint64_t filtered = 0;       // unmonitored process
  std::uint64_t anomalies = 0;
  std::uint64_t unknown_thread_anomalies = 0;
  std::uint64_t reader_stalls = 0;  // times the reader waited on a full ingest queue
};

/// The detector: routes decoded events to per-thread profiles, trains or
/// checks them, and reports anomalies. Owns all mutable profile state and
/// is driven from a single ingestion thread.
class Detector {
 public:
  using AnomalySink = std::function<void(const AnomalyRecord&)>;

  explicit Detector(Config cfg, ProfileStore store = ProfileStore{})
      : cfg_(std::move(cfg)), store_(std::move(store)) {
    for (const auto& [path, _] : store_.processes) loaded_.push_back(path);
  }

  void set_process_table(ProcessTable table) {
    table_ = std::move(table);
    slots_ = {};
  }

  void set_anomaly_sink(AnomalySink sink) { sink_ = std::move(sink); }
  void set_mode(RuntimeMode m) { cfg_.mode = m; }

  const Config& config() const noexcept { return cfg_; }
  const ProfileStore& store() const noexcept { return store_; }
  ProfileStore& store() noexcept { return store_; }
  const IngestStats& stats() const noexcept { return stats_; }
  IngestStats& stats() noexcept { return stats_; }

  /// Ingests one decoded event observed at `now`.
  void ingest(const TraceEvent& e, Micros now, std::uint64_t offset = 0) {
    if (!run_started_) begin_run(now);
    last_time_ = now;
    ++stats_.records;
    if (e.event_class != static_cast<std::uint8_t>(cfg_.trace_class)) {
      ++stats_.other_class;
      return;
    }
    auto& slot = slot_for(e.src_process);
    if (!slot.monitored) {
      ++stats_.filtered;
      return;
    }
    ++stats_.events;

    const ThreadIdentity id{e.src_process, e.src_thread, e.src_node};
    ThreadProfile* prof = slot.proc->find(id.thread);
    if (!prof) {
      const bool process_known = !slot.proc->profiles.empty();
      prof = &slot.proc->bind(id, slot.lifecycle);
      prof->id.process = id.process;
      if (cfg_.mode == RuntimeMode::Detection &&
          !(process_known && slot.proc->aggregation == Aggregation::PerProcess))
        prof->quarantined = true;
    }
    if (prof->quarantined && cfg_.mode == RuntimeMode::Learning) prof->quarantined = false;

    const SymbolId sym = store_.registry.intern(e.symbol_key(cfg_.header_policy));
    auto report = ingest_event(*prof, sym, now, cfg_.mode, slot.lifecycle, offset);

    if (prof->quarantined) {
      ++prof->anomalies;
      ++stats_.anomalies;
      ++stats_.unknown_thread_anomalies;
      emit(AnomalyRecord{offset, id, sym, store_.registry.key(sym), {}, AnomalyKind::UnknownThread, now});
    } else if (report) {
      ++stats_.anomalies;
      emit(AnomalyRecord{offset, id, sym, store_.registry.key(sym), std::move(report->mismatches),
                         AnomalyKind::Sequence, now});
    }
    if (now - last_sweep_ >= kSweepInterval) sweep(now);
  }

  /// Decodes and ingests one raw record. Unknown event classes are counted
  /// and skipped; framing errors propagate.
  void ingest_record(std::span<const std::byte> rec, Micros now, std::uint64_t offset) {
    try {
      ingest(decode_trace_event(rec, offset), now, offset);
    } catch (const SkipRecordError&) {
      ++stats_.records;
      ++stats_.skipped;
    }
  }

  void ingest_batch(const RecordBatch& b) {
    for (std::size_t i = 0; i < b.records.size(); ++i) {
      const Micros now = b.times.empty() || cfg_.clock == ClockSource::Wall ? wall_now() : b.times[i];
      ingest_record(b.records[i], now, b.first_offset + i * kRecordSize);
    }
    if (b.trailing_bytes)
      throw FramingError("truncated record (" + std::to_string(b.trailing_bytes) + " bytes)",
                         b.first_offset + b.records.size() * kRecordSize);
  }

  /// Checks every frozen profile for normalization at `now`.
  void sweep(Micros now) {
    last_sweep_ = now;
    for (auto& [path, proc] : store_.processes) {
      const auto lc = lifecycle_for(path);
      for (auto& p : proc.profiles)
        if (p.state == ProfileState::Frozen) check_normalize(p, lc, now);
    }
  }

  /// Final sweep at the end of a stream.
  void finish() {
    if (run_started_) sweep(last_time_);
  }

  StatusSnapshot snapshot() const {
    auto s = make_snapshot(store_, [this](const std::string& path, std::uint16_t archived) {
      for (const auto& [idx, p] : table_)
        if (p == path) return idx;
      if (path.rfind("pid_", 0) == 0) return static_cast<std::uint16_t>(std::stoul(path.substr(4)));
      return archived;
    });
    s.events = stats_.events;
    s.first_time = first_time_;
    s.last_time = last_time_;
    return s;
  }

  /// Path a process index resolves to.
  std::string path_of(std::uint16_t process) const {
    if (auto it = table_.find(process); it != table_.end()) return it->second;
    return "pid_" + std::to_string(process);
  }

 private:
  static constexpr Micros kSweepInterval = 10'000;

  struct Slot {
    bool resolved = false;
    bool monitored = false;
    ProcessProfile* proc = nullptr;
    LifecycleConfig lifecycle;
  };

  static Micros wall_now() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
  }

  LifecycleConfig lifecycle_for(const std::string& path) const {
    return cfg_.lifecycle(window_for(cfg_, path));
  }

  Slot& slot_for(std::uint16_t process) {
    auto& slot = slots_[process & 0xFFF];
    if (!slot.resolved) {
      const auto path = path_of(process);
      slot.resolved = true;
      slot.monitored = is_monitored(cfg_, path);
      slot.lifecycle = lifecycle_for(path);
      if (slot.monitored) {
        slot.proc = &store_.process(path, cfg_.aggregation);
        for (auto& p : slot.proc->profiles) p.id.process = process;
      }
    }
    return slot;
  }

  // Profiles from an earlier run resume on this run's clock with an empty
  // window: the threads of a new trace start a fresh sequence.
  void begin_run(Micros now) {
    run_started_ = true;
    first_time_ = now;
    last_sweep_ = now;
    for (const auto& path : loaded_)
      for (auto& p : store_.processes.at(path).profiles) {
        p.rebase(now);
        p.window.clear();
      }
  }

  void emit(const AnomalyRecord& a) {
    if (sink_) sink_(a);
  }

  Config cfg_;
  ProfileStore store_;
  ProcessTable table_;
  std::array<Slot, 4096> slots_{};
  std::vector<std::string> loaded_;
  AnomalySink sink_;
  IngestStats stats_;
  bool run_started_ = false;
  Micros first_time_ = 0;
  Micros last_time_ = 0;
  Micros last_sweep_ = 0;
};

/// Runs a reader thread that fills a bounded queue of record batches while
/// the calling thread ingests them. The reader blocks when the queue is
/// full; nothing is dropped. Optionally offers a status snapshot to
/// `publisher` every `status_every` events.
inline void consume_stream(Detector& det, RecordReader& reader, std::size_t queue_depth = 4,
                           StatusPublisher* publisher = nullptr,
                           std::uint64_t status_every = 100'000) {
  BoundedQueue<RecordBatch> queue(queue_depth);
  std::exception_ptr reader_error;
  std::thread producer([&] {
    try {
      RecordBatch b;
      while (reader.next(b))
        if (!queue.push(std::move(b))) break;
    } catch (...) {
      reader_error = std::current_exception();
    }
    queue.close();
  });
  std::uint64_t next_status = status_every;
  try {
    while (auto b = queue.pop()) {
      det.ingest_batch(*b);
      if (publisher && det.stats().events >= next_status) {
        publisher->offer(det.snapshot());
        next_status = det.stats().events + status_every;
      }
    }
  } catch (...) {
    queue.close();
    producer.join();
    det.stats().reader_stalls += queue.stalls();
    throw;
  }
  producer.join();
  det.stats().reader_stalls += queue.stalls();
  if (reader_error) std::rethrow_exception(reader_error);
  det.finish();
}

}  // namespace th

#pragma once

#include <cstdint>
#include <functional>

#include "th/detector.hpp"
#include "th/sim/world.hpp"

namespace th::sim {

/// Feeds simulator output straight into a detector. Each event goes through
/// the 16-byte wire encoding so the detector sees exactly what a trace file
/// would carry.
class DetectorSink final : public TraceSink {
 public:
  using Observer = std::function<void(const TraceEvent&, Micros, Label, std::uint64_t offset)>;

  explicit DetectorSink(Detector& det, Observer observer = {}) : det_(det), observer_(std::move(observer)) {}

  void emit(const TraceEvent& e, Micros time, Label label) override {
    const auto rec = encode_trace_event(e);
    const auto offset = count_ * kRecordSize;
    det_.ingest_record(rec, time, offset);
    if (observer_) observer_(e, time, label, offset);
    ++count_;
  }

  std::uint64_t count() const noexcept { return count_; }

 private:
  Detector& det_;
  Observer observer_;
  std::uint64_t count_ = 0;
};

/// Runs `s` with `seed` into `det`. The detector's process table is taken
/// from the world so paths resolve before the first event.
inline SimResult run_into(Detector& det, const Scenario& s, std::uint64_t seed,
                          DetectorSink::Observer observer = {}) {
  World w(s, seed);
  det.set_process_table(w.process_table());
  DetectorSink sink(det, std::move(observer));
  auto r = w.run(sink);
  det.finish();
  return r;
}

}  // namespace th::sim

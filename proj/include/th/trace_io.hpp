#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "th/bits.hpp"
#include "th/errors.hpp"
#include "th/profile.hpp"
#include "th/trace_event.hpp"

// Trace files and their sidecars.
//
//   <trace>         flat sequence of 16-byte records, no container header
//   <trace>.clock   one little-endian u64 per record: virtual time in microseconds
//   <trace>.procs   one line per process: index<TAB>path
//   <trace>.truth   one line per fault-labelled record: byte_offset<TAB>fault_kind

namespace th {

inline std::filesystem::path sidecar(const std::filesystem::path& trace, const char* ext) {
  return std::filesystem::path(trace).concat(ext);
}

using ProcessTable = std::map<std::uint16_t, std::string>;

/// One chunk of raw records handed from the reader to ingestion.
struct RecordBatch {
  std::uint64_t first_offset = 0;  // byte offset of records[0]
  std::vector<RecordBytes> records;
  std::vector<Micros> times;         // empty when no clock is available
  std::size_t trailing_bytes = 0;    // leftover bytes of a truncated final record
};

/// Reads a record stream (file or pipe) in batches of `batch_records`.
class RecordReader {
 public:
  RecordReader(std::istream& records, std::istream* clock, std::size_t batch_records)
      : records_(records), clock_(clock), batch_(batch_records == 0 ? 1 : batch_records) {}

  /// Returns false at end of stream.
  bool next(RecordBatch& out) {
    if (done_) return false;
    out.first_offset = offset_;
    out.records.resize(batch_);
    out.times.clear();
    out.trailing_bytes = 0;
    records_.read(reinterpret_cast<char*>(out.records.data()),
                  static_cast<std::streamsize>(batch_ * kRecordSize));
    const auto got = static_cast<std::size_t>(records_.gcount());
    const auto whole = got / kRecordSize;
    out.records.resize(whole);
    out.trailing_bytes = got % kRecordSize;
    offset_ += whole * kRecordSize;
    if (got < batch_ * kRecordSize) done_ = true;
    if (clock_ && whole > 0) {
      std::vector<std::byte> raw(whole * 8);
      clock_->read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
      const auto have = static_cast<std::size_t>(clock_->gcount()) / 8;
      out.times.reserve(whole);
      for (std::size_t i = 0; i < have; ++i)
        out.times.push_back(static_cast<Micros>(
            bits::load_le64(std::span<const std::byte, 8>(raw.data() + 8 * i, 8))));
      if (have < whole) out.times.clear();  // clock shorter than trace: fall back to wall time
    }
    return whole > 0 || out.trailing_bytes > 0;
  }

 private:
  std::istream& records_;
  std::istream* clock_;
  std::size_t batch_;
  std::uint64_t offset_ = 0;
  bool done_ = false;
};

/// Writes a trace and its clock sidecar.
class TraceWriter {
 public:
  TraceWriter(std::ostream& records, std::ostream* clock) : records_(records), clock_(clock) {}

  void write(const TraceEvent& e, Micros time) {
    const auto rec = encode_trace_event(e);
    records_.write(reinterpret_cast<const char*>(rec.data()), kRecordSize);
    if (clock_) {
      std::byte b[8];
      bits::store_le64(std::span<std::byte, 8>{b}, static_cast<std::uint64_t>(time));
      clock_->write(reinterpret_cast<const char*>(b), 8);
    }
    ++count_;
  }

  std::uint64_t count() const noexcept { return count_; }

 private:
  std::ostream& records_;
  std::ostream* clock_;
  std::uint64_t count_ = 0;
};

inline void write_process_table(std::ostream& os, const ProcessTable& t) {
  for (const auto& [idx, path] : t) os << idx << '\t' << path << '\n';
}

inline ProcessTable read_process_table(std::istream& is) {
  ProcessTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("process table line " + std::to_string(lineno) + ": missing tab");
    t[static_cast<std::uint16_t>(std::stoul(line.substr(0, tab)))] = line.substr(tab + 1);
  }
  return t;
}

struct TruthLabel {
  std::uint64_t offset = 0;
  std::string kind;
  friend bool operator==(const TruthLabel&, const TruthLabel&) = default;
};

inline void write_truth(std::ostream& os, const std::vector<TruthLabel>& labels) {
  for (const auto& l : labels) os << l.offset << '\t' << l.kind << '\n';
}

inline std::vector<TruthLabel> read_truth(std::istream& is) {
  std::vector<TruthLabel> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("ground truth line without tab: " + line);
    out.push_back({std::stoull(line.substr(0, tab)), line.substr(tab + 1)});
  }
  return out;
}

/// Reads the whole clock sidecar (used by evaluation to map offsets to time).
inline std::vector<Micros> read_clock(std::istream& is) {
  std::vector<Micros> out;
  std::byte b[8];
  while (is.read(reinterpret_cast<char*>(b), 8))
    out.push_back(static_cast<Micros>(bits::load_le64(std::span<const std::byte, 8>{b})));
  return out;
}

}  // namespace th

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "th/errors.hpp"
#include "th/status.hpp"
#include "th/trace_event.hpp"
#include "th/trace_io.hpp"

namespace th {

/// One parsed line of the anomaly log.
struct AnomalyLine {
  Micros ts = 0;
  std::uint16_t pid = 0;
  std::uint16_t tid = 0;
  std::uint64_t key = 0;
  std::size_t mismatches = 0;
  std::string kind;
  friend bool operator==(const AnomalyLine&, const AnomalyLine&) = default;
};

inline std::vector<AnomalyLine> parse_anomaly_log(std::istream& is) {
  std::vector<AnomalyLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    AnomalyLine a;
    std::string key;
    if (!(ls >> a.ts >> a.pid >> a.tid >> key >> a.mismatches >> a.kind))
      throw Error("anomaly log line " + std::to_string(lineno) + ": malformed");
    a.key = std::stoull(key, nullptr, 16);
    out.push_back(std::move(a));
  }
  return out;
}

/// A fault-labelled record resolved against its trace.
struct LabelledEvent {
  std::uint64_t offset = 0;
  std::string kind;
  Micros ts = 0;
  std::uint16_t pid = 0;
  std::uint16_t tid = 0;
  std::uint64_t key = 0;
};

/// Resolves truth offsets to (time, thread, symbol key) using the trace
/// records and the clock sidecar.
inline std::vector<LabelledEvent> resolve_truth(std::span<const std::byte> trace, const std::vector<Micros>& clock,
                                                const std::vector<TruthLabel>& truth, HeaderPolicy policy) {
  std::vector<LabelledEvent> out;
  out.reserve(truth.size());
  for (const auto& t : truth) {
    if (t.offset % kRecordSize != 0 || t.offset + kRecordSize > trace.size())
      throw Error("ground truth offset " + std::to_string(t.offset) + " outside the trace");
    const auto e = decode_trace_event(trace.subspan(t.offset, kRecordSize), t.offset);
    const auto idx = t.offset / kRecordSize;
    out.push_back({t.offset, t.kind, idx < clock.size() ? clock[idx] : 0, e.src_process, e.src_thread,
                   e.symbol_key(policy)});
  }
  return out;
}

struct ThreadRow {
  std::uint32_t pid = 0;
  std::string path;
  std::uint16_t tid = 0;
  std::string state;
  std::uint64_t anomalies = 0;
  std::uint64_t train_count = 0;
  std::uint64_t test_count = 0;
};

struct ProcessRow {
  std::uint32_t pid = 0;
  std::string path;
  std::size_t threads = 0;
  std::size_t anomalous_threads = 0;
  std::uint64_t anomalies = 0;
  std::uint64_t train_count = 0;
};

struct NormalizationStats {
  std::size_t normal_threads = 0;
  std::size_t total_threads = 0;
  double avg_time_to_normal_s = 0;
  double max_time_to_normal_s = 0;
  std::uint64_t events = 0;
  double duration_s = 0;
  double events_per_s = 0;
};

struct FaultRow {
  std::string kind;
  std::uint64_t labelled = 0;         // records carrying this label
  std::uint64_t true_positives = 0;   // anomalies on labelled records
  std::uint64_t false_positives = 0;  // unlabelled anomalies inside the fault's time window
  Micros window_start = 0;
  Micros window_end = 0;
};

struct Report {
  std::vector<ThreadRow> threads;
  std::vector<ProcessRow> processes;
  NormalizationStats normalization;
  std::vector<FaultRow> faults;
  std::uint64_t unlabelled_anomalies = 0;  // only meaningful with ground truth
};

/// `anomalies/train_count (pct%)`, or `0/0 (NA)` for a thread that never trained.
inline std::string ratio_cell(std::uint64_t anomalies, std::uint64_t train_count) {
  if (train_count == 0) return std::to_string(anomalies) + "/0 (NA)";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * static_cast<double>(anomalies) / static_cast<double>(train_count));
  std::string pct(buf);
  while (pct.back() == '0') pct.pop_back();
  if (pct.back() == '.') pct.pop_back();
  return std::to_string(anomalies) + "/" + std::to_string(train_count) + " (" + pct + "%)";
}

inline Report evaluation_report(const StatusSnapshot& s, const std::vector<AnomalyLine>& anomalies,
                                const std::vector<LabelledEvent>* truth = nullptr) {
  Report r;
  double ttn_sum = 0;
  for (const auto& p : s.processes) {
    ProcessRow pr{p.pid, p.path, p.threads.size(), 0, 0, 0};
    for (const auto& t : p.threads) {
      std::string state(to_string(t.state));
      if (t.quarantined) state = "UNKNOWN";
      r.threads.push_back({p.pid, p.path, t.tid, state, t.anomalies, t.train_count, t.test_count});
      pr.anomalies += t.anomalies;
      pr.train_count += t.train_count;
      if (t.anomalies > 0) ++pr.anomalous_threads;
      ++r.normalization.total_threads;
      if (t.state == ProfileState::Normal && !t.quarantined) {
        ++r.normalization.normal_threads;
        const double ttn = static_cast<double>(t.time_to_normal) / kMicrosPerSecond;
        ttn_sum += ttn;
        r.normalization.max_time_to_normal_s = std::max(r.normalization.max_time_to_normal_s, ttn);
      }
    }
    r.processes.push_back(std::move(pr));
  }
  auto& n = r.normalization;
  if (n.normal_threads) n.avg_time_to_normal_s = ttn_sum / static_cast<double>(n.normal_threads);
  n.events = s.events;
  n.duration_s = static_cast<double>(s.last_time - s.first_time) / kMicrosPerSecond;
  if (n.duration_s > 0) n.events_per_s = static_cast<double>(n.events) / n.duration_s;

  if (!truth) return r;
  using Key = std::tuple<Micros, std::uint16_t, std::uint16_t, std::uint64_t>;
  std::map<Key, std::string> label_of;
  std::map<std::string, FaultRow> rows;
  for (const auto& l : *truth) {
    label_of.emplace(Key{l.ts, l.pid, l.tid, l.key}, l.kind);
    auto& row = rows[l.kind];
    if (row.labelled == 0) {
      row.kind = l.kind;
      row.window_start = l.ts;
      row.window_end = l.ts;
    }
    ++row.labelled;
    row.window_start = std::min(row.window_start, l.ts);
    row.window_end = std::max(row.window_end, l.ts);
  }
  for (const auto& a : anomalies) {
    if (auto it = label_of.find(Key{a.ts, a.pid, a.tid, a.key}); it != label_of.end()) {
      ++rows[it->second].true_positives;
      continue;
    }
    ++r.unlabelled_anomalies;
    for (auto& [_, row] : rows)
      if (a.ts >= row.window_start && a.ts <= row.window_end) ++row.false_positives;
  }
  for (auto& [_, row] : rows) r.faults.push_back(std::move(row));
  return r;
}

inline void write_thread_csv(std::ostream& os, const Report& r) {
  os << "pid,path,tid,state,anomalies,train_count,test_count,anomaly_train_ratio\n";
  std::uint64_t a = 0, t = 0;
  for (const auto& row : r.threads) {
    os << row.pid << ',' << row.path << ',' << row.tid << ',' << row.state << ',' << row.anomalies << ','
       << row.train_count << ',' << row.test_count << ',' << ratio_cell(row.anomalies, row.train_count) << '\n';
    a += row.anomalies;
    t += row.train_count;
  }
  os << "total,,,," << a << ',' << t << ",," << ratio_cell(a, t) << '\n';
}

inline void write_process_csv(std::ostream& os, const Report& r) {
  os << "pid,path,threads,anomalous_threads,anomalies,train_count,anomaly_train_ratio\n";
  for (const auto& p : r.processes)
    os << p.pid << ',' << p.path << ',' << p.threads << ',' << p.anomalous_threads << ',' << p.anomalies << ','
       << p.train_count << ',' << ratio_cell(p.anomalies, p.train_count) << '\n';
}

inline void write_normalization_csv(std::ostream& os, const Report& r) {
  const auto& n = r.normalization;
  os << "normal_threads,total_threads,avg_time_to_normal_s,max_time_to_normal_s,events,duration_s,events_per_s\n";
  os << n.normal_threads << ',' << n.total_threads << ',' << n.avg_time_to_normal_s << ','
     << n.max_time_to_normal_s << ',' << n.events << ',' << n.duration_s << ',' << n.events_per_s << '\n';
}

inline void write_fault_csv(std::ostream& os, const Report& r) {
  os << "fault,labelled,true_positives,false_positives_in_window,window_start_us,window_end_us\n";
  for (const auto& f : r.faults)
    os << f.kind << ',' << f.labelled << ',' << f.true_positives << ',' << f.false_positives << ','
       << f.window_start << ',' << f.window_end << '\n';
  os << "unlabelled,,," << r.unlabelled_anomalies << ",,\n";
}

}  // namespace th

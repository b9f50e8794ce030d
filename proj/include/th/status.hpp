#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "th/bounded_queue.hpp"
#include "th/errors.hpp"
#include "th/profile.hpp"
#include "th/profile_store.hpp"

namespace th {

struct ThreadStatus {
  std::uint16_t tid = 0;
  ProfileState state = ProfileState::Thawed;
  bool quarantined = false;
  std::uint64_t anomalies = 0;
  std::uint64_t last_mod_count = 0;
  std::uint64_t normal_count = 0;
  std::uint64_t sequences = 0;
  std::uint64_t train_count = 0;
  std::uint64_t test_count = 0;
  Micros time_to_normal = 0;
  friend bool operator==(const ThreadStatus&, const ThreadStatus&) = default;
};

struct ProcessStatus {
  std::uint32_t pid = 0;
  std::string path;
  std::vector<ThreadStatus> threads;  // sorted by tid
  friend bool operator==(const ProcessStatus&, const ProcessStatus&) = default;
};

/// Immutable copy of the counters the reporting side needs.
struct StatusSnapshot {
  std::uint64_t anom_count = 0;
  bool running = true;
  std::vector<ProcessStatus> processes;  // sorted by pid, then path
  std::uint64_t events = 0;
  Micros first_time = 0;
  Micros last_time = 0;
  friend bool operator==(const StatusSnapshot&, const StatusSnapshot&) = default;
};

inline ThreadStatus thread_status(const ThreadProfile& p) {
  return ThreadStatus{p.id.thread,      p.state,          p.quarantined, p.anomalies,
                      p.last_mod_count, p.normal_count,   p.sequences,   p.train_count,
                      p.test_count,     p.time_to_normal};
}

/// Builds a snapshot from a profile store. `live_pid` maps a path to the
/// process index it currently runs under (falls back to the archived index).
template <typename PidLookup>
StatusSnapshot make_snapshot(const ProfileStore& store, PidLookup&& live_pid) {
  StatusSnapshot s;
  for (const auto& [path, proc] : store.processes) {
    if (proc.profiles.empty()) continue;
    ProcessStatus ps;
    ps.path = path;
    ps.pid = live_pid(path, proc.profiles.front().id.process);
    for (const auto& p : proc.profiles) {
      ps.threads.push_back(thread_status(p));
      s.anom_count += p.anomalies;
    }
    std::sort(ps.threads.begin(), ps.threads.end(),
              [](const auto& a, const auto& b) { return a.tid < b.tid; });
    s.processes.push_back(std::move(ps));
  }
  std::sort(s.processes.begin(), s.processes.end(), [](const auto& a, const auto& b) {
    return std::tie(a.pid, a.path) < std::tie(b.pid, b.path);
  });
  return s;
}

inline StatusSnapshot make_snapshot(const ProfileStore& store) {
  return make_snapshot(store, [](const std::string&, std::uint16_t archived) { return archived; });
}

/// `<MODE>:<STATE>[:anomalies]` for one thread.
inline std::string thread_state_field(const ThreadStatus& t) {
  if (t.quarantined) return "DETECTING:UNKNOWN:" + std::to_string(t.anomalies);
  if (t.state == ProfileState::Normal) return "DETECTING:NORMAL:" + std::to_string(t.anomalies);
  return "LEARNING:" + std::string(to_string(t.state));
}

/// Process roll-up: NORMAL when every thread is, THAWED when any thread is
/// still thawed (or unknown), FROZEN otherwise.
inline std::string process_state_field(const ProcessStatus& p) {
  bool all_normal = true, any_thawed = false;
  std::uint64_t anomalies = 0;
  for (const auto& t : p.threads) {
    anomalies += t.anomalies;
    if (t.quarantined || t.state != ProfileState::Normal) all_normal = false;
    if (t.quarantined || t.state == ProfileState::Thawed) any_thawed = true;
  }
  if (all_normal) return "DETECTING:NORMAL:" + std::to_string(anomalies);
  return any_thawed ? "LEARNING:THAWED" : "LEARNING:FROZEN";
}

/// The `status` object.
inline std::string render_status(const StatusSnapshot& s) {
  std::ostringstream os;
  os << "@status\n";
  os << "anom_count:n:" << s.anom_count << '\n';
  for (const auto& p : s.processes) {
    os << "pid_" << p.pid << "::" << process_state_field(p) << '\n';
    for (const auto& t : p.threads)
      os << "pid_" << p.pid << "_tid_" << t.tid << "::" << thread_state_field(t) << '\n';
  }
  os << "state::" << (s.running ? "running" : "none") << '\n';
  return os.str();
}

/// One per-thread object.
inline std::string render_thread_object(const ProcessStatus& p, const ThreadStatus& t) {
  std::ostringstream os;
  os << "anomalies:n:" << t.anomalies << '\n';
  os << "frozen:n:" << (t.state == ProfileState::Thawed ? 0 : 1) << '\n';
  os << "last_mod_count:n:" << t.last_mod_count << '\n';
  os << "normal_count:n:" << t.normal_count << '\n';
  os << "path::" << p.path << '\n';
  os << "sequences:n:" << t.sequences << '\n';
  os << "state::" << to_string(t.state) << '\n';
  os << "time_to_normal:n:" << t.time_to_normal / kMicrosPerSecond << '\n';
  os << "train_count:n:" << t.train_count << '\n';
  os << "test_count:n:" << t.test_count << '\n';
  os << "tid:n:" << t.tid << '\n';
  return os.str();
}

inline std::string thread_object_name(const ProcessStatus& p, const ThreadStatus& t) {
  return "pid_" + std::to_string(p.pid) + "_tid_" + std::to_string(t.tid);
}

namespace detail {
inline void write_atomically(const std::filesystem::path& target, const std::string& text) {
  auto tmp = std::filesystem::path(target).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}
}  // namespace detail

/// Writes `status` plus one object per thread into `out_dir`.
inline void publish_status(const StatusSnapshot& s, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
  detail::write_atomically(out_dir / "status", render_status(s));
  for (const auto& p : s.processes)
    for (const auto& t : p.threads)
      detail::write_atomically(out_dir / thread_object_name(p, t), render_thread_object(p, t));
}

/// Reporting side: publishes snapshots on its own thread. Ingestion hands
/// over snapshots with offer(), which never blocks; snapshots that arrive
/// while the queue is full are dropped and counted.
class StatusPublisher {
 public:
  StatusPublisher(std::filesystem::path out_dir, std::size_t depth = 2)
      : out_dir_(std::move(out_dir)), queue_(depth), worker_([this] { run(); }) {}

  ~StatusPublisher() { close(); }

  StatusPublisher(const StatusPublisher&) = delete;
  StatusPublisher& operator=(const StatusPublisher&) = delete;

  bool offer(StatusSnapshot s) { return queue_.try_push(std::move(s)); }

  /// Publishes `s` after everything already queued, then stops the worker.
  void finish(StatusSnapshot s) {
    queue_.push(std::move(s));
    close();
  }

  void close() {
    queue_.close();
    if (worker_.joinable()) worker_.join();
  }

  std::uint64_t dropped() const { return queue_.drops(); }
  std::uint64_t published() const { return published_.load(); }
  std::uint64_t failures() const { return failures_.load(); }

 private:
  void run() {
    while (auto s = queue_.pop()) {
      try {
        publish_status(*s, out_dir_);
        ++published_;
      } catch (const Error&) {
        ++failures_;
      }
    }
  }

  std::filesystem::path out_dir_;
  BoundedQueue<StatusSnapshot> queue_;
  std::atomic<std::uint64_t> published_{0};
  std::atomic<std::uint64_t> failures_{0};
  std::thread worker_;
};

inline nlohmann::json to_json(const StatusSnapshot& s) {
  nlohmann::json j;
  j["anom_count"] = s.anom_count;
  j["running"] = s.running;
  j["events"] = s.events;
  j["first_time_us"] = s.first_time;
  j["last_time_us"] = s.last_time;
  auto& procs = j["processes"] = nlohmann::json::array();
  for (const auto& p : s.processes) {
    nlohmann::json jp{{"pid", p.pid}, {"path", p.path}, {"threads", nlohmann::json::array()}};
    for (const auto& t : p.threads)
      jp["threads"].push_back({{"tid", t.tid},
                               {"state", to_string(t.state)},
                               {"quarantined", t.quarantined},
                               {"anomalies", t.anomalies},
                               {"last_mod_count", t.last_mod_count},
                               {"normal_count", t.normal_count},
                               {"sequences", t.sequences},
                               {"train_count", t.train_count},
                               {"test_count", t.test_count},
                               {"time_to_normal_us", t.time_to_normal}});
    procs.push_back(std::move(jp));
  }
  return j;
}

inline StatusSnapshot snapshot_from_json(const nlohmann::json& j) {
  StatusSnapshot s;
  s.anom_count = j.at("anom_count").get<std::uint64_t>();
  s.running = j.at("running").get<bool>();
  s.events = j.at("events").get<std::uint64_t>();
  s.first_time = j.at("first_time_us").get<Micros>();
  s.last_time = j.at("last_time_us").get<Micros>();
  for (const auto& jp : j.at("processes")) {
    ProcessStatus p;
    p.pid = jp.at("pid").get<std::uint32_t>();
    p.path = jp.at("path").get<std::string>();
    for (const auto& jt : jp.at("threads")) {
      ThreadStatus t;
      t.tid = jt.at("tid").get<std::uint16_t>();
      const auto st = jt.at("state").get<std::string>();
      t.state = st == "NORMAL" ? ProfileState::Normal
                : st == "FROZEN" ? ProfileState::Frozen
                                 : ProfileState::Thawed;
      t.quarantined = jt.at("quarantined").get<bool>();
      t.anomalies = jt.at("anomalies").get<std::uint64_t>();
      t.last_mod_count = jt.at("last_mod_count").get<std::uint64_t>();
      t.normal_count = jt.at("normal_count").get<std::uint64_t>();
      t.sequences = jt.at("sequences").get<std::uint64_t>();
      t.train_count = jt.at("train_count").get<std::uint64_t>();
      t.test_count = jt.at("test_count").get<std::uint64_t>();
      t.time_to_normal = jt.at("time_to_normal_us").get<Micros>();
      p.threads.push_back(t);
    }
    s.processes.push_back(std::move(p));
  }
  return s;
}

}  // namespace th

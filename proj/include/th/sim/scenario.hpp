#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "th/errors.hpp"
#include "th/message_id.hpp"
#include "th/profile.hpp"

namespace th::sim {

enum class TracePolicy : std::uint8_t { ExitOnly, EnterOnly, Both };

enum class FaultKind : std::uint8_t {
  RemoveResource,
  ReorderBoot,
  NovelMessage,
  InputBurst,
  Overheat,
  SpawnExtraThread,
};

inline std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::RemoveResource: return "REMOVE_RESOURCE";
    case FaultKind::ReorderBoot: return "REORDER_BOOT";
    case FaultKind::NovelMessage: return "NOVEL_MESSAGE";
    case FaultKind::InputBurst: return "INPUT_BURST";
    case FaultKind::Overheat: return "OVERHEAT";
    case FaultKind::SpawnExtraThread: return "SPAWN_EXTRA_THREAD";
  }
  return "?";
}

inline FaultKind fault_kind_from(std::string_view s) {
  for (auto k : {FaultKind::RemoveResource, FaultKind::ReorderBoot, FaultKind::NovelMessage,
                 FaultKind::InputBurst, FaultKind::Overheat, FaultKind::SpawnExtraThread})
    if (to_string(k) == s) return k;
  throw ScenarioError("unknown fault kind '" + std::string(s) + "'");
}

inline std::string_view to_string(TracePolicy p) {
  switch (p) {
    case TracePolicy::ExitOnly: return "exit";
    case TracePolicy::EnterOnly: return "enter";
    case TracePolicy::Both: return "both";
  }
  return "?";
}

inline TracePolicy trace_policy_from(std::string_view s) {
  if (s == "exit") return TracePolicy::ExitOnly;
  if (s == "enter") return TracePolicy::EnterOnly;
  if (s == "both") return TracePolicy::Both;
  throw ScenarioError("tracing: expected exit, enter or both");
}

inline constexpr const char* kProcessManagerPath = "/proc/boot/procnto";
inline constexpr std::uint32_t kProcSpawnHead = 0x0010;
/// One process manager plus user processes must leave index 0xFFF unused.
inline constexpr std::size_t kMaxUserProcesses = 0xFFE - 1;

/// One action in a thread's script.
struct Step {
  enum class Kind : std::uint8_t { Send, Syscall, Sleep };
  Kind kind = Kind::Syscall;
  std::string target;  // Send: destination process path
  std::uint32_t chid = 1;
  std::uint32_t nid = 0;
  std::uint32_t head = 0;
  std::vector<std::uint32_t> heads;  // Send: when set, one is picked uniformly per call
  std::uint32_t syscall = 0;
  Micros sleep_us = 0;
  std::vector<Step> on_error;  // Send: run when the reply is an error

  static Step send(std::string target, std::uint32_t head, std::uint32_t chid = 1) {
    Step s;
    s.kind = Kind::Send;
    s.target = std::move(target);
    s.head = head;
    s.chid = chid;
    return s;
  }
  static Step sys(std::uint32_t number) {
    Step s;
    s.kind = Kind::Syscall;
    s.syscall = number;
    return s;
  }
  static Step sleep(Micros us) {
    Step s;
    s.kind = Kind::Sleep;
    s.sleep_us = us;
    return s;
  }
};

struct Handler {
  std::uint32_t head = 0;
  std::vector<Step> steps;
  std::uint32_t reply = 0;
};

/// Worker thread(s) receiving on one channel. More than one worker makes a
/// thread pool.
struct ServerSpec {
  std::uint32_t chid = 1;
  std::uint16_t first_tid = 1;
  std::uint16_t workers = 1;
  double skew = 1.0;  // 1: first idle worker always wins; 0: uniform among idle workers
  Micros service_us = 20;
  std::vector<Handler> handlers;
  std::vector<Step> default_steps;
  std::uint32_t default_reply = 0;
  std::vector<Step> error_steps;
  std::uint32_t error_reply = 0xDEAD;
};

/// A single-task thread running its script periodically.
struct ClientSpec {
  std::uint16_t tid = 1;
  Micros start_us = 0;
  Micros period_us = 1000;
  Micros jitter_us = 0;
  std::uint64_t iterations = 0;  // 0: run until the scenario ends
  bool dormant = false;          // only runs when activated by INPUT_BURST
  std::vector<Step> steps;
};

struct ProcessSpec {
  std::string path;
  std::string parent;  // empty: spawned by the process manager
  std::vector<ServerSpec> servers;
  std::vector<ClientSpec> clients;
};

struct FaultAction {
  Micros at_us = 0;
  FaultKind kind = FaultKind::NovelMessage;
  std::string target;       // process path
  std::uint16_t tid = 0;    // NOVEL_MESSAGE / INPUT_BURST thread
  std::string dest;         // NOVEL_MESSAGE destination (default: process manager)
  std::uint32_t chid = 1;
  std::uint32_t head = 0;   // NOVEL_MESSAGE head; REMOVE_RESOURCE head filter (0 = all)
  std::uint64_t count = 1;  // INPUT_BURST iterations
  double factor = 4.0;      // OVERHEAT service-time stretch
  std::vector<std::string> order;  // REORDER_BOOT explicit boot order; empty = rotate by one
};

struct Scenario {
  std::string name;
  Micros duration_us = 1'000'000;
  Micros spawn_gap_us = 100;
  Micros syscall_us = 2;
  double restart_probability = 0.0;
  TracePolicy tracing = TracePolicy::ExitOnly;
  std::vector<ProcessSpec> processes;
  std::vector<FaultAction> faults;

  const ProcessSpec* find(std::string_view path) const {
    for (const auto& p : processes)
      if (p.path == path) return &p;
    return nullptr;
  }
  ProcessSpec* find(std::string_view path) {
    for (auto& p : processes)
      if (p.path == path) return &p;
    return nullptr;
  }
};

namespace detail {

inline void validate_steps(const Scenario& s, const std::vector<Step>& steps, const std::string& where) {
  for (const auto& st : steps) {
    if (st.kind == Step::Kind::Send) {
      if (st.target == kProcessManagerPath) {
        if (st.chid > 0xFFF) throw ScenarioError(where + ": chid out of range");
      } else {
        const auto* t = s.find(st.target);
        if (!t) throw ScenarioError(where + ": unknown send target '" + st.target + "'");
        bool has = false;
        for (const auto& srv : t->servers) has = has || srv.chid == st.chid;
        if (!has)
          throw ScenarioError(where + ": '" + st.target + "' has no channel " + std::to_string(st.chid));
      }
      if (st.nid > 0xFF) throw ScenarioError(where + ": nid out of range");
      validate_steps(s, st.on_error, where + " on_error");
    } else if (st.kind == Step::Kind::Sleep && st.sleep_us < 0) {
      throw ScenarioError(where + ": negative sleep");
    }
  }
}

}  // namespace detail

/// Throws ScenarioError describing the first problem found.
inline void validate(const Scenario& s) {
  if (s.duration_us <= 0) throw ScenarioError("duration must be positive");
  if (s.restart_probability < 0 || s.restart_probability >= 1)
    throw ScenarioError("restart_probability must be in [0, 1)");
  if (s.processes.size() > kMaxUserProcesses)
    throw ScenarioError("too many processes for 12-bit process indices");
  std::set<std::string> paths;
  for (const auto& p : s.processes) {
    if (p.path.empty() || p.path == kProcessManagerPath)
      throw ScenarioError("invalid process path '" + p.path + "'");
    if (!paths.insert(p.path).second) throw ScenarioError("duplicate process path '" + p.path + "'");
  }
  for (const auto& p : s.processes) {
    if (!p.parent.empty() && !s.find(p.parent))
      throw ScenarioError(p.path + ": unknown parent '" + p.parent + "'");
    std::set<std::uint32_t> tids, chids;
    auto add_tid = [&](std::uint32_t tid) {
      if (tid < 1 || tid > 0xFFF) throw ScenarioError(p.path + ": thread id out of range");
      if (!tids.insert(tid).second)
        throw ScenarioError(p.path + ": duplicate thread id " + std::to_string(tid));
    };
    for (const auto& srv : p.servers) {
      if (srv.chid < 1 || srv.chid > 0xFFF) throw ScenarioError(p.path + ": chid out of range");
      if (!chids.insert(srv.chid).second) throw ScenarioError(p.path + ": duplicate channel");
      if (srv.workers < 1) throw ScenarioError(p.path + ": a server needs at least one worker");
      if (srv.skew < 0 || srv.skew > 1) throw ScenarioError(p.path + ": skew must be in [0, 1]");
      for (std::uint32_t w = 0; w < srv.workers; ++w) add_tid(srv.first_tid + w);
      for (const auto& h : srv.handlers) detail::validate_steps(s, h.steps, p.path + " handler");
      detail::validate_steps(s, srv.default_steps, p.path + " default handler");
      detail::validate_steps(s, srv.error_steps, p.path + " error handler");
    }
    for (const auto& c : p.clients) {
      add_tid(c.tid);
      if (c.period_us <= 0) throw ScenarioError(p.path + ": period must be positive");
      if (c.jitter_us < 0) throw ScenarioError(p.path + ": negative jitter");
      detail::validate_steps(s, c.steps, p.path + " thread " + std::to_string(c.tid));
    }
  }
  for (const auto& f : s.faults) {
    const std::string what(to_string(f.kind));
    if (f.kind == FaultKind::ReorderBoot) {
      if (!f.order.empty()) {
        std::set<std::string> seen(f.order.begin(), f.order.end());
        if (seen != paths || f.order.size() != paths.size())
          throw ScenarioError(what + ": order must be a permutation of all processes");
      }
      continue;
    }
    const auto* t = s.find(f.target);
    if (!t) throw ScenarioError(what + ": unknown target '" + f.target + "'");
    auto client = [&]() -> const ClientSpec* {
      for (const auto& c : t->clients)
        if (c.tid == f.tid) return &c;
      return nullptr;
    };
    switch (f.kind) {
      case FaultKind::RemoveResource:
      case FaultKind::Overheat:
        if (t->servers.empty()) throw ScenarioError(what + ": target has no server threads");
        break;
      case FaultKind::NovelMessage:
        if (!client()) throw ScenarioError(what + ": target thread is not a client thread");
        if (!f.dest.empty() && f.dest != kProcessManagerPath) {
          Step probe = Step::send(f.dest, f.head, f.chid);
          detail::validate_steps(s, {probe}, what);
        }
        break;
      case FaultKind::InputBurst:
        if (!client() || !client()->dormant)
          throw ScenarioError(what + ": target thread must be a dormant client thread");
        break;
      case FaultKind::SpawnExtraThread:
        if (t->servers.empty() && t->clients.empty())
          throw ScenarioError(what + ": target has no threads to replicate");
        break;
      case FaultKind::ReorderBoot: break;
    }
    if (f.factor <= 0) throw ScenarioError(what + ": factor must be positive");
  }
}

// ---------------------------------------------------------------------------
// JSON schema
//
// {
//   "name": "...", "duration_ms": 1000, "spawn_gap_us": 100, "syscall_us": 2,
//   "restart_probability": 0.0, "tracing": "exit" | "enter" | "both",
//   "processes": [{
//     "path": "/proc/boot/server", "parent": "",
//     "servers": [{"chid": 1, "first_tid": 1, "workers": 1, "skew": 1.0, "service_us": 20,
//                  "handlers": [{"head": 1024, "steps": [...], "reply": 0}],
//                  "default_steps": [...], "default_reply": 0,
//                  "error_steps": [...], "error_reply": 57005}],
//     "threads": [{"tid": 2, "start_us": 0, "period_us": 1000, "jitter_us": 0,
//                  "iterations": 0, "dormant": false, "steps": [...]}]
//   }],
//   "faults": [{"at_ms": 500, "kind": "REMOVE_RESOURCE", "target": "...", ...}]
// }
//
// Steps: {"send": "<path>", "chid": 1, "head": 1024, "nid": 0, "on_error": [...]}
//        {"send": "<path>", "heads": [1024, 1025]}   one head drawn per call
//        {"syscall": 7}
//        {"sleep_us": 100}
// Numbers may also be written as strings ("0x0010").
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t num_value(const nlohmann::json& v, const char* key) {
  if (v.is_number_unsigned() || v.is_number_integer()) {
    if (v.is_number_integer() && v.get<std::int64_t>() < 0)
      throw ScenarioError(std::string(key) + ": must not be negative");
    return v.get<std::uint64_t>();
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    try {
      std::size_t used = 0;
      const auto n = std::stoull(s, &used, 0);
      if (used != s.size()) throw std::invalid_argument(s);
      return n;
    } catch (const std::exception&) {
      throw ScenarioError(std::string(key) + ": not a number: '" + s + "'");
    }
  }
  throw ScenarioError(std::string(key) + ": expected a number");
}

inline std::uint64_t num(const nlohmann::json& j, const char* key, std::uint64_t fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return num_value(*it, key);
}

inline std::uint32_t u32_value(const nlohmann::json& v, const char* key) {
  const auto n = num_value(v, key);
  if (n > 0xFFFFFFFFull) throw ScenarioError(std::string(key) + ": out of range");
  return static_cast<std::uint32_t>(n);
}

inline std::uint32_t u32(const nlohmann::json& j, const char* key, std::uint64_t fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (fallback > 0xFFFFFFFFull) throw ScenarioError(std::string(key) + ": out of range");
    return static_cast<std::uint32_t>(fallback);
  }
  return u32_value(*it, key);
}

inline double real(const nlohmann::json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ScenarioError(std::string(key) + ": expected a number");
  return it->get<double>();
}

inline std::string text(const nlohmann::json& j, const char* key, const std::string& fallback = {}) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw ScenarioError(std::string(key) + ": expected a string");
  return it->get<std::string>();
}

inline std::vector<Step> parse_steps(const nlohmann::json& j);

inline Step parse_step(const nlohmann::json& j) {
  if (!j.is_object()) throw ScenarioError("step must be an object");
  Step s;
  if (j.contains("send")) {
    s.kind = Step::Kind::Send;
    s.target = text(j, "send");
    s.chid = u32(j, "chid", 1);
    s.nid = u32(j, "nid", 0);
    s.head = u32(j, "head", 0);
    if (auto it = j.find("heads"); it != j.end()) {
      if (!it->is_array() || it->empty()) throw ScenarioError("heads: expected a non-empty array");
      for (const auto& h : *it) s.heads.push_back(u32_value(h, "heads"));
    }
    if (j.contains("on_error")) s.on_error = parse_steps(j.at("on_error"));
  } else if (j.contains("syscall")) {
    s.kind = Step::Kind::Syscall;
    s.syscall = u32(j, "syscall", 0);
  } else if (j.contains("sleep_us")) {
    s.kind = Step::Kind::Sleep;
    s.sleep_us = static_cast<Micros>(num(j, "sleep_us", 0));
  } else {
    throw ScenarioError("step needs one of send, syscall, sleep_us");
  }
  return s;
}

inline std::vector<Step> parse_steps(const nlohmann::json& j) {
  if (!j.is_array()) throw ScenarioError("steps must be an array");
  std::vector<Step> out;
  for (const auto& e : j) out.push_back(parse_step(e));
  return out;
}

inline std::vector<Step> steps_or_empty(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? std::vector<Step>{} : parse_steps(*it);
}

inline Micros time_field(const nlohmann::json& j, const char* us_key, const char* ms_key, Micros fallback) {
  if (j.contains(us_key)) return static_cast<Micros>(num(j, us_key, 0));
  if (j.contains(ms_key)) return static_cast<Micros>(num(j, ms_key, 0)) * 1000;
  return fallback;
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& json_text) {
  using namespace detail;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }
  if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
  Scenario s;
  try {
    s.name = text(j, "name");
    s.duration_us = time_field(j, "duration_us", "duration_ms", s.duration_us);
    s.spawn_gap_us = static_cast<Micros>(num(j, "spawn_gap_us", 100));
    s.syscall_us = static_cast<Micros>(num(j, "syscall_us", 2));
    s.restart_probability = real(j, "restart_probability", 0.0);
    s.tracing = trace_policy_from(text(j, "tracing", "exit"));
    for (const auto& jp : j.value("processes", nlohmann::json::array())) {
      ProcessSpec p;
      p.path = text(jp, "path");
      p.parent = text(jp, "parent");
      for (const auto& js : jp.value("servers", nlohmann::json::array())) {
        ServerSpec srv;
        srv.chid = u32(js, "chid", 1);
        const auto first = num(js, "first_tid", 1);
        const auto workers = num(js, "workers", 1);
        if (first > 0xFFF || workers > 0xFFF) throw ScenarioError(p.path + ": thread ids out of range");
        srv.first_tid = static_cast<std::uint16_t>(first);
        srv.workers = static_cast<std::uint16_t>(workers);
        srv.skew = real(js, "skew", 1.0);
        srv.service_us = static_cast<Micros>(num(js, "service_us", 20));
        for (const auto& jh : js.value("handlers", nlohmann::json::array()))
          srv.handlers.push_back({u32(jh, "head", 0), steps_or_empty(jh, "steps"), u32(jh, "reply", 0)});
        srv.default_steps = steps_or_empty(js, "default_steps");
        srv.default_reply = u32(js, "default_reply", 0);
        srv.error_steps = steps_or_empty(js, "error_steps");
        srv.error_reply = u32(js, "error_reply", 0xDEAD);
        p.servers.push_back(std::move(srv));
      }
      for (const auto& jt : jp.value("threads", nlohmann::json::array())) {
        ClientSpec c;
        const auto tid = num(jt, "tid", 1);
        if (tid > 0xFFF) throw ScenarioError(p.path + ": thread id out of range");
        c.tid = static_cast<std::uint16_t>(tid);
        c.start_us = time_field(jt, "start_us", "start_ms", 0);
        c.period_us = time_field(jt, "period_us", "period_ms", 1000);
        c.jitter_us = static_cast<Micros>(num(jt, "jitter_us", 0));
        c.iterations = num(jt, "iterations", 0);
        c.dormant = jt.value("dormant", false);
        c.steps = steps_or_empty(jt, "steps");
        p.clients.push_back(std::move(c));
      }
      s.processes.push_back(std::move(p));
    }
    for (const auto& jf : j.value("faults", nlohmann::json::array())) {
      FaultAction f;
      f.at_us = time_field(jf, "at_us", "at_ms", 0);
      f.kind = fault_kind_from(text(jf, "kind"));
      f.target = text(jf, "target");
      const auto tid = num(jf, "tid", 0);
      if (tid > 0xFFF) throw ScenarioError("fault tid out of range");
      f.tid = static_cast<std::uint16_t>(tid);
      f.dest = text(jf, "dest");
      f.chid = u32(jf, "chid", 1);
      f.head = u32(jf, "head", 0);
      f.count = num(jf, "count", 1);
      f.factor = real(jf, "factor", 4.0);
      for (const auto& o : jf.value("order", nlohmann::json::array())) f.order.push_back(o.get<std::string>());
      s.faults.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario schema error: ") + e.what());
  }
  validate(s);
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace th::sim

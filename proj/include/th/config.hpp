#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "th/errors.hpp"
#include "th/lookahead_table.hpp"
#include "th/message_id.hpp"
#include "th/profile.hpp"
#include "th/trace_event.hpp"

namespace th {

enum class ClockSource : std::uint8_t { Trace, Wall };

struct MonitorEntry {
  std::string id;
  int type = 2;
  std::string desc;
  std::optional<std::size_t> win_size;
  int notify = 0;
};

/// Detector configuration. Field names follow the JSON file.
struct Config {
  std::size_t buf_size = 64;
  std::size_t win_size = 8;
  std::vector<MonitorEntry> mon_list;
  std::vector<std::string> exc_list;
  std::string prof_path;
  int notify = 0;
  double normal_wait = 180.0;  // seconds

  RuntimeMode mode = RuntimeMode::Detection;
  Aggregation aggregation = Aggregation::PerThread;
  HeaderPolicy header_policy = HeaderPolicy::Bits16;
  std::uint64_t freeze_factor = 4;
  std::uint64_t min_train_count = 128;
  ClockSource clock = ClockSource::Trace;
  EventClass trace_class = EventClass::KernelCallExit;
  std::size_t symbol_capacity = SymbolRegistry::kDefaultCapacity;

  LifecycleConfig lifecycle(std::size_t window) const {
    LifecycleConfig c;
    c.window_size = window;
    c.freeze_factor = freeze_factor;
    c.min_train_count = min_train_count;
    c.normal_wait = static_cast<Micros>(std::llround(normal_wait * kMicrosPerSecond));
    c.symbol_capacity = symbol_capacity;
    return c;
  }

  LifecycleConfig lifecycle() const { return lifecycle(win_size); }

  /// Throws ConfigError naming the first offending field.
  void validate() const {
    auto check_win = [](std::size_t w, const std::string& field) {
      if (w < 1 || w > kMaxWindowSize)
        throw ConfigError(field + ": must be between 1 and " + std::to_string(kMaxWindowSize));
    };
    check_win(win_size, "win_size");
    for (const auto& m : mon_list) {
      if (m.id.empty()) throw ConfigError("mon_list.id: must not be empty");
      if (m.win_size) check_win(*m.win_size, "mon_list.win_size");
    }
    if (prof_path.empty()) throw ConfigError("prof_path: must not be empty");
    if (!mon_list.empty() && !exc_list.empty())
      throw ConfigError("mon_list/exc_list: only one of the two may be non-empty");
    if (freeze_factor < 1) throw ConfigError("freeze_factor: must be at least 1");
    if (normal_wait < 0) throw ConfigError("normal_wait: must not be negative");
    if (buf_size < 1) throw ConfigError("buf_size: must be at least 1");
    if (symbol_capacity < 1) throw ConfigError("symbol_capacity: must be at least 1");
  }
};

namespace detail {

inline bool path_matches(const std::string& path, const std::string& id) {
  if (path == id) return true;
  // Entries are written without the leading slash ("proc/boot/io-hid").
  if (!path.empty() && path.front() == '/' && path.compare(1, std::string::npos, id) == 0) return true;
  // Bare executable names match the last path component.
  if (id.find('/') == std::string::npos) {
    const auto slash = path.rfind('/');
    return slash != std::string::npos && path.compare(slash + 1, std::string::npos, id) == 0;
  }
  return false;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(key) + ": wrong type");
  }
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

/// True if a process at `path` is monitored under this config.
inline bool is_monitored(const Config& cfg, const std::string& path) {
  if (!cfg.mon_list.empty()) {
    for (const auto& m : cfg.mon_list)
      if (detail::path_matches(path, m.id)) return true;
    return false;
  }
  for (const auto& e : cfg.exc_list)
    if (detail::path_matches(path, e)) return false;
  return true;
}

/// Window size for a process, honouring a per-entry override.
inline std::size_t window_for(const Config& cfg, const std::string& path) {
  for (const auto& m : cfg.mon_list)
    if (m.win_size && detail::path_matches(path, m.id)) return *m.win_size;
  return cfg.win_size;
}

inline Config parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("parse error on line " + std::to_string(detail::line_of(text, e.byte)) +
                      ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");

  using detail::get_or;
  Config c;
  c.buf_size = get_or<std::size_t>(j, "buf_size", c.buf_size);
  c.win_size = get_or<std::size_t>(j, "win_size", c.win_size);
  c.prof_path = get_or<std::string>(j, "prof_path", "");
  c.notify = get_or<int>(j, "notify", c.notify);
  c.normal_wait = get_or<double>(j, "normal_wait", c.normal_wait);
  c.freeze_factor = get_or<std::uint64_t>(j, "freeze_factor", c.freeze_factor);
  c.min_train_count = get_or<std::uint64_t>(j, "min_train_count", c.min_train_count);
  c.symbol_capacity = get_or<std::size_t>(j, "symbol_capacity", c.symbol_capacity);

  if (auto it = j.find("mon_list"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ConfigError("mon_list: must be an array");
    for (const auto& e : *it) {
      MonitorEntry m;
      if (e.is_string()) {
        m.id = e.get<std::string>();
      } else if (e.is_object()) {
        m.id = get_or<std::string>(e, "id", "");
        m.type = get_or<int>(e, "type", m.type);
        m.desc = get_or<std::string>(e, "desc", "");
        if (e.contains("win_size")) m.win_size = get_or<std::size_t>(e, "win_size", 0);
        m.notify = get_or<int>(e, "notify", 0);
      } else {
        throw ConfigError("mon_list: entries must be objects or strings");
      }
      c.mon_list.push_back(std::move(m));
    }
  }
  if (auto it = j.find("exc_list"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ConfigError("exc_list: must be an array");
    for (const auto& e : *it) {
      if (e.is_string()) c.exc_list.push_back(e.get<std::string>());
      else if (e.is_object()) c.exc_list.push_back(get_or<std::string>(e, "id", ""));
      else throw ConfigError("exc_list: entries must be objects or strings");
    }
  }

  const auto mode = get_or<std::string>(j, "mode", "detection");
  if (mode == "learning") c.mode = RuntimeMode::Learning;
  else if (mode == "detection") c.mode = RuntimeMode::Detection;
  else throw ConfigError("mode: expected 'learning' or 'detection'");

  const auto agg = get_or<std::string>(j, "aggregation", "per_thread");
  if (agg == "per_thread") c.aggregation = Aggregation::PerThread;
  else if (agg == "per_process") c.aggregation = Aggregation::PerProcess;
  else throw ConfigError("aggregation: expected 'per_thread' or 'per_process'");

  const auto policy = get_or<int>(j, "header_policy", 16);
  if (policy == 16) c.header_policy = HeaderPolicy::Bits16;
  else if (policy == 32) c.header_policy = HeaderPolicy::Bits32;
  else throw ConfigError("header_policy: expected 16 or 32");

  const auto clock = get_or<std::string>(j, "clock", "trace");
  if (clock == "trace") c.clock = ClockSource::Trace;
  else if (clock == "wall") c.clock = ClockSource::Wall;
  else throw ConfigError("clock: expected 'trace' or 'wall'");

  const auto tc = get_or<std::string>(j, "trace_class", "exit");
  if (tc == "exit") c.trace_class = EventClass::KernelCallExit;
  else if (tc == "enter") c.trace_class = EventClass::KernelCallEnter;
  else throw ConfigError("trace_class: expected 'exit' or 'enter'");

  c.validate();
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace th

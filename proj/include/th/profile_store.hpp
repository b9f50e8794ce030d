#pragma once

#include <map>
#include <string>

#include "th/profile.hpp"
#include "th/symbol_registry.hpp"

namespace th {

/// Everything the detector learns: the symbol registry plus the profiles
/// of every executable, keyed by executable path.
struct ProfileStore {
  SymbolRegistry registry;
  std::map<std::string, ProcessProfile> processes;

  ProfileStore() = default;
  explicit ProfileStore(std::size_t symbol_capacity) : registry(symbol_capacity) {}

  ProcessProfile& process(const std::string& path, Aggregation aggregation) {
    auto [it, inserted] = processes.try_emplace(path);
    if (inserted) {
      it->second.path = path;
      it->second.aggregation = aggregation;
    }
    return it->second;
  }

  std::size_t thread_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : processes) n += p.profiles.size();
    return n;
  }
};

}  // namespace th

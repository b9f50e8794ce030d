#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "th/bits.hpp"
#include "th/errors.hpp"
#include "th/profile_store.hpp"

// Profile archive, one file per executable. Little-endian throughout.
//
//   magic   8 bytes  "tHPROF\0\0"
//   version u32
//   sections, each: tag u32, length u32, payload[length]
//     META     path (u32 length + bytes), aggregation u8
//     SYMBOLS  count u32, keys u64[count]        archive-local symbol order
//     THREAD   one per profile (see write_thread)
//     BINDINGS count u32, (tid u16, profile u32)[count]
//     END      empty, must be last
//
// Tables are row-sparse: count u32, then (current u32, previous u32, mask u32)
// with symbol numbers indexing the SYMBOLS section.

namespace th {

inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr char kArchiveMagic[8] = {'t', 'H', 'P', 'R', 'O', 'F', '\0', '\0'};
inline constexpr const char* kArchiveExtension = ".thp";

namespace detail {

enum class Section : std::uint32_t { Meta = 1, Symbols = 2, Thread = 3, Bindings = 4, End = 0xFFFF };

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    std::byte b[4];
    bits::store_le32(std::span<std::byte, 4>{b}, v);
    out_.insert(out_.end(), b, b + 4);
  }
  void u64(std::uint64_t v) {
    std::byte b[8];
    bits::store_le64(std::span<std::byte, 8>{b}, v);
    out_.insert(out_.end(), b, b + 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (char c : s) u8(static_cast<std::uint8_t>(c));
  }
  void raw(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  void section(Section tag, const ByteWriter& body) {
    u32(static_cast<std::uint32_t>(tag));
    u32(static_cast<std::uint32_t>(body.out_.size()));
    raw(body.out_);
  }

  std::vector<std::byte>& bytes() noexcept { return out_; }

 private:
  std::vector<std::byte> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  std::span<const std::byte> take(std::size_t n) {
    if (n > in_.size() - pos_) throw ArchiveError("archive truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(static_cast<unsigned>(b[0]) | (static_cast<unsigned>(b[1]) << 8));
  }
  std::uint32_t u32() { return bits::load_le32(take(4).first<4>()); }
  std::uint64_t u64() { return bits::load_le64(take(8).first<8>()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::string str() {
    auto b = take(u32());
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

inline void write_table(ByteWriter& w, const LookaheadTable& t,
                        const std::map<std::uint32_t, std::uint32_t>& local) {
  const auto cells = t.cells();
  w.u32(static_cast<std::uint32_t>(cells.size()));
  for (const auto& [cur, prev, mask] : cells) {
    w.u32(local.at(cur.value));
    w.u32(local.at(prev.value));
    w.u32(mask);
  }
}

inline void read_table(ByteReader& r, LookaheadTable& t, const std::vector<SymbolId>& symbols) {
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto cur = r.u32();
    const auto prev = r.u32();
    const auto mask = r.u32();
    if (cur >= symbols.size() || prev >= symbols.size())
      throw ArchiveError("table references unknown symbol");
    if (mask == 0) throw ArchiveError("empty table cell");
    t.set_mask(symbols[cur], symbols[prev], mask);
  }
}

inline void write_thread(ByteWriter& w, const ThreadProfile& p,
                         const std::map<std::uint32_t, std::uint32_t>& local) {
  w.u16(p.id.process);
  w.u16(p.id.thread);
  w.u8(p.id.node);
  w.u8(static_cast<std::uint8_t>(p.state));
  w.u8(p.quarantined ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(p.window_size));
  w.u64(p.train_count);
  w.u64(p.last_mod_count);
  w.u64(p.normal_count);
  w.u64(p.anomalies);
  w.u64(p.sequences);
  w.u64(p.test_count);
  w.u8(p.started ? 1 : 0);
  w.i64(p.created_at);
  w.i64(p.frozen_since);
  w.i64(p.last_seen);
  w.i64(p.time_to_normal);
  write_table(w, p.train_table, local);
  write_table(w, p.test_table, local);
}

inline ThreadProfile read_thread(ByteReader& r, const std::vector<SymbolId>& symbols,
                                 std::size_t symbol_capacity) {
  ThreadIdentity id;
  id.process = r.u16();
  id.thread = r.u16();
  id.node = r.u8();
  const auto state = r.u8();
  if (state > static_cast<std::uint8_t>(ProfileState::Normal)) throw ArchiveError("bad state");
  const bool quarantined = r.u8() != 0;
  const auto window_size = r.u8();
  if (window_size < 1 || window_size > kMaxWindowSize) throw ArchiveError("bad window size");

  LifecycleConfig cfg;
  cfg.window_size = window_size;
  cfg.symbol_capacity = symbol_capacity;
  ThreadProfile p(id, cfg);
  p.state = static_cast<ProfileState>(state);
  p.quarantined = quarantined;
  p.train_count = r.u64();
  p.last_mod_count = r.u64();
  p.normal_count = r.u64();
  p.anomalies = r.u64();
  p.sequences = r.u64();
  p.test_count = r.u64();
  p.started = r.u8() != 0;
  p.created_at = r.i64();
  p.frozen_since = r.i64();
  p.last_seen = r.i64();
  p.time_to_normal = r.i64();
  read_table(r, p.train_table, symbols);
  read_table(r, p.test_table, symbols);
  return p;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Serializes one executable's profiles.
inline std::vector<std::byte> serialize_process(const ProcessProfile& proc,
                                                const SymbolRegistry& registry) {
  // Archive-local symbol numbering, in ascending global-id order.
  std::map<std::uint32_t, std::uint32_t> local;
  for (const auto& p : proc.profiles)
    for (const auto* t : {&p.train_table, &p.test_table})
      for (const auto& [cur, prev, _] : t->cells()) {
        local.emplace(cur.value, 0);
        local.emplace(prev.value, 0);
      }
  std::uint32_t next = 0;
  for (auto& [_, l] : local) l = next++;

  detail::ByteWriter w;
  w.raw(std::as_bytes(std::span{kArchiveMagic}));
  w.u32(kArchiveVersion);

  detail::ByteWriter meta;
  meta.str(proc.path);
  meta.u8(static_cast<std::uint8_t>(proc.aggregation));
  w.section(detail::Section::Meta, meta);

  detail::ByteWriter syms;
  syms.u32(static_cast<std::uint32_t>(local.size()));
  for (const auto& [global, _] : local) syms.u64(registry.key(SymbolId{global}));
  w.section(detail::Section::Symbols, syms);

  for (const auto& p : proc.profiles) {
    detail::ByteWriter t;
    detail::write_thread(t, p, local);
    w.section(detail::Section::Thread, t);
  }

  detail::ByteWriter bind;
  bind.u32(static_cast<std::uint32_t>(proc.by_thread.size()));
  for (const auto& [tid, idx] : proc.by_thread) {
    bind.u16(tid);
    bind.u32(static_cast<std::uint32_t>(idx));
  }
  w.section(detail::Section::Bindings, bind);
  w.section(detail::Section::End, detail::ByteWriter{});
  return std::move(w.bytes());
}

/// Parses one archive, interning its symbols into `registry`.
/// Throws ArchiveError on any malformed or foreign-version input; nothing
/// is added to the registry unless the whole archive parses.
inline ProcessProfile deserialize_process(std::span<const std::byte> bytes, SymbolRegistry& registry) {
  detail::ByteReader r(bytes);
  auto magic = r.take(sizeof kArchiveMagic);
  if (!std::equal(magic.begin(), magic.end(), std::as_bytes(std::span{kArchiveMagic}).begin()))
    throw ArchiveError("not a profile archive");
  const auto version = r.u32();
  if (version != kArchiveVersion)
    throw ArchiveError("unsupported archive version " + std::to_string(version));

  // Parse against a scratch registry first so a bad archive leaves `registry` untouched.
  SymbolRegistry scratch(registry.capacity());
  for (auto k : registry.keys()) scratch.intern(k);

  ProcessProfile proc;
  std::vector<SymbolId> symbols;
  bool have_meta = false, have_symbols = false, have_bindings = false, have_end = false;
  while (!have_end) {
    const auto tag = static_cast<detail::Section>(r.u32());
    detail::ByteReader body(r.take(r.u32()));
    switch (tag) {
      case detail::Section::Meta: {
        proc.path = body.str();
        const auto agg = body.u8();
        if (agg > 1) throw ArchiveError("bad aggregation mode");
        proc.aggregation = static_cast<Aggregation>(agg);
        have_meta = true;
        break;
      }
      case detail::Section::Symbols: {
        const auto n = body.u32();
        for (std::uint32_t i = 0; i < n; ++i) symbols.push_back(scratch.intern(body.u64()));
        have_symbols = true;
        break;
      }
      case detail::Section::Thread:
        if (!have_symbols) throw ArchiveError("thread section before symbols");
        proc.profiles.push_back(detail::read_thread(body, symbols, registry.capacity()));
        break;
      case detail::Section::Bindings: {
        const auto n = body.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
          const auto tid = body.u16();
          const auto idx = body.u32();
          if (idx >= proc.profiles.size()) throw ArchiveError("binding to unknown profile");
          proc.by_thread.emplace(tid, idx);
        }
        have_bindings = true;
        break;
      }
      case detail::Section::End: have_end = true; break;
      default: throw ArchiveError("unknown section");
    }
    if (!body.done()) throw ArchiveError("section length mismatch");
  }
  if (!r.done()) throw ArchiveError("trailing bytes after end section");
  if (!have_meta || !have_bindings) throw ArchiveError("missing required section");
  registry = std::move(scratch);
  return proc;
}

/// File name used for an executable's archive.
inline std::string archive_file_name(const std::string& path) {
  std::string name;
  for (char c : path) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '.';
    name += keep ? c : '_';
  }
  while (!name.empty() && name.front() == '_') name.erase(name.begin());
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(path)));
  return name + "-" + std::string(hash, 8) + kArchiveExtension;
}

/// Called between writing the temporary file and renaming it into place.
using BeforeRenameHook = std::function<void(const std::filesystem::path& tmp)>;

/// Writes one archive per executable under `dir`, replacing each file
/// atomically. A failure on one file does not stop the others; all
/// failures are reported together in one ArchiveError afterwards.
inline std::vector<std::filesystem::path> save_profiles(const ProfileStore& store,
                                                        const std::filesystem::path& dir,
                                                        const BeforeRenameHook& hook = {}) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  std::string errors;
  std::error_code ec;
  fs::create_directories(dir, ec);
  for (const auto& [path, proc] : store.processes) {
    const fs::path target = dir / archive_file_name(path);
    const fs::path tmp = fs::path(target).concat(".tmp");
    try {
      const auto bytes = serialize_process(proc, store.registry);
      {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ArchiveError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw ArchiveError("write failed for " + tmp.string());
      }
      if (hook) hook(tmp);
      fs::rename(tmp, target, ec);
      if (ec) throw ArchiveError("rename to " + target.string() + " failed: " + ec.message());
      written.push_back(target);
    } catch (const std::exception& e) {
      fs::remove(tmp, ec);
      errors += std::string(errors.empty() ? "" : "; ") + e.what();
    }
  }
  if (!errors.empty()) throw ArchiveError(errors);
  return written;
}

inline std::vector<std::byte> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + p.string());
  std::vector<char> chars((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(chars.size());
  std::transform(chars.begin(), chars.end(), out.begin(), [](char c) { return std::byte(c); });
  return out;
}

struct LoadResult {
  ProfileStore store;
  std::vector<std::string> warnings;
};

/// Loads every archive under `dir`. A missing directory yields an empty
/// store; an unreadable or corrupt archive is skipped with a warning so
/// that executable starts training afresh.
inline LoadResult load_profiles(const std::filesystem::path& dir,
                                std::size_t symbol_capacity = SymbolRegistry::kDefaultCapacity) {
  namespace fs = std::filesystem;
  LoadResult result{ProfileStore(symbol_capacity), {}};
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return result;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == kArchiveExtension)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      auto proc = deserialize_process(read_file_bytes(f), result.store.registry);
      auto path = proc.path;
      result.store.processes.insert_or_assign(path, std::move(proc));
    } catch (const Error& e) {
      result.warnings.push_back(f.filename().string() + ": " + e.what() + " (starting fresh)");
    }
  }
  return result;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Human-readable rendering of an archive: a header per thread followed by
/// every set (current, previous, distance) triple, one per line, sorted by
/// key. Deterministic for a given archive.
inline std::string dump_profile(std::span<const std::byte> archive) {
  SymbolRegistry registry;
  const auto proc = deserialize_process(archive, registry);
  std::ostringstream os;
  os << "path\t" << proc.path << '\n';
  os << "aggregation\t" << (proc.aggregation == Aggregation::PerThread ? "per_thread" : "per_process")
     << '\n';
  auto dump_table = [&](const char* name, const LookaheadTable& t) {
    std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint32_t>> rows;
    for (const auto& tr : t.triples())
      rows.emplace_back(registry.key(tr.current), registry.key(tr.previous), tr.distance);
    std::sort(rows.begin(), rows.end());
    os << name << '\t' << rows.size() << '\n';
    for (const auto& [c, p, d] : rows) os << hex64(c) << '\t' << hex64(p) << '\t' << d << '\n';
  };
  for (const auto& p : proc.profiles) {
    os << "thread\t" << p.id.thread << "\tstate=" << to_string(p.state)
       << "\twin_size=" << p.window_size << "\ttrain_count=" << p.train_count
       << "\tlast_mod_count=" << p.last_mod_count << "\tnormal_count=" << p.normal_count
       << "\tsequences=" << p.sequences << "\ttest_count=" << p.test_count
       << "\tanomalies=" << p.anomalies << "\ttime_to_normal=" << p.time_to_normal / kMicrosPerSecond
       << (p.quarantined ? "\tquarantined" : "") << '\n';
    dump_table("train", p.train_table);
    dump_table("test", p.test_table);
  }
  return os.str();
}

}  // namespace th

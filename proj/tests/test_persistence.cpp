#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <tuple>

#include "support/temp_dir.hpp"
#include "th/archive.hpp"
#include "th/message_id.hpp"

using namespace th;
using th::testing::TempDir;

namespace {

// Registry-independent view of a profile: counters plus tables as key triples.
using KeyTriples = std::vector<std::tuple<std::uint64_t, std::uint64_t, std::uint32_t>>;

KeyTriples keyed(const LookaheadTable& t, const SymbolRegistry& reg) {
  KeyTriples out;
  for (const auto& tr : t.triples()) out.emplace_back(reg.key(tr.current), reg.key(tr.previous), tr.distance);
  std::sort(out.begin(), out.end());
  return out;
}

auto canonical(const ThreadProfile& p, const SymbolRegistry& reg) {
  return std::make_tuple(p.id, p.state, p.quarantined, p.window_size, p.train_count, p.last_mod_count,
                         p.normal_count, p.anomalies, p.sequences, p.test_count, p.started, p.created_at,
                         p.frozen_since, p.last_seen, p.time_to_normal, keyed(p.train_table, reg),
                         keyed(p.test_table, reg));
}

void expect_same(const ProcessProfile& a, const SymbolRegistry& ra, const ProcessProfile& b,
                 const SymbolRegistry& rb) {
  ASSERT_EQ(a.path, b.path);
  ASSERT_EQ(a.aggregation, b.aggregation);
  ASSERT_EQ(a.by_thread, b.by_thread);
  ASSERT_EQ(a.profiles.size(), b.profiles.size());
  for (std::size_t i = 0; i < a.profiles.size(); ++i)
    ASSERT_TRUE(canonical(a.profiles[i], ra) == canonical(b.profiles[i], rb)) << "profile " << i;
}

ProfileStore random_store(std::mt19937_64& rng, std::size_t processes) {
  ProfileStore store;
  for (std::size_t pi = 0; pi < processes; ++pi) {
    const auto agg = rng() % 3 == 0 ? Aggregation::PerProcess : Aggregation::PerThread;
    auto& proc = store.process("/proc/boot/p" + std::to_string(pi), agg);
    LifecycleConfig c;
    c.window_size = 1 + rng() % 32;
    c.min_train_count = rng() % 200;
    c.normal_wait = static_cast<Micros>(rng() % 5000);
    const auto threads = 1 + rng() % 6;
    for (std::size_t e = 0; e < 400 + rng() % 2000; ++e) {
      const auto tid = static_cast<std::uint16_t>(1 + rng() % threads);
      auto& prof = proc.bind({static_cast<std::uint16_t>(pi + 2), tid, 0}, c);
      const auto key = rng() % 2 ? trap_key(static_cast<std::uint32_t>(rng() % 40))
                                 : MessageId::encode(rng() % 8, 1, 0, rng() % 30).raw();
      ingest_event(prof, store.registry.intern(key), static_cast<Micros>(e) * 700,
                   rng() % 4 ? RuntimeMode::Learning : RuntimeMode::Detection, c);
    }
    if (rng() % 4 == 0) proc.profiles.back().quarantined = true;
  }
  return store;
}

}  // namespace

TEST(Archive, RandomStatesRoundTrip) {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 25; ++round) {
    auto store = random_store(rng, 1 + rng() % 4);
    for (const auto& [path, proc] : store.processes) {
      const auto bytes = serialize_process(proc, store.registry);
      SymbolRegistry fresh;
      const auto back = deserialize_process(bytes, fresh);
      expect_same(proc, store.registry, back, fresh);
      // re-serializing the loaded copy is byte-identical
      EXPECT_EQ(serialize_process(back, fresh), bytes);
    }
  }
}

TEST(Archive, SameRegistryKeepsIds) {
  std::mt19937_64 rng(5);
  auto store = random_store(rng, 1);
  const auto& proc = store.processes.begin()->second;
  auto reg = store.registry;
  const auto back = deserialize_process(serialize_process(proc, store.registry), reg);
  EXPECT_EQ(reg, store.registry);
  for (std::size_t i = 0; i < proc.profiles.size(); ++i) {
    EXPECT_EQ(back.profiles[i].train_table, proc.profiles[i].train_table);
    EXPECT_EQ(back.profiles[i].test_table, proc.profiles[i].test_table);
  }
}

TEST(Archive, RegistryIndicesStableAcrossSaveLoad) {
  ProfileStore store;
  auto& proc = store.process("/bin/a", Aggregation::PerThread);
  LifecycleConfig c;
  auto& p = proc.bind({2, 1, 0}, c);
  for (std::uint64_t k : {50u, 10u, 30u, 10u, 20u, 50u}) ingest_event(p, store.registry.intern(k), 0, RuntimeMode::Learning, c);
  TempDir dir;
  save_profiles(store, dir.path());
  auto loaded = load_profiles(dir.path());
  EXPECT_TRUE(loaded.warnings.empty());
  EXPECT_EQ(loaded.store.registry, store.registry);
}

TEST(Archive, SaveAndLoadDirectory) {
  std::mt19937_64 rng(3);
  auto store = random_store(rng, 3);
  TempDir dir;
  const auto files = save_profiles(store, dir.path());
  EXPECT_EQ(files.size(), 3u);
  for (const auto& f : files) {
    EXPECT_EQ(f.extension(), ".thp");
    EXPECT_FALSE(std::filesystem::exists(std::filesystem::path(f).concat(".tmp")));
  }
  auto loaded = load_profiles(dir.path());
  ASSERT_TRUE(loaded.warnings.empty());
  ASSERT_EQ(loaded.store.processes.size(), 3u);
  for (const auto& [path, proc] : store.processes)
    expect_same(proc, store.registry, loaded.store.processes.at(path), loaded.store.registry);
}

TEST(Archive, FileNameIsSanitizedAndHashed) {
  const auto a = archive_file_name("/proc/boot/devb-eide");
  EXPECT_EQ(a.rfind("proc_boot_devb-eide-", 0), 0u);
  EXPECT_EQ(a.size(), std::string("proc_boot_devb-eide-").size() + 8 + 4);
  EXPECT_NE(archive_file_name("/a/b"), archive_file_name("/a_b"));
}

TEST(Archive, InterruptedWriteKeepsPreviousFile) {
  ProfileStore store;
  LifecycleConfig c;
  auto& p = store.process("/bin/x", Aggregation::PerThread).bind({2, 1, 0}, c);
  ingest_event(p, store.registry.intern(1), 0, RuntimeMode::Learning, c);
  TempDir dir;
  const auto target = save_profiles(store, dir.path()).at(0);
  const auto before = read_file_bytes(target);

  ingest_event(p, store.registry.intern(2), 1, RuntimeMode::Learning, c);
  bool hook_ran = false;
  EXPECT_THROW(save_profiles(store, dir.path(),
                             [&](const std::filesystem::path& tmp) {
                               hook_ran = true;
                               EXPECT_TRUE(std::filesystem::exists(tmp));
                               // the previous archive is still in place while the new one is pending
                               EXPECT_EQ(read_file_bytes(target), before);
                               throw std::runtime_error("simulated crash before rename");
                             }),
               ArchiveError);
  EXPECT_TRUE(hook_ran);
  EXPECT_EQ(read_file_bytes(target), before);
  EXPECT_FALSE(std::filesystem::exists(std::filesystem::path(target).concat(".tmp")));
}

TEST(Archive, UnwritableDirectoryReportsError) {
  ProfileStore store;
  LifecycleConfig c;
  store.process("/bin/x", Aggregation::PerThread).bind({2, 1, 0}, c);
  TempDir dir;
  const auto blocker = dir / "file";
  std::ofstream(blocker) << "x";
  EXPECT_THROW(save_profiles(store, blocker / "sub"), ArchiveError);
}

TEST(Archive, TruncatedArchiveIsRejected) {
  std::mt19937_64 rng(8);
  auto store = random_store(rng, 1);
  const auto bytes = serialize_process(store.processes.begin()->second, store.registry);
  SymbolRegistry reg;
  reg.intern(777);
  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_process(std::span(bytes).first(cut), reg), ArchiveError) << cut;
    EXPECT_EQ(reg.size(), 1u);
  }
  auto extra = bytes;
  extra.push_back(std::byte{0});
  EXPECT_THROW(deserialize_process(extra, reg), ArchiveError);
}

TEST(Archive, ForeignVersionIsRejected) {
  ProfileStore store;
  store.process("/bin/x", Aggregation::PerThread);
  auto bytes = serialize_process(store.processes.begin()->second, store.registry);
  bytes[8] = std::byte{2};
  SymbolRegistry reg;
  EXPECT_THROW(deserialize_process(bytes, reg), ArchiveError);
}

TEST(Archive, CorruptFileIsSkippedOnLoad) {
  std::mt19937_64 rng(21);
  auto store = random_store(rng, 2);
  TempDir dir;
  const auto files = save_profiles(store, dir.path());
  {
    auto bytes = read_file_bytes(files[0]);
    std::ofstream out(files[0], std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 3));
  }
  auto loaded = load_profiles(dir.path());
  EXPECT_EQ(loaded.warnings.size(), 1u);
  EXPECT_EQ(loaded.store.processes.size(), 1u);
}

TEST(Archive, MissingDirectoryLoadsEmpty) {
  auto loaded = load_profiles("/nonexistent/th/profiles");
  EXPECT_TRUE(loaded.store.processes.empty());
  EXPECT_TRUE(loaded.warnings.empty());
}

TEST(Archive, DumpIsDeterministicAndSorted) {
  ProfileStore store;
  LifecycleConfig c;
  c.window_size = 2;
  auto& p = store.process("/bin/x", Aggregation::PerThread).bind({2, 1, 0}, c);
  for (std::uint64_t k : {0x30u, 0x10u, 0x20u}) ingest_event(p, store.registry.intern(k), 0, RuntimeMode::Learning, c);
  const auto bytes = serialize_process(store.processes.at("/bin/x"), store.registry);
  const auto text = dump_profile(bytes);
  EXPECT_EQ(text, dump_profile(bytes));
  EXPECT_EQ(text,
            "path\t/bin/x\n"
            "aggregation\tper_thread\n"
            "thread\t1\tstate=THAWED\twin_size=2\ttrain_count=3\tlast_mod_count=0\tnormal_count=0\t"
            "sequences=2\ttest_count=0\tanomalies=0\ttime_to_normal=0\n"
            "train\t3\n"
            "0000000000000010\t0000000000000030\t1\n"
            "0000000000000020\t0000000000000010\t1\n"
            "0000000000000020\t0000000000000030\t2\n"
            "test\t0\n");
}

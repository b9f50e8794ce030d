#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support/temp_dir.hpp"
#include "th/archive.hpp"
#include "th/sim/world.hpp"

using namespace th;
using namespace th::sim;
using th::testing::TempDir;

namespace {

Scenario scenario(const std::string& name) { return load_scenario(std::string(TH_SCENARIO_DIR) + "/" + name + ".json"); }

std::vector<std::uint32_t> heads_of(const VectorSink& sink, std::uint16_t process, std::uint16_t thread,
                                    std::uint8_t cls) {
  std::vector<std::uint32_t> out;
  for (const auto& it : sink.items)
    if (it.event.src_process == process && it.event.src_thread == thread && it.event.event_class == cls &&
        it.event.is_msg_send())
      out.push_back(MessageId(it.event.payload).msg_head());
  return out;
}

std::vector<std::byte> bytes_of(const VectorSink& sink) {
  std::vector<std::byte> out;
  for (const auto& it : sink.items) {
    const auto r = encode_trace_event(it.event);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

Scenario short_of(Scenario s, Micros duration) {
  s.duration_us = duration;
  return s;
}

// Single sequential client against a pool.
Scenario pool(double skew, std::uint64_t requests) {
  Scenario s;
  s.name = "pool";
  s.duration_us = 10'000'000;
  ProcessSpec server{"/bin/pool", "", {}, {}};
  ServerSpec srv;
  srv.workers = 3;
  srv.skew = skew;
  srv.handlers = {{0x40, {Step::sys(50)}, 0}, {0x41, {}, 0}};
  server.servers.push_back(srv);
  ProcessSpec client{"/bin/client", "", {}, {}};
  ClientSpec c;
  c.tid = 1;
  c.period_us = 500;
  c.iterations = requests;
  c.steps = {Step::send("/bin/pool", 0x40), Step::send("/bin/pool", 0x41)};
  client.clients.push_back(c);
  s.processes = {server, client};
  return s;
}

std::map<std::uint16_t, std::uint64_t> per_worker(const SimResult& r, std::uint16_t process) {
  std::map<std::uint16_t, std::uint64_t> out;
  for (const auto& [k, n] : r.stats.handled)
    if (k.process == process) out[k.thread] = n;
  return out;
}

}  // namespace

TEST(Simulator, ExitTracingAlternatesHeads) {
  const auto s = short_of(scenario("restart_client"), 2'000'000);
  VectorSink sink;
  World w(s, 1, TracePolicy::ExitOnly);
  const auto client = w.process_index("/proc/boot/test_client");
  w.run(sink);
  const auto heads = heads_of(sink, client, 1, 0x01);
  ASSERT_GT(heads.size(), 1000u);
  for (std::size_t i = 0; i < heads.size(); ++i) ASSERT_EQ(heads[i], i % 2 ? 1025u : 1024u) << i;
}

TEST(Simulator, EnterTracingWithRestartsRepeatsHeads) {
  const auto s = short_of(scenario("restart_client"), 2'000'000);
  VectorSink sink;
  World w(s, 1, TracePolicy::EnterOnly);
  const auto client = w.process_index("/proc/boot/test_client");
  w.run(sink);
  const auto heads = heads_of(sink, client, 1, 0x02);
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < heads.size(); ++i) repeats += heads[i] == heads[i - 1];
  EXPECT_GT(repeats, 0u);
  EXPECT_LT(static_cast<double>(repeats) / static_cast<double>(heads.size()), 0.1);
}

TEST(Simulator, SameSeedSameBytes) {
  const auto s = short_of(scenario("fault_base"), 1'000'000);
  VectorSink a, b, c;
  run_scenario(s, 9, a);
  run_scenario(s, 9, b);
  run_scenario(s, 10, c);
  EXPECT_EQ(bytes_of(a), bytes_of(b));
  EXPECT_NE(bytes_of(a), bytes_of(c));

  TempDir dir;
  simulate_to_files(s, 9, dir / "one");
  simulate_to_files(s, 9, dir / "two");
  EXPECT_EQ(read_file_bytes(dir / "one"), read_file_bytes(dir / "two"));
  EXPECT_EQ(read_file_bytes(dir / "one.clock"), read_file_bytes(dir / "two.clock"));
  EXPECT_EQ(read_file_bytes(dir / "one"), bytes_of(a));
}

TEST(Simulator, ClockIsMonotone) {
  VectorSink sink;
  run_scenario(short_of(scenario("thread_pool"), 500'000), 4, sink);
  for (std::size_t i = 1; i < sink.items.size(); ++i) ASSERT_LE(sink.items[i - 1].time, sink.items[i].time);
}

TEST(Simulator, IndicesFollowBootOrder) {
  const auto s = scenario("fault_base");
  World w(s, 1);
  EXPECT_EQ(w.process_index(kProcessManagerPath), 1);
  for (std::size_t i = 0; i < s.processes.size(); ++i)
    EXPECT_EQ(w.process_index(s.processes[i].path), i + 2) << s.processes[i].path;

  auto swapped = s;
  FaultAction reorder;
  reorder.kind = FaultKind::ReorderBoot;
  reorder.target = s.processes[0].path;
  reorder.order = {s.processes[1].path, s.processes[0].path};
  for (std::size_t i = 2; i < s.processes.size(); ++i) reorder.order.push_back(s.processes[i].path);
  swapped.faults.push_back(reorder);
  World r(swapped, 1);
  EXPECT_EQ(r.process_index(s.processes[0].path), w.process_index(s.processes[1].path));
  EXPECT_EQ(r.process_index(s.processes[1].path), w.process_index(s.processes[0].path));
  EXPECT_EQ(r.process_index(s.processes[2].path), w.process_index(s.processes[2].path));
}

TEST(Simulator, EachSpawnSendsOneProcSpawn) {
  const auto s = short_of(scenario("fault_base"), 200'000);
  VectorSink sink;
  run_scenario(s, 2, sink);
  std::size_t spawns = 0;
  for (const auto& it : sink.items) {
    if (!it.event.is_msg_send()) continue;
    const MessageId id(it.event.payload);
    if (id.pid_to() == 1 && id.msg_head() == 0x0010) ++spawns;
  }
  EXPECT_EQ(spawns, s.processes.size());
}

TEST(Simulator, PinnedPoolUsesOneWorker) {
  const auto s = pool(1.0, 400);
  World w(s, 3);
  VectorSink sink;
  const auto r = w.run(sink);
  const auto counts = per_worker(r, w.process_index("/bin/pool"));
  ASSERT_EQ(counts.size(), 1u);
  EXPECT_EQ(counts.begin()->first, 1);
  EXPECT_EQ(counts.begin()->second, 800u);
}

TEST(Simulator, UniformPoolUsesEveryWorker) {
  World w(pool(0.0, 400), 3);
  VectorSink sink;
  const auto counts = per_worker(w.run(sink), w.process_index("/bin/pool"));
  EXPECT_EQ(counts.size(), 3u);
}

TEST(Simulator, SeedChangesDistributionNotHeads) {
  const auto s = pool(0.5, 400);
  VectorSink a, b;
  World wa(s, 1), wb(s, 2);
  const auto ra = wa.run(a);
  const auto rb = wb.run(b);
  const auto idx = wa.process_index("/bin/pool");
  EXPECT_NE(per_worker(ra, idx), per_worker(rb, idx));
  auto heads = [](const VectorSink& v) {
    std::set<std::uint64_t> out;
    for (const auto& it : v.items)
      if (it.event.is_msg_send()) out.insert(MessageId(it.event.payload).msg_head());
    return out;
  };
  EXPECT_EQ(heads(a), heads(b));
}

TEST(Simulator, HeadChoiceIsSeededAndCoversTheList) {
  auto s = pool(1.0, 2000);
  auto& step = s.processes[1].clients[0].steps;
  step = {Step::send("/bin/pool", 0)};
  step[0].heads = {0x40, 0x41};
  auto run = [&](std::uint64_t seed) {
    VectorSink sink;
    World w(s, seed);
    w.run(sink);
    return heads_of(sink, w.process_index("/bin/client"), 1, 0x01);
  };
  const auto a = run(5);
  ASSERT_EQ(a.size(), 2000u);
  EXPECT_EQ(a, run(5));
  EXPECT_NE(a, run(6));
  const auto ones = static_cast<double>(std::count(a.begin(), a.end(), 0x41u));
  EXPECT_NEAR(ones / 2000.0, 0.5, 3 * std::sqrt(0.25 / 2000.0));
  EXPECT_EQ(std::set<std::uint32_t>(a.begin(), a.end()), (std::set<std::uint32_t>{0x40, 0x41}));
}

TEST(Simulator, ConservationAndExitCount) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    VectorSink sink;
    const auto r = run_scenario(short_of(scenario("thread_pool"), 2'000'000), seed, sink);
    EXPECT_EQ(r.stats.dangling_sends, 0u);
    EXPECT_EQ(r.stats.sends, r.stats.send_completions + r.stats.in_flight);
    EXPECT_GE(r.stats.receives, r.stats.send_completions);
    EXPECT_EQ(r.stats.exit_events, r.stats.completed_calls);
    EXPECT_EQ(r.stats.records, sink.items.size());
    EXPECT_EQ(r.stats.enter_events, 0u);
  }
}

TEST(Simulator, EnterCountAndRestartCalibration) {
  const auto s = scenario("restart_client");
  VectorSink sink;
  const auto r = run_scenario(short_of(s, 60'000'000), 17, TracePolicy::EnterOnly, sink);
  EXPECT_GE(r.stats.enter_events, r.stats.completed_calls);
  const auto calls = static_cast<double>(r.stats.enter_events - r.stats.restarts);
  ASSERT_GE(calls, 1e5);
  const double p = s.restart_probability;
  const double observed = static_cast<double>(r.stats.restarts) / calls;
  EXPECT_LE(std::abs(observed - p), 3 * std::sqrt(p * (1 - p) / calls)) << observed;
}

TEST(Simulator, BothPolicyFramesAtSixteenBytes) {
  TempDir dir;
  auto s = short_of(scenario("fault_base"), 500'000);
  s.tracing = TracePolicy::Both;
  s.restart_probability = 0.05;
  const auto r = simulate_to_files(s, 5, dir / "t");
  const auto bytes = read_file_bytes(dir / "t");
  ASSERT_EQ(bytes.size() % kRecordSize, 0u);
  ASSERT_EQ(bytes.size() / kRecordSize, r.stats.records);
  std::size_t enters = 0, exits = 0;
  for (std::size_t off = 0; off < bytes.size(); off += kRecordSize) {
    const auto e = decode_trace_event(std::span(bytes).subspan(off, kRecordSize), off);
    (e.event_class == 0x02 ? enters : exits)++;
  }
  EXPECT_EQ(enters, r.stats.enter_events);
  EXPECT_EQ(exits, r.stats.exit_events);
  EXPECT_GT(enters, 0u);
}

TEST(Faults, NovelMessageIsLabelled) {
  auto s = short_of(scenario("fault_base"), 1'000'000);
  FaultAction f;
  f.at_us = 500'000;
  f.kind = FaultKind::NovelMessage;
  f.target = "/usr/bin/sensor";
  f.tid = 1;
  f.head = 0x777;
  s.faults.push_back(f);
  VectorSink sink;
  run_scenario(s, 1, sink);
  std::size_t labelled = 0, novel = 0;
  for (const auto& it : sink.items) {
    if (it.label == FaultKind::NovelMessage) ++labelled;
    if (it.event.is_msg_send() && MessageId(it.event.payload).msg_head() == 0x777) {
      ++novel;
      EXPECT_GE(it.time, f.at_us);
      EXPECT_EQ(it.label, FaultKind::NovelMessage);
    }
  }
  EXPECT_GE(labelled, 1u);
  EXPECT_EQ(novel, 1u);
}

TEST(Faults, RemoveResourceSwitchesToErrorReplies) {
  auto s = short_of(scenario("fault_base"), 1'000'000);
  FaultAction f;
  f.at_us = 400'000;
  f.kind = FaultKind::RemoveResource;
  f.target = "/proc/boot/camera";
  s.faults.push_back(f);
  World w(s, 1);
  const auto camera = w.process_index("/proc/boot/camera");
  VectorSink sink;
  w.run(sink);
  std::size_t before = 0, after = 0, retries = 0;
  for (const auto& it : sink.items) {
    if (it.event.kcall_num == kcall::kMsgSendv && it.event.src_process != camera && it.event.is_msg_send() &&
        MessageId(it.event.payload).msg_head() == 0xDEAD)
      FAIL() << "error head on a request";
    if (it.event.src_process == camera && it.event.kcall_num == kcall::kMsgReplyv) {
      const auto head = MessageId(it.event.payload).msg_head();
      if (it.time < f.at_us) {
        before += head == 0xDEAD;
      } else {
        EXPECT_EQ(head, 0xDEADu);
        EXPECT_EQ(it.label, FaultKind::RemoveResource);
        ++after;
      }
    }
    if (!it.event.is_msg_send() && it.event.payload == 43) ++retries;
  }
  EXPECT_EQ(before, 0u);
  EXPECT_GT(after, 0u);
  EXPECT_GT(retries, 0u);
}

TEST(Faults, OverheatSpawnsUnseenThread) {
  const auto base = short_of(scenario("fault_base"), 1'000'000);
  auto s = base;
  FaultAction f;
  f.at_us = 300'000;
  f.kind = FaultKind::Overheat;
  f.target = "/proc/boot/screen";
  s.faults.push_back(f);
  VectorSink quiet, hot;
  World w(base, 1);
  const auto screen = w.process_index("/proc/boot/screen");
  w.run(quiet);
  run_scenario(s, 1, hot);
  auto tids = [&](const VectorSink& v) {
    std::set<std::uint16_t> out;
    for (const auto& it : v.items)
      if (it.event.src_process == screen) out.insert(it.event.src_thread);
    return out;
  };
  const auto before = tids(quiet), after = tids(hot);
  ASSERT_EQ(after.size(), before.size() + 1);
  const auto extra = *after.rbegin();
  EXPECT_FALSE(before.count(extra));
  for (const auto& it : hot.items) {
    if (it.event.src_process == screen && it.event.src_thread == extra) {
      EXPECT_EQ(it.label, FaultKind::Overheat);
    }
  }
}

TEST(Faults, InputBurstWakesDormantThread) {
  auto s = short_of(scenario("fault_base"), 1'000'000);
  FaultAction f;
  f.at_us = 600'000;
  f.kind = FaultKind::InputBurst;
  f.target = "/proc/boot/io-hid";
  f.tid = 1;
  f.count = 3;
  s.faults.push_back(f);
  World w(s, 1);
  const auto hid = w.process_index("/proc/boot/io-hid");
  VectorSink sink;
  w.run(sink);
  std::size_t sends = 0;
  for (const auto& it : sink.items)
    if (it.event.src_process == hid && it.event.src_thread == 1) {
      EXPECT_GE(it.time, f.at_us);
      EXPECT_EQ(it.label, FaultKind::InputBurst);
      sends += it.event.is_msg_send();
    }
  EXPECT_EQ(sends, 6u);
}

TEST(Faults, TruthSidecarMatchesLabels) {
  auto s = short_of(scenario("fault_base"), 1'000'000);
  FaultAction f;
  f.at_us = 500'000;
  f.kind = FaultKind::SpawnExtraThread;
  f.target = "/usr/bin/sensor";
  s.faults.push_back(f);
  TempDir dir;
  const auto r = simulate_to_files(s, 1, dir / "t");
  std::ifstream in(dir / "t.truth");
  const auto truth = read_truth(in);
  EXPECT_EQ(truth.size(), r.stats.labelled);
  ASSERT_FALSE(truth.empty());
  for (const auto& l : truth) {
    EXPECT_EQ(l.offset % kRecordSize, 0u);
    EXPECT_EQ(l.kind, "SPAWN_EXTRA_THREAD");
  }
  std::ifstream procs(dir / "t.procs");
  EXPECT_EQ(read_process_table(procs), r.processes);
}

TEST(Validation, RejectsBadScenarios) {
  EXPECT_THROW(parse_scenario("{"), ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a", "threads": [{"tid": 1,
      "steps": [{"send": "/missing", "head": 1}]}]}]})"),
               ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a", "threads": [{"tid": 4096}]}]})"),
               ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a"}],
      "faults": [{"kind": "INPUT_BURST", "target": "/a", "tid": 1}]})"),
               ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a"}],
      "faults": [{"kind": "MELTDOWN", "target": "/a"}]})"),
               ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a"}],
      "faults": [{"kind": "OVERHEAT", "target": "/b"}]})"),
               ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a", "threads": [{"tid": 1,
      "steps": [{"send": "/proc/boot/procnto", "heads": []}]}]}]})"),
               ScenarioError);
  EXPECT_NO_THROW(parse_scenario(R"({"duration_ms": 1, "processes": [{"path": "/a", "threads": [{"tid": "0x10",
      "steps": [{"send": "/proc/boot/procnto", "head": "0x0010"}]}]}]})"));
}

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "th/errors.hpp"
#include "th/message_id.hpp"
#include "th/profile.hpp"
#include "th/sim/scenario.hpp"
#include "th/trace_event.hpp"
#include "th/trace_io.hpp"

namespace th::sim {

using Label = std::optional<FaultKind>;

/// Receives every emitted record in emission order.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void emit(const TraceEvent& e, Micros time, Label label) = 0;
};

class VectorSink final : public TraceSink {
 public:
  struct Item {
    TraceEvent event;
    Micros time = 0;
    Label label;
  };
  void emit(const TraceEvent& e, Micros time, Label label) override { items.push_back({e, time, label}); }
  std::vector<Item> items;
};

/// Writes `<trace>`, `<trace>.clock` and `<trace>.truth`.
class FileSink final : public TraceSink {
 public:
  explicit FileSink(const std::filesystem::path& trace)
      : records_(trace, std::ios::binary | std::ios::trunc),
        clock_(sidecar(trace, ".clock"), std::ios::binary | std::ios::trunc),
        truth_(sidecar(trace, ".truth"), std::ios::trunc),
        writer_(records_, &clock_) {
    if (!records_ || !clock_ || !truth_) throw Error("cannot create trace files at " + trace.string());
  }

  void emit(const TraceEvent& e, Micros time, Label label) override {
    if (label) truth_ << writer_.count() * kRecordSize << '\t' << to_string(*label) << '\n';
    writer_.write(e, time);
  }

  void close() {
    records_.flush();
    clock_.flush();
    truth_.flush();
    if (!records_ || !clock_ || !truth_) throw Error("trace write failed");
  }

  std::uint64_t count() const noexcept { return writer_.count(); }

 private:
  std::ofstream records_;
  std::ofstream clock_;
  std::ofstream truth_;
  TraceWriter writer_;
};

struct ThreadKey {
  std::uint16_t process = 0;
  std::uint16_t thread = 0;
  auto operator<=>(const ThreadKey&) const = default;
};

struct SimStats {
  std::uint64_t records = 0;
  std::uint64_t enter_events = 0;
  std::uint64_t exit_events = 0;
  std::uint64_t completed_calls = 0;
  std::uint64_t restarts = 0;         // duplicate ENTER events drawn
  std::uint64_t sends = 0;            // message sends issued
  std::uint64_t receives = 0;         // messages taken by a receiver (server or process manager)
  std::uint64_t send_completions = 0; // sends whose EXIT side completed
  std::uint64_t dangling_sends = 0;   // completions without a prior receive; always 0
  std::uint64_t in_flight = 0;        // sends still unanswered when the run ended
  std::uint64_t labelled = 0;
  std::map<ThreadKey, std::uint64_t> thread_records;
  std::map<ThreadKey, std::uint64_t> handled;  // requests handled per server worker
};

struct SimResult {
  ProcessTable processes;
  SimStats stats;
  Micros end_time = 0;
};

/// Seeded discrete-event model of a message-passing microkernel. Runs on
/// one thread; all randomness comes from the seed.
class World {
 public:
  World(Scenario scenario, std::uint64_t seed) : World(scenario, seed, scenario.tracing) {}

  World(Scenario scenario, std::uint64_t seed, TracePolicy policy)
      : sc_(std::move(scenario)), policy_(policy), sched_rng_(seed), restart_rng_(seed ^ 0x9E3779B97F4A7C15ull),
        choice_rng_(seed ^ 0xC2B2AE3D27D4EB4Full) {
    validate(sc_);
    assign_indices();
  }

  // threads point into the owned scenario
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  /// Process index of `path` under this run's boot order.
  std::uint16_t process_index(std::string_view path) const {
    if (path == kProcessManagerPath) return MessageId::kProcessManager;
    for (const auto& p : procs_)
      if (p.path == path) return p.index;
    throw ScenarioError("unknown process '" + std::string(path) + "'");
  }

  ProcessTable process_table() const {
    ProcessTable t{{static_cast<std::uint16_t>(MessageId::kProcessManager), kProcessManagerPath}};
    for (const auto& p : procs_) t[p.index] = p.path;
    return t;
  }

  SimResult run(TraceSink& sink) {
    if (ran_) throw ScenarioError("a world runs once");
    ran_ = true;
    sink_ = &sink;
    for (std::size_t slot = 0; slot < procs_.size(); ++slot)
      schedule(static_cast<Micros>(slot) * sc_.spawn_gap_us, Pending::Spawn, slot);
    for (std::size_t i = 0; i < sc_.faults.size(); ++i)
      if (sc_.faults[i].kind != FaultKind::ReorderBoot) schedule(sc_.faults[i].at_us, Pending::Fault, i);

    while (!queue_.empty() && queue_.top().time <= sc_.duration_us) {
      const Pending p = queue_.top();
      queue_.pop();
      now_ = p.time;
      switch (p.kind) {
        case Pending::Spawn: spawn_process(p.index); break;
        case Pending::Fault: inject_fault(sc_.faults[p.index]); break;
        case Pending::Resume: resume(threads_[p.index]); break;
      }
    }
    for (const auto& t : threads_)
      if (t.state == State::BlockedSend) ++stats_.in_flight;
    return SimResult{process_table(), stats_, now_};
  }

 private:
  enum class State : std::uint8_t { Unborn, Ready, Sleeping, BlockedSend, Idle, Dormant, Done };

  struct Message {
    std::size_t sender = 0;  // thread slot
    std::uint32_t head = 0;
    Label label;
  };

  struct Channel {
    ServerSpec spec;
    std::vector<std::size_t> workers;  // thread slots in tid order
    std::deque<Message> queue;
    bool removed = false;
    std::uint32_t removed_head = 0;  // 0: every request fails
  };

  struct Proc {
    std::string path;
    std::string parent;
    std::uint16_t index = 0;
    const ProcessSpec* spec = nullptr;
    std::deque<Channel> channels;
    std::vector<std::size_t> threads;
    bool alive = false;
  };

  struct Frame {
    const std::vector<Step>* steps = nullptr;
    std::size_t pc = 0;
    Label label;
  };

  struct Thread {
    std::size_t slot = 0;
    std::size_t proc = 0;
    std::uint16_t tid = 0;
    const ClientSpec* client = nullptr;  // null for server workers
    std::size_t channel = 0;             // worker: channel index in its process
    State state = State::Unborn;
    std::vector<Frame> stack;
    Label standing;  // labels every event of a thread created or activated by a fault

    // client iteration bookkeeping
    bool in_iteration = false;
    Micros iter_start = 0;
    std::uint64_t iterations_left = 0;  // 0 with `bounded` false: unbounded
    bool bounded = false;
    std::vector<Step> novel;  // one-shot script queued by a fault

    // outstanding send
    TraceEvent send_event;
    Label send_label;
    const Step* send_step = nullptr;
    bool send_received = false;

    // worker request in service
    std::optional<Message> request;
    std::uint32_t reply_head = 0;
    bool reply_error = false;
    Label request_label;

    bool startup_pending = false;  // extra threads announce themselves with one syscall
  };

  struct Pending {
    enum Kind : std::uint8_t { Spawn, Fault, Resume };
    Micros time = 0;
    std::uint64_t seq = 0;
    Kind kind = Resume;
    std::size_t index = 0;
    bool operator>(const Pending& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
  };

  static constexpr std::uint32_t kThreadCtlSyscall = 31;

  // -- setup ----------------------------------------------------------------

  void assign_indices() {
    std::vector<std::string> order;
    for (const auto& p : sc_.processes) order.push_back(p.path);
    for (const auto& f : sc_.faults) {
      if (f.kind != FaultKind::ReorderBoot) continue;
      reordered_ = true;
      if (!f.order.empty()) {
        order = f.order;
      } else if (order.size() > 1) {
        std::rotate(order.begin(), order.begin() + 1, order.end());
      }
    }
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      Proc p;
      p.spec = sc_.find(order[slot]);
      p.path = p.spec->path;
      p.parent = p.spec->parent;
      p.index = static_cast<std::uint16_t>(slot + 2);
      for (const auto& srv : p.spec->servers) p.channels.push_back(Channel{srv, {}, {}, false, 0});
      procs_.push_back(std::move(p));
    }
    for (std::size_t pi = 0; pi < procs_.size(); ++pi) {
      auto& p = procs_[pi];
      for (std::size_t ci = 0; ci < p.channels.size(); ++ci) {
        const auto& srv = p.channels[ci].spec;
        for (std::uint16_t w = 0; w < srv.workers; ++w)
          add_thread(pi, static_cast<std::uint16_t>(srv.first_tid + w), nullptr, ci);
      }
      for (const auto& c : p.spec->clients) add_thread(pi, c.tid, &c, 0);
    }
  }

  std::size_t add_thread(std::size_t pi, std::uint16_t tid, const ClientSpec* client, std::size_t ci) {
    Thread t;
    t.slot = threads_.size();
    t.proc = pi;
    t.tid = tid;
    t.client = client;
    t.channel = ci;
    threads_.push_back(std::move(t));
    const auto slot = threads_.size() - 1;
    procs_[pi].threads.push_back(slot);
    if (!client) {
      auto& workers = procs_[pi].channels[ci].workers;
      workers.push_back(slot);
      std::sort(workers.begin(), workers.end(),
                [&](std::size_t a, std::size_t b) { return threads_[a].tid < threads_[b].tid; });
    }
    return slot;
  }

  std::size_t find_proc(std::string_view path) const {
    for (std::size_t i = 0; i < procs_.size(); ++i)
      if (procs_[i].path == path) return i;
    throw ScenarioError("unknown process '" + std::string(path) + "'");
  }

  Thread* find_thread(std::size_t pi, std::uint16_t tid) {
    for (auto slot : procs_[pi].threads)
      if (threads_[slot].tid == tid) return &threads_[slot];
    return nullptr;
  }

  void schedule(Micros at, Pending::Kind kind, std::size_t index) {
    queue_.push(Pending{at, seq_++, kind, index});
  }

  Label boot_label() const { return reordered_ ? Label{FaultKind::ReorderBoot} : Label{}; }

  // -- emission -------------------------------------------------------------

  bool traces_enter() const { return policy_ != TracePolicy::ExitOnly; }
  bool traces_exit() const { return policy_ != TracePolicy::EnterOnly; }

  void put(TraceEvent e, Label label) {
    if (!label) label = boot_label();
    const ThreadKey key{e.src_process, e.src_thread};
    ++stats_.records;
    ++stats_.thread_records[key];
    if (label) ++stats_.labelled;
    sink_->emit(e, now_, label);
  }

  // Call entry: one ENTER record plus, on a drawn restart, a duplicate.
  void enter(TraceEvent e, Label label) {
    std::bernoulli_distribution restart(sc_.restart_probability);
    const bool again = sc_.restart_probability > 0 && restart(restart_rng_);
    if (again) ++stats_.restarts;
    if (!traces_enter()) return;
    e.event_class = static_cast<std::uint8_t>(EventClass::KernelCallEnter);
    put(e, label);
    ++stats_.enter_events;
    if (again) {
      put(e, label);
      ++stats_.enter_events;
    }
  }

  void exit(TraceEvent e, Label label) {
    ++stats_.completed_calls;
    if (!traces_exit()) return;
    e.event_class = static_cast<std::uint8_t>(EventClass::KernelCallExit);
    put(e, label);
    ++stats_.exit_events;
  }

  TraceEvent trap_event(const Thread& t, std::uint16_t kcall_num, std::uint32_t number) const {
    return TraceEvent::trap(EventClass::KernelCallExit, kcall_num, procs_[t.proc].index, t.tid, 0, number);
  }

  TraceEvent message_event(const Thread& t, std::uint16_t kcall_num, std::uint32_t pid_to, std::uint32_t chid,
                           std::uint32_t nid, std::uint32_t head) const {
    return TraceEvent::message(EventClass::KernelCallExit, kcall_num, procs_[t.proc].index, t.tid, 0,
                               MessageId::encode(pid_to, chid, nid, head, HeaderPolicy::Bits32));
  }

  // -- processes and threads ------------------------------------------------

  /// Boots process `slot`: the parent sends PROC_SPAWN to the process
  /// manager, then the new process's threads come alive.
  void spawn_process(std::size_t slot) {
    auto& p = procs_[slot];
    if (p.alive) throw ScenarioError("boot slot reused");
    p.alive = true;
    Thread manager;  // stands in for the process manager's own thread when there is no parent
    const Thread* parent = nullptr;
    if (!p.parent.empty()) {
      const auto pi = find_proc(p.parent);
      for (auto ts : procs_[pi].threads)
        if (!parent || threads_[ts].tid < parent->tid) parent = &threads_[ts];
    }
    TraceEvent spawn = parent ? message_event(*parent, kcall::kMsgSendv, MessageId::kProcessManager, 1, 0,
                                              kProcSpawnHead)
                              : TraceEvent::message(EventClass::KernelCallExit, kcall::kMsgSendv,
                                                    MessageId::kProcessManager, 1, 0,
                                                    MessageId::encode(MessageId::kProcessManager, 1, 0,
                                                                      kProcSpawnHead, HeaderPolicy::Bits32));
    ++stats_.sends;
    enter(spawn, {});
    ++stats_.receives;
    ++stats_.send_completions;
    exit(spawn, {});

    for (auto ts : p.threads) start_thread(ts, now_);
  }

  void start_thread(std::size_t slot, Micros at) {
    auto& t = threads_[slot];
    if (!t.client) {
      t.state = State::Ready;
      schedule(at, Pending::Resume, slot);
      return;
    }
    if (t.client->dormant) {
      t.state = State::Dormant;
      return;
    }
    t.bounded = t.client->iterations > 0;
    t.iterations_left = t.client->iterations;
    t.state = State::Ready;
    schedule(at + t.client->start_us, Pending::Resume, slot);
  }

  /// New thread in `pi` with the next free tid. Workers join the first
  /// channel's pool; otherwise the first client's script is replicated.
  void spawn_extra_thread(std::size_t pi, FaultKind why) {
    auto& p = procs_[pi];
    std::uint16_t tid = 0;
    for (auto ts : p.threads) tid = std::max(tid, threads_[ts].tid);
    ++tid;
    if (tid > 0xFFF) throw ScenarioError(p.path + ": no thread index left for an extra thread");
    const ClientSpec* model = nullptr;
    if (p.channels.empty()) {
      model = &p.spec->clients.front();
      for (const auto& c : p.spec->clients)
        if (!c.dormant) {
          model = &c;
          break;
        }
    }
    const auto slot = add_thread(pi, tid, model, 0);
    auto& t = threads_[slot];
    t.standing = why;
    t.startup_pending = true;
    if (!p.alive) return;
    // starts right away rather than at the script's offset
    t.state = State::Ready;
    if (model) {
      t.bounded = model->iterations > 0;
      t.iterations_left = model->iterations;
    }
    schedule(now_, Pending::Resume, slot);
  }

  // -- faults ---------------------------------------------------------------

  void inject_fault(const FaultAction& f) {
    const auto pi = find_proc(f.target);
    auto& p = procs_[pi];
    switch (f.kind) {
      case FaultKind::RemoveResource:
        for (auto& ch : p.channels) {
          ch.removed = true;
          ch.removed_head = f.head;
        }
        break;
      case FaultKind::NovelMessage: {
        auto* t = find_thread(pi, f.tid);
        Step s = Step::send(f.dest.empty() ? kProcessManagerPath : f.dest, f.head, f.chid);
        t->novel = {std::move(s)};
        break;
      }
      case FaultKind::InputBurst: {
        auto* t = find_thread(pi, f.tid);
        if (t->state != State::Dormant) break;
        t->state = State::Ready;
        t->bounded = true;
        t->iterations_left = f.count;
        t->standing = FaultKind::InputBurst;
        schedule(now_, Pending::Resume, t->slot);
        break;
      }
      case FaultKind::Overheat:
        for (auto& ch : p.channels) {
          ch.spec.service_us = static_cast<Micros>(static_cast<double>(ch.spec.service_us) * f.factor);
          ch.spec.skew = 0.0;
        }
        spawn_extra_thread(pi, FaultKind::Overheat);
        break;
      case FaultKind::SpawnExtraThread:
        spawn_extra_thread(pi, FaultKind::SpawnExtraThread);
        break;
      case FaultKind::ReorderBoot:
        break;
    }
  }

  // -- execution ------------------------------------------------------------

  static std::size_t slot_of(const Thread& t) { return t.slot; }

  Label label_of(const Thread& t, const Frame& f) const { return f.label ? f.label : t.standing; }

  void resume(Thread& t) {
    if (t.state == State::Done || t.state == State::Dormant || t.state == State::BlockedSend ||
        t.state == State::Idle)
      return;
    t.state = State::Ready;
    if (t.startup_pending) {
      t.startup_pending = false;
      const auto e = trap_event(t, kcall::kTrap, kThreadCtlSyscall);
      enter(e, t.standing);
      exit(e, t.standing);
      schedule(now_ + sc_.syscall_us, Pending::Resume, slot_of(t));
      return;
    }
    if (!t.client) {
      if (t.stack.empty()) {
        if (t.request) finish_request(t);
        else become_idle(t);
        return;
      }
    } else if (t.stack.empty()) {
      if (t.in_iteration) {
        end_iteration(t);
        return;
      }
      begin_iteration(t);
    }
    step(t);
  }

  void begin_iteration(Thread& t) {
    t.in_iteration = true;
    t.iter_start = now_;
    t.stack.push_back(Frame{&t.client->steps, 0, {}});
    if (!t.novel.empty()) {
      novel_steps_.push_back(std::move(t.novel));
      t.novel.clear();
      t.stack.push_back(Frame{&novel_steps_.back(), 0, FaultKind::NovelMessage});
    }
  }

  void end_iteration(Thread& t) {
    t.in_iteration = false;
    if (t.bounded && --t.iterations_left == 0) {
      t.state = t.standing == FaultKind::InputBurst ? State::Dormant : State::Done;
      if (t.state == State::Dormant) t.standing.reset();
      return;
    }
    Micros next = t.iter_start + t.client->period_us;
    if (t.client->jitter_us > 0)
      next += std::uniform_int_distribution<Micros>(0, t.client->jitter_us)(sched_rng_);
    t.state = State::Sleeping;
    schedule(std::max(next, now_), Pending::Resume, slot_of(t));
  }

  /// Runs the next step of the top frame until the thread blocks or sleeps.
  void step(Thread& t) {
    while (!t.stack.empty() && t.stack.back().pc >= t.stack.back().steps->size()) t.stack.pop_back();
    if (t.stack.empty()) {
      schedule(now_, Pending::Resume, slot_of(t));
      return;
    }
    auto& f = t.stack.back();
    const Step& s = (*f.steps)[f.pc++];
    const Label label = label_of(t, f);
    switch (s.kind) {
      case Step::Kind::Syscall: {
        const auto e = trap_event(t, kcall::kTrap, s.syscall);
        enter(e, label);
        exit(e, label);
        schedule(now_ + sc_.syscall_us, Pending::Resume, slot_of(t));
        return;
      }
      case Step::Kind::Sleep:
        t.state = State::Sleeping;
        schedule(now_ + s.sleep_us, Pending::Resume, slot_of(t));
        return;
      case Step::Kind::Send:
        send(t, s, label);
        return;
    }
  }

  void send(Thread& t, const Step& s, Label label) {
    ++stats_.sends;
    const auto head =
        s.heads.empty() ? s.head : s.heads[std::uniform_int_distribution<std::size_t>(0, s.heads.size() - 1)(choice_rng_)];
    if (s.target == kProcessManagerPath) {
      const auto e = message_event(t, kcall::kMsgSendv, MessageId::kProcessManager, s.chid, s.nid, head);
      enter(e, label);
      ++stats_.receives;
      ++stats_.send_completions;
      exit(e, label);
      schedule(now_ + sc_.syscall_us, Pending::Resume, slot_of(t));
      return;
    }
    const auto pi = find_proc(s.target);
    auto& dest = procs_[pi];
    t.send_event = message_event(t, kcall::kMsgSendv, dest.index, s.chid, s.nid, head);
    t.send_label = label;
    t.send_step = &s;
    t.send_received = false;
    t.state = State::BlockedSend;
    enter(t.send_event, label);
    for (std::size_t ci = 0; ci < dest.channels.size(); ++ci) {
      if (dest.channels[ci].spec.chid != s.chid) continue;
      dest.channels[ci].queue.push_back(Message{slot_of(t), head, label});
      dispatch(pi, ci);
      return;
    }
  }

  void become_idle(Thread& w) {
    w.state = State::Idle;
    w.request.reset();
    enter(trap_event(w, kcall::kMsgReceivev, kcall::kMsgReceivev), w.standing);
    dispatch(w.proc, w.channel);
  }

  /// Hands queued requests to idle workers. With probability `skew` the
  /// lowest-numbered idle worker wins; otherwise the choice is uniform.
  void dispatch(std::size_t pi, std::size_t ci) {
    auto& ch = procs_[pi].channels[ci];
    while (!ch.queue.empty()) {
      std::vector<std::size_t> idle;
      for (auto w : ch.workers)
        if (threads_[w].state == State::Idle) idle.push_back(w);
      if (idle.empty()) return;
      std::size_t pick = 0;
      if (idle.size() > 1) {
        const bool pinned = std::uniform_real_distribution<double>(0.0, 1.0)(sched_rng_) < ch.spec.skew;
        if (!pinned) pick = std::uniform_int_distribution<std::size_t>(0, idle.size() - 1)(sched_rng_);
      }
      Message m = std::move(ch.queue.front());
      ch.queue.pop_front();
      start_request(threads_[idle[pick]], ch, std::move(m));
    }
  }

  void start_request(Thread& w, Channel& ch, Message m) {
    auto& sender = threads_[m.sender];
    sender.send_received = true;
    ++stats_.receives;
    ++stats_.handled[{procs_[w.proc].index, w.tid}];

    const bool fails = ch.removed && (ch.removed_head == 0 || ch.removed_head == m.head);
    Label label = fails ? Label{FaultKind::RemoveResource} : m.label;
    if (!label) label = w.standing;
    exit(trap_event(w, kcall::kMsgReceivev, kcall::kMsgReceivev), label);

    const std::vector<Step>* steps = &ch.spec.default_steps;
    w.reply_head = ch.spec.default_reply;
    if (fails) {
      steps = &ch.spec.error_steps;
      w.reply_head = ch.spec.error_reply;
    } else {
      for (const auto& h : ch.spec.handlers)
        if (h.head == m.head) {
          steps = &h.steps;
          w.reply_head = h.reply;
          break;
        }
    }
    w.reply_error = fails;
    w.request_label = label;
    w.request = std::move(m);
    w.stack.clear();
    w.stack.push_back(Frame{steps, 0, label});
    w.state = State::Sleeping;
    schedule(now_ + ch.spec.service_us, Pending::Resume, slot_of(w));
  }

  void finish_request(Thread& w) {
    auto& client = threads_[w.request->sender];
    const auto reply = message_event(w, kcall::kMsgReplyv, procs_[client.proc].index, 0, 0, w.reply_head);
    enter(reply, w.request_label);
    exit(reply, w.request_label);

    ++stats_.send_completions;
    if (!client.send_received) ++stats_.dangling_sends;
    const Label client_label = w.reply_error ? Label{FaultKind::RemoveResource} : client.send_label;
    exit(client.send_event, client_label);
    client.state = State::Ready;
    if (w.reply_error && !client.send_step->on_error.empty())
      client.stack.push_back(Frame{&client.send_step->on_error, 0, FaultKind::RemoveResource});
    schedule(now_, Pending::Resume, w.request->sender);

    become_idle(w);
  }

  const Scenario sc_;
  TracePolicy policy_;
  std::mt19937_64 sched_rng_;
  std::mt19937_64 restart_rng_;
  std::mt19937_64 choice_rng_;
  std::deque<Proc> procs_;
  std::deque<Thread> threads_;
  std::deque<std::vector<Step>> novel_steps_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  Micros now_ = 0;
  bool reordered_ = false;
  bool ran_ = false;
  TraceSink* sink_ = nullptr;
  SimStats stats_;
};

inline SimResult run_scenario(const Scenario& s, std::uint64_t seed, TraceSink& sink) {
  World w(s, seed);
  return w.run(sink);
}

inline SimResult run_scenario(const Scenario& s, std::uint64_t seed, TracePolicy policy, TraceSink& sink) {
  World w(s, seed, policy);
  return w.run(sink);
}

/// Runs a scenario into `<trace>` plus its clock, truth and process-table sidecars.
inline SimResult simulate_to_files(const Scenario& s, std::uint64_t seed, const std::filesystem::path& trace) {
  World w(s, seed);
  SimResult r;
  {
    FileSink sink(trace);
    r = w.run(sink);
    sink.close();
  }
  std::ofstream procs(sidecar(trace, ".procs"), std::ios::trunc);
  write_process_table(procs, r.processes);
  if (!procs.flush()) throw Error("cannot write process table for " + trace.string());
  return r;
}

}  // namespace th::sim

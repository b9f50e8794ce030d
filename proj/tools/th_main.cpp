// th: trace-driven thread anomaly detector and simulator.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "th/th.hpp"

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string config;
  std::string trace;
  std::string prof_path;
  std::string out;
  std::size_t batch = 4096;
  std::uint64_t status_every = 100'000;
  bool save = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("-c,--config", o.config, "configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("-t,--trace", o.trace, "trace file, or - for stdin")->required();
  cmd->add_option("-p,--prof-path", o.prof_path, "profile directory (overrides prof_path)");
  cmd->add_option("-o,--out", o.out, "output directory for status, anomaly log and snapshot");
  cmd->add_option("--batch", o.batch, "records per read")->check(CLI::PositiveNumber);
  cmd->add_option("--status-every", o.status_every, "events between status publications")
      ->check(CLI::PositiveNumber);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  out << text;
  if (!out.flush()) throw th::Error("cannot write " + p.string());
}

// Peak resident set of this process image in KiB, 0 where unavailable.
long peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("VmHWM:", 0) == 0) return std::stol(line.substr(6));
  return 0;
}

int run_daemon(const RunOptions& o, th::RuntimeMode mode) {
  auto cfg = th::load_config(o.config);
  cfg.mode = mode;
  if (!o.prof_path.empty()) cfg.prof_path = o.prof_path;

  auto loaded = th::load_profiles(cfg.prof_path);
  for (const auto& w : loaded.warnings) std::cerr << "th: warning: " << w << '\n';
  th::Detector det(cfg, std::move(loaded.store));

  std::ifstream file, clock;
  std::istream* records = &std::cin;
  std::istream* clock_in = nullptr;
  if (o.trace != "-") {
    file.open(o.trace, std::ios::binary);
    if (!file) throw th::Error("cannot open trace " + o.trace);
    records = &file;
    if (std::ifstream procs(th::sidecar(o.trace, ".procs")); procs) det.set_process_table(th::read_process_table(procs));
    clock.open(th::sidecar(o.trace, ".clock"), std::ios::binary);
    if (clock) clock_in = &clock;
  }
  if (!clock_in && cfg.clock == th::ClockSource::Trace)
    std::cerr << "th: warning: no clock sidecar, using wall time\n";

  std::ofstream log;
  std::optional<th::StatusPublisher> publisher;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    log.open(fs::path(o.out) / "anomalies.log", std::ios::trunc);
    if (!log) throw th::Error("cannot write anomaly log in " + o.out);
    det.set_anomaly_sink([&log](const th::AnomalyRecord& a) { log << th::format_anomaly(a) << '\n'; });
    publisher.emplace(fs::path(o.out) / "status");
  }

  th::RecordReader reader(*records, clock_in, o.batch);
  const auto depth = std::max<std::size_t>(1, cfg.buf_size / 16);
  th::consume_stream(det, reader, depth, publisher ? &*publisher : nullptr, o.status_every);

  const auto snap = det.snapshot();
  const auto& st = det.stats();
  if (publisher) {
    publisher->finish(snap);
    if (publisher->failures()) std::cerr << "th: warning: " << publisher->failures() << " status writes failed\n";
    auto j = th::to_json(snap);
    j["ingest"] = {{"records", st.records},
                   {"events", st.events},
                   {"skipped", st.skipped},
                   {"other_class", st.other_class},
                   {"filtered", st.filtered},
                   {"anomalies", st.anomalies},
                   {"unknown_thread_anomalies", st.unknown_thread_anomalies},
                   {"reader_stalls", st.reader_stalls},
                   {"status_dropped", publisher->dropped()}};
    write_text(fs::path(o.out) / "snapshot.json", j.dump(1) + "\n");
  }
  if (mode == th::RuntimeMode::Learning || o.save) th::save_profiles(det.store(), cfg.prof_path);

  std::cout << "records " << st.records << "\nevents " << st.events << "\nanomalies " << st.anomalies
            << "\nunknown_thread_anomalies " << st.unknown_thread_anomalies << "\nskipped " << st.skipped
            << "\n";
  std::size_t normal = 0, total = 0;
  for (const auto& p : snap.processes)
    for (const auto& t : p.threads) {
      ++total;
      normal += t.state == th::ProfileState::Normal && !t.quarantined;
    }
  std::cout << "normal_threads " << normal << '/' << total << "\npeak_rss_kb " << peak_rss_kb() << '\n';
  return 0;
}

int run_simulate(const std::string& scenario, std::uint64_t seed, const std::string& out, const std::string& tracing) {
  auto s = th::sim::load_scenario(scenario);
  if (!tracing.empty()) s.tracing = th::sim::trace_policy_from(tracing);
  const auto r = th::sim::simulate_to_files(s, seed, out);
  std::cout << "records " << r.stats.records << "\nlabelled " << r.stats.labelled << "\nend_us " << r.end_time
            << "\nrestarts " << r.stats.restarts << "\n";
  return 0;
}

int run_dump(const std::string& archive) {
  if (!fs::is_regular_file(archive)) throw th::ArchiveError("no such archive: " + archive);
  std::cout << th::dump_profile(th::read_file_bytes(archive));
  return 0;
}

th::StatusSnapshot read_snapshot(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw th::Error("cannot open snapshot " + p.string());
  try {
    return th::snapshot_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw th::Error("bad snapshot " + p.string() + ": " + e.what());
  }
}

int run_evaluate(const std::string& run_dir, const std::string& trace, const std::string& out_dir, int header_bits) {
  const fs::path run(run_dir);
  const auto snap = read_snapshot(run / "snapshot.json");
  std::ifstream log_in(run / "anomalies.log");
  if (!log_in) throw th::Error("cannot open " + (run / "anomalies.log").string());
  const auto anomalies = th::parse_anomaly_log(log_in);

  std::optional<std::vector<th::LabelledEvent>> truth;
  if (!trace.empty()) {
    std::ifstream truth_in(th::sidecar(trace, ".truth"));
    std::ifstream clock_in(th::sidecar(trace, ".clock"), std::ios::binary);
    if (!truth_in || !clock_in) throw th::Error("ground truth or clock sidecar missing for " + trace);
    const auto policy = header_bits == 32 ? th::HeaderPolicy::Bits32 : th::HeaderPolicy::Bits16;
    truth = th::resolve_truth(th::read_file_bytes(trace), th::read_clock(clock_in), th::read_truth(truth_in), policy);
  }
  const auto r = th::evaluation_report(snap, anomalies, truth ? &*truth : nullptr);

  const fs::path out = out_dir.empty() ? run : fs::path(out_dir);
  fs::create_directories(out);
  auto csv = [&](const char* name, auto writer) {
    std::ostringstream os;
    writer(os, r);
    write_text(out / name, os.str());
  };
  csv("threads.csv", th::write_thread_csv);
  csv("processes.csv", th::write_process_csv);
  csv("normalization.csv", th::write_normalization_csv);
  if (truth) csv("faults.csv", th::write_fault_csv);
  std::cout << "anomalies " << anomalies.size() << "\nthreads " << r.threads.size() << "\n";
  return 0;
}

int run_status(const std::string& snapshot, const std::string& out_dir) {
  const auto snap = read_snapshot(snapshot);
  if (out_dir.empty()) std::cout << th::render_status(snap);
  else th::publish_status(snap, out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"th: per-thread kernel-call sequence anomaly detector"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string scenario, out, tracing;
  std::uint64_t seed = 1;
  auto* sim = app.add_subcommand("simulate", "run a scenario into a trace file and sidecars");
  sim->add_option("-s,--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "random seed");
  sim->add_option("-o,--out", out, "trace file to write")->required();
  sim->add_option("--tracing", tracing, "exit, enter or both")->check(CLI::IsMember({"exit", "enter", "both"}));

  RunOptions train_opts, detect_opts;
  auto* train = app.add_subcommand("train", "learn profiles from a trace and save them");
  add_run_options(train, train_opts);
  auto* detect = app.add_subcommand("detect", "check a trace against saved profiles");
  add_run_options(detect, detect_opts);
  detect->add_flag("--save", detect_opts.save, "save profiles after the run");

  std::string archive;
  auto* dump = app.add_subcommand("dump", "print a profile archive");
  dump->add_option("archive", archive, "archive file")->required();

  std::string run_dir, eval_trace, eval_out;
  int header_bits = 16;
  auto* evaluate = app.add_subcommand("evaluate", "write report tables for a finished run");
  evaluate->add_option("-r,--run", run_dir, "output directory of a detect run")->required();
  evaluate->add_option("-t,--trace", eval_trace, "trace with a ground-truth sidecar");
  evaluate->add_option("-o,--out", eval_out, "where to write the CSV files");
  evaluate->add_option("--header-policy", header_bits, "16 or 32")->check(CLI::IsMember({16, 32}));

  std::string snapshot, status_out;
  auto* status = app.add_subcommand("status", "render a saved snapshot as status files");
  status->add_option("snapshot", snapshot, "snapshot.json")->required();
  status->add_option("-o,--out", status_out, "status directory (prints to stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_simulate(scenario, seed, out, tracing);
    if (*train) return run_daemon(train_opts, th::RuntimeMode::Learning);
    if (*detect) return run_daemon(detect_opts, th::RuntimeMode::Detection);
    if (*dump) return run_dump(archive);
    if (*evaluate) return run_evaluate(run_dir, eval_trace, eval_out, header_bits);
    if (*status) return run_status(snapshot, status_out);
  } catch (const th::FramingError& e) {
    std::cerr << "th: framing error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "th: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

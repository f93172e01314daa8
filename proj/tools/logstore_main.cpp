#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "logstore/bench.hpp"
#include "logstore/config.hpp"
#include "logstore/server.hpp"
#include "logstore/tcp.hpp"

using namespace logstore;

namespace {

int fail(const std::string& what, int code = 1) {
  std::cerr << "error: " << what << '\n';
  return code;
}

Settings load_settings(const std::string& file, const std::vector<std::string>& overrides) {
  Settings s = file.empty() ? Settings{} : Settings::load(file);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t");
      const auto e = v.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
    };
    s.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return s;
}

// ---- serve ----

int run_serve(const std::string& config_file, const std::vector<std::string>& overrides,
              const std::string& data_dir) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  // Blocked before any thread starts so only sigwait below sees them.
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto settings = load_settings(config_file, overrides);
  if (!data_dir.empty()) settings.set("data_dir", data_dir);
  auto config = ServerConfig::from_settings(settings, !data_dir.empty());
  Server server(std::move(config));
  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("received signal {}, shutting down", sig);
  server.stop();
  return 0;
}

// ---- cli ----

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::uint32_t parse_u32(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(s, &used);
    if (used != s.size() || v > 0xFFFFFFFFul) throw std::out_of_range(what);
    return static_cast<std::uint32_t>(v);
  } catch (const std::logic_error&) {
    throw InvalidArgument(std::string("bad ") + what + " '" + s + "'");
  }
}

Request build_request(const std::vector<std::string>& args) {
  if (args.empty()) throw InvalidArgument("missing command");
  const auto cmd = upper(args[0]);
  auto need = [&](std::size_t n, const char* usage) {
    if (args.size() != n + 1) throw InvalidArgument(std::string("usage: ") + usage);
  };
  Request req;
  if (cmd == "GET") {
    need(1, "GET key");
    req.op = MsgType::Get;
    req.key = args[1];
  } else if (cmd == "PUT") {
    need(2, "PUT key value");
    req.op = MsgType::Put;
    req.key = args[1];
    req.value = args[2];
  } else if (cmd == "DEL") {
    need(1, "DEL key");
    req.op = MsgType::Delete;
    req.key = args[1];
  } else if (cmd == "RANGE") {
    need(3, "RANGE start end limit");
    req.op = MsgType::Range;
    req.key = args[1];
    req.end = args[2];
    req.limit = parse_u32(args[3], "limit");
  } else if (cmd == "BATCHGET") {
    need(1, "BATCHGET keyfile");
    std::ifstream in(args[1]);
    if (!in) throw IoError("cannot read key file " + args[1]);
    req.op = MsgType::BatchGet;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) req.keys.push_back(line);
    }
  } else if (cmd == "STATS") {
    if (args.size() > 2) throw InvalidArgument("usage: STATS [partition]");
    req.op = MsgType::Stats;
    req.partition = args.size() == 2 ? parse_u32(args[1], "partition") : kAllPartitions;
  } else if (cmd == "PROMOTE") {
    need(1, "PROMOTE partition");
    req.op = MsgType::Promote;
    req.partition = parse_u32(args[1], "partition");
  } else {
    throw InvalidArgument("unknown command '" + args[0] + "'");
  }
  return req;
}

void print_stats(const std::vector<PartitionStats>& stats) {
  std::cout << "partition role epoch leader flushed potential_commit replayed last_lsn live_keys "
               "cache_hits cache_misses log_reads replay_reads bytes_written queue_depth\n";
  for (const auto& s : stats) {
    std::cout << s.partition << ' ' << to_string(s.role) << ' ' << s.epoch << ' ' << s.leader << ' ' << s.flushed
              << ' ' << s.potential_commit << ' ' << s.replayed << ' ' << s.last_lsn << ' ' << s.live_keys << ' '
              << s.cache_hits << ' ' << s.cache_misses << ' ' << s.log_reads << ' ' << s.replay_reads << ' '
              << s.bytes_written << ' ' << s.queue_depth << '\n';
  }
}

int run_cli(const std::string& addr, const std::vector<std::string>& args, std::optional<Lsn> read_view,
            int timeout_ms) {
  Request req = build_request(args);
  req.read_view = read_view;
  TcpClient client(addr, std::chrono::milliseconds(timeout_ms));
  const Response resp = client.call(req);

  if (resp.status == Status::NotFound && req.op == MsgType::Get) {
    std::cout << "(nil)\n";
    return 0;
  }
  if (resp.status == Status::NotLeader) {
    std::string msg = "not the leader";
    if (resp.leader_hint != 0) msg += "; leader is node " + std::to_string(resp.leader_hint);
    return fail(msg, 2);
  }
  if (resp.status != Status::Ok) {
    std::string msg(to_string(resp.status));
    if (!resp.message.empty()) msg += ": " + resp.message;
    return fail(msg, 3);
  }
  switch (req.op) {
    case MsgType::Get:
      std::cout << resp.value.value_or("") << '\n';
      break;
    case MsgType::Put:
      std::cout << "OK " << resp.lsn << '\n';
      break;
    case MsgType::Delete:
      std::cout << (resp.existed ? 1 : 0) << '\n';
      break;
    case MsgType::Range:
      for (const auto& [k, v] : resp.pairs) std::cout << k << '\t' << v << '\n';
      break;
    case MsgType::BatchGet:
      for (const auto& [k, v] : resp.batch) std::cout << k << '\t' << v.value_or("(nil)") << '\n';
      break;
    case MsgType::Stats:
      print_stats(resp.stats);
      break;
    default:
      std::cout << (resp.message.empty() ? "OK" : resp.message) << '\n';
      break;
  }
  return 0;
}

// ---- bench ----

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stod(item));
  return out;
}

template <typename T>
std::vector<T> parse_ints(const std::string& list) {
  std::vector<T> out;
  for (double d : parse_doubles(list)) out.push_back(static_cast<T>(d));
  return out;
}

int run_bench(const std::string& scenario, const std::string& config_file, const std::vector<std::string>& overrides,
              const std::string& out_file, const std::string& data_dir) {
  auto s = load_settings(config_file, overrides);
  std::filesystem::path dir = s.get_or("data_dir", "bench-data");
  if (const char* env = std::getenv("LOGSTORE_DATA_DIR"); env && *env) dir = env;
  if (!data_dir.empty()) dir = data_dir;
  std::filesystem::create_directories(dir);
  const auto seed = s.get_u64("seed", 1);

  if (scenario == "cache-hitratio") {
    bench::CacheSweepParams p;
    p.keys = s.get_u64("keys", p.keys);
    p.value_size = s.get_u64("value_size", p.value_size);
    p.warmup = s.get_u64("warmup", p.warmup);
    p.measured = s.get_u64("measured", p.measured);
    p.theta = s.get_double("theta", p.theta);
    p.seed = seed;
    if (auto r = s.get("ratios")) p.ratios = parse_doubles(*r);
    const auto rows = bench::run_cache_sweep(p);
    bench::cache_sweep_table(rows).write(out_file);
    for (const auto& r : rows) {
      std::cout << (r.distribution == Distribution::Uniform ? "uniform" : "zipfian") << " ratio "
                << bench::fmt_double(r.ratio, 2) << ' ' << r.policy << ' ' << bench::fmt_double(r.hit_ratio) << '\n';
    }
  } else if (scenario == "recovery") {
    bench::RecoveryParams p;
    p.dir = dir;
    p.records = s.get_u64("records", p.records);
    p.snapshot_at = s.get_u64("snapshot_at", p.records * 9 / 10);
    p.keys = s.get_u64("keys", p.keys);
    p.value_size = s.get_u64("value_size", p.value_size);
    p.repeats = static_cast<int>(s.get_u64("repeats", static_cast<std::uint64_t>(p.repeats)));
    const auto r = bench::run_recovery(p);
    bench::recovery_table(p, r).write(out_file);
    std::cout << "tail records read " << r.tail_records_read << ", with snapshot " << r.snapshot_seconds
              << " s, full rebuild " << r.full_seconds << " s, ratio " << bench::fmt_double(r.ratio()) << '\n';
  } else if (scenario == "batchget-crossover") {
    bench::CrossoverParams p;
    p.dir = dir;
    p.keys = s.get_u64("keys", p.keys);
    p.value_size = s.get_u64("value_size", p.value_size);
    p.seed = seed;
    if (auto b = s.get("batches")) p.batch_sizes = parse_ints<std::size_t>(*b);
    const auto rows = bench::run_crossover(p);
    const auto table = bench::crossover_table(rows);
    table.write(out_file);
    table.write(std::cout);
  } else if (scenario == "freshness") {
    bench::FreshnessParams p;
    p.dir = dir;
    p.writes_per_sec = s.get_double("writes_per_sec", p.writes_per_sec);
    p.duration = static_cast<Micros>(s.get_double("duration_s", 30) * 1e6);
    p.sample_every = s.get_u64("sample_ms", 20) * 1000;
    p.key_space = s.get_u64("key_space", p.key_space);
    p.value_size = s.get_u64("value_size", p.value_size);
    p.seed = seed;
    const auto r = bench::run_freshness(p);
    bench::freshness_table(r).write(out_file);
    std::cout << r.samples.size() << " samples, mean score " << bench::fmt_double(r.mean_score, 6) << ", min "
              << bench::fmt_double(r.min_score, 6) << "; follower reads " << r.follower_reads << ", served "
              << r.reads_served << ", rejected " << r.reads_rejected << ", replay reads " << r.replay_reads << '\n';
  } else if (scenario == "write-scaling") {
    bench::ScalingParams p;
    p.dir = dir;
    p.clients = s.get_u64("clients", p.clients);
    p.sim_duration = s.get_u64("sim_ms", 300) * 1000;
    p.key_space = s.get_u64("key_space", p.key_space);
    p.value_size = s.get_u64("value_size", p.value_size);
    p.include_engine = s.get_bool("engine", true);
    p.engine_threads = s.get_u64("engine_threads", p.engine_threads);
    p.engine_seconds = s.get_double("engine_seconds", p.engine_seconds);
    p.seed = seed;
    if (auto l = s.get("partitions")) p.partitions = parse_ints<std::uint32_t>(*l);
    const auto table = bench::scaling_table(bench::run_write_scaling(p));
    table.write(out_file);
    table.write(std::cout);
  } else {
    return fail("unknown scenario '" + scenario + "'");
  }
  std::cout << "wrote " << out_file << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"logstore: partitioned, replicated log-structured key-value store"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::string config_file, data_dir;
  std::vector<std::string> overrides;

  auto* serve = app.add_subcommand("serve", "run a node");
  serve->add_option("--config", config_file, "settings file (key = value lines)")->required()->check(CLI::ExistingFile);
  serve->add_option("--set", overrides, "override a setting, key=value (repeatable)");
  serve->add_option("--data-dir", data_dir, "data directory (beats LOGSTORE_DATA_DIR and the file)");

  std::string addr;
  std::vector<std::string> command;
  std::optional<std::uint64_t> read_view;
  int timeout_ms = 5000;
  auto* cli = app.add_subcommand("cli", "send one command to a node");
  cli->add_option("--addr", addr, "host:port of the node")->required();
  cli->add_option("--read-view", read_view, "read view LSN for reads served by a follower");
  cli->add_option("--timeout-ms", timeout_ms, "response timeout");
  cli->add_option("command", command,
                  "GET k | PUT k v | DEL k | RANGE a b n | BATCHGET file | STATS [p] | PROMOTE p")
      ->required();

  std::string scenario, out_file;
  auto* bench_cmd = app.add_subcommand("bench", "run a benchmark scenario and write a CSV report");
  bench_cmd->add_option("--scenario", scenario, "scenario")
      ->required()
      ->check(CLI::IsMember({"write-scaling", "cache-hitratio", "freshness", "recovery", "batchget-crossover"}));
  bench_cmd->add_option("--config", config_file, "settings file")->check(CLI::ExistingFile);
  bench_cmd->add_option("--set", overrides, "override a setting, key=value (repeatable)");
  bench_cmd->add_option("--out", out_file, "CSV output file")->required();
  bench_cmd->add_option("--data-dir", data_dir, "scratch directory for the scenario's data");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  if (*cli) spdlog::set_level(spdlog::level::warn);

  try {
    if (*serve) return run_serve(config_file, overrides, data_dir);
    if (*cli) return run_cli(addr, command, read_view, timeout_ms);
    return run_bench(scenario, config_file, overrides, out_file, data_dir);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

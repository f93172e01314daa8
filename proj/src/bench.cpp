#include "logstore/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "logstore/engine.hpp"
#include "logstore/replication.hpp"
#include "logstore/transport.hpp"
#include "logstore/types.hpp"

namespace logstore::bench {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Wipes and recreates a scratch directory owned by one scenario.
fs::path fresh_dir(const fs::path& base, const std::string& name) {
  const auto dir = base / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string value_for(std::uint64_t stamp, std::size_t size) {
  std::string v(size, '\0');
  for (std::size_t i = 0; i < size; ++i) v[i] = static_cast<char>('a' + (stamp + i) % 26);
  return v;
}

const char* distribution_name(Distribution d) { return d == Distribution::Uniform ? "uniform" : "zipfian"; }

double percentile(std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0;
  return sorted[static_cast<std::size_t>(q * static_cast<double>(sorted.size() - 1))];
}

}  // namespace

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size()) {
    throw InvalidArgument("csv row has " + std::to_string(row.size()) + " cells, header has " +
                          std::to_string(header_.size()));
  }
  rows_.push_back(std::move(row));
}

void CsvTable::write(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
}

void CsvTable::write(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  write(out);
  if (!out) throw IoError("write failed for " + file.string());
}

std::string fmt_double(double v, int precision) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

// ---- cache-hitratio ----

std::vector<CacheSweepRow> run_cache_sweep(const CacheSweepParams& params) {
  std::vector<std::string> keys;
  keys.reserve(params.keys);
  for (std::uint64_t k = 0; k < params.keys; ++k) keys.push_back(encode_key(k));
  const std::string value(params.value_size, 'v');
  const std::uint64_t data_bytes = params.keys * cache_entry_bytes(keys.front(), value);

  std::vector<CacheSweepRow> rows;
  for (auto dist : params.distributions) {
    WorkloadSpec spec;
    spec.distribution = dist;
    spec.theta = params.theta;
    spec.key_min = 0;
    spec.key_max = params.keys;
    spec.seed = params.seed;
    Workload w(spec);
    std::vector<std::uint32_t> stream(params.warmup + params.measured);
    for (auto& k : stream) k = static_cast<std::uint32_t>(w.next_key());

    for (double ratio : params.ratios) {
      const auto capacity = static_cast<std::uint64_t>(ratio * static_cast<double>(data_bytes));
      std::vector<std::unique_ptr<ReadCache>> caches;
      CacheConfig cc;
      cc.capacity_bytes = capacity;
      cc.seed = params.seed;
      caches.push_back(std::make_unique<TwoStageCache>(cc));
      caches.push_back(std::make_unique<LruCache>(capacity));
      caches.push_back(std::make_unique<FifoCache>(capacity));
      for (auto& cache : caches) {
        std::uint64_t hits_before = 0;
        for (std::size_t i = 0; i < stream.size(); ++i) {
          if (i == params.warmup) hits_before = cache->stats().hits;
          const auto& key = keys[stream[i]];
          if (!cache->get(key)) cache->admit(key, value, 1);
        }
        const double hits = static_cast<double>(cache->stats().hits - hits_before);
        rows.push_back({dist, ratio, std::string(cache->name()),
                        params.measured ? hits / static_cast<double>(params.measured) : 0.0});
        spdlog::debug("cache sweep {} ratio {} {}: {:.4f}", distribution_name(dist), ratio,
                      cache->name(), rows.back().hit_ratio);
      }
    }
  }
  return rows;
}

CsvTable cache_sweep_table(const std::vector<CacheSweepRow>& rows) {
  CsvTable t({"distribution", "ratio", "policy", "hit_ratio"});
  for (const auto& r : rows) {
    t.add_row({distribution_name(r.distribution), fmt_double(r.ratio, 2), r.policy, fmt_double(r.hit_ratio)});
  }
  return t;
}

// ---- recovery ----

RecoveryResult run_recovery(const RecoveryParams& params) {
  if (params.snapshot_at == 0 || params.snapshot_at > params.records) {
    throw InvalidArgument("snapshot_at must be within 1..records");
  }
  PartitionOptions opts;
  opts.dir = fresh_dir(params.dir, "recovery");
  opts.id = 0;
  opts.flush_policy = FlushPolicy::OsBuffered;
  opts.checkpoint_every = 0;
  opts.auto_compact = false;
  opts.cache.capacity_bytes = 1 << 20;

  RecoveryResult out;
  {
    Partition part(opts);
    for (std::uint64_t lsn = 1; lsn <= params.records; ++lsn) {
      part.exec_put(encode_key(lsn % params.keys), value_for(lsn, params.value_size), lsn);
      if (lsn % 4096 == 0) part.flush();
      if (lsn == params.snapshot_at) {
        part.flush();
        out.snapshot_lsn = part.checkpoint().snapshot.last_included_lsn;
      }
    }
    part.flush();
    out.last_lsn = part.last_lsn();
  }

  auto reopen = [&](bool expect_snapshot) {
    double best = 0;
    RecoveryReport report;
    for (int i = 0; i < std::max(1, params.repeats); ++i) {
      const auto t0 = Clock::now();
      Partition part(opts);
      const double s = ms_since(t0) / 1000.0;
      report = part.recovery();
      if (report.used_snapshot != expect_snapshot) throw Error("unexpected recovery mode");
      if (i == 0 || s < best) best = s;
    }
    return std::pair{best, report};
  };

  const auto [snap_s, snap_report] = reopen(true);
  out.snapshot_seconds = snap_s;
  out.tail_records_read = snap_report.tail_records_read;

  const auto snap = newest_snapshot(opts.dir, opts.id);
  if (!snap) throw Error("checkpoint left no snapshot file");
  const auto aside = params.dir / "recovery.snapshot.aside";
  fs::rename(*snap, aside);
  try {
    const auto [full_s, full_report] = reopen(false);
    out.full_seconds = full_s;
    out.full_records_read = full_report.tail_records_read + full_report.sorted_records_read;
    out.full_rebuild_used = full_report.full_rebuild;
  } catch (...) {
    fs::rename(aside, *snap);
    throw;
  }
  fs::rename(aside, *snap);
  return out;
}

CsvTable recovery_table(const RecoveryParams& params, const RecoveryResult& r) {
  CsvTable t({"mode", "records", "snapshot_lsn", "records_read", "seconds"});
  t.add_row({"snapshot", std::to_string(params.records), std::to_string(r.snapshot_lsn),
             std::to_string(r.tail_records_read), fmt_double(r.snapshot_seconds, 6)});
  t.add_row({"full", std::to_string(params.records), "0", std::to_string(r.full_records_read),
             fmt_double(r.full_seconds, 6)});
  return t;
}

// ---- batchget-crossover ----

std::vector<CrossoverRow> run_crossover(const CrossoverParams& params) {
  PartitionOptions opts;
  opts.dir = fresh_dir(params.dir, "crossover");
  opts.flush_policy = FlushPolicy::OsBuffered;
  opts.checkpoint_every = 0;
  opts.auto_compact = false;
  opts.cache.capacity_bytes = 1;
  Partition part(opts);
  for (std::uint64_t k = 0; k < params.keys; ++k) {
    part.exec_put(encode_key(k), value_for(k, params.value_size), k + 1);
    if ((k + 1) % 4096 == 0) part.flush();
  }
  part.flush();

  std::vector<std::uint64_t> ids(params.keys);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(params.seed);
  std::vector<CrossoverRow> rows;
  for (auto batch : params.batch_sizes) {
    batch = std::min<std::size_t>(batch, params.keys);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::string> keys;
    keys.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) keys.push_back(encode_key(ids[i]));

    CrossoverRow row;
    row.batch = batch;
    row.live_keys = part.live_keys();
    row.chosen = Partition::choose_batch_path(batch, part.live_keys());
    auto t0 = Clock::now();
    const auto by_index = part.exec_batch_get(keys, BatchPath::Index);
    row.index_ms = ms_since(t0);
    t0 = Clock::now();
    const auto by_scan = part.exec_batch_get(keys, BatchPath::Scan);
    row.scan_ms = ms_since(t0);
    row.identical = by_index == by_scan;
    rows.push_back(row);
  }
  return rows;
}

CsvTable crossover_table(const std::vector<CrossoverRow>& rows) {
  CsvTable t({"batch", "live_keys", "chosen_path", "index_ms", "scan_ms", "identical"});
  for (const auto& r : rows) {
    t.add_row({std::to_string(r.batch), std::to_string(r.live_keys), r.chosen == BatchPath::Index ? "index" : "scan",
               fmt_double(r.index_ms, 3), fmt_double(r.scan_ms, 3), r.identical ? "1" : "0"});
  }
  return t;
}

// ---- freshness ----

FreshnessResult run_freshness(const FreshnessParams& params) {
  if (params.writes_per_sec <= 0 || params.sample_every == 0) throw InvalidArgument("bad freshness parameters");
  SimClusterConfig cfg;
  cfg.dir = fresh_dir(params.dir, "freshness");
  cfg.nodes = 3;
  cfg.partitions = 1;
  cfg.seed = params.seed;
  cfg.partition.flush_policy = FlushPolicy::OsBuffered;
  cfg.partition.checkpoint_every = 0;
  SimCluster cluster(cfg);
  auto& net = cluster.net();

  FreshnessResult out;
  const Micros interval = std::max<Micros>(1, static_cast<Micros>(1e6 / params.writes_per_sec));
  const Micros end = net.now() + params.duration;
  const std::string value(params.value_size, 'v');
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, params.key_space - 1);

  std::function<void()> write_tick = [&] {
    if (net.now() >= end) return;
    cluster.put(encode_key(pick(rng)), value, [&](const Response& r) {
      if (r.status == Status::Ok) ++out.writes_acked;
    });
    net.after(interval, write_tick);
  };

  std::function<void()> sample_tick = [&] {
    if (net.now() > end) return;
    FreshnessSample s;
    s.t = net.now();
    const NodeId leader = cluster.leader(0);
    s.leader_lsn = cluster.partition(leader, 0).last_lsn();
    s.leader_commit = cluster.lsn_state(leader, 0).potential_commit;
    double sum = 0;
    for (NodeId n = 1; n <= cfg.nodes; ++n) {
      if (n == leader) continue;
      const auto flushed = cluster.lsn_state(n, 0).flushed;
      s.follower_flushed.push_back(flushed);
      sum += freshness_score(flushed, s.leader_lsn);
      ++out.follower_reads;
      cluster.get(n, encode_key(pick(rng)), s.leader_commit, [&](const Response& r) {
        if (r.status == Status::Ok || r.status == Status::NotFound) {
          ++out.reads_served;
        } else {
          ++out.reads_rejected;
        }
      });
    }
    s.score = s.follower_flushed.empty() ? 1.0 : sum / static_cast<double>(s.follower_flushed.size());
    out.samples.push_back(std::move(s));
    net.after(params.sample_every, sample_tick);
  };

  net.after(interval, write_tick);
  net.after(params.sample_every, sample_tick);
  cluster.run_until(end + 2 * cfg.read_block_timeout);

  double total = 0;
  out.min_score = 1.0;
  for (const auto& s : out.samples) {
    total += s.score;
    out.min_score = std::min(out.min_score, s.score);
  }
  out.mean_score = out.samples.empty() ? 0.0 : total / static_cast<double>(out.samples.size());
  for (NodeId n = 1; n <= cfg.nodes; ++n) {
    if (n != cluster.leader(0)) out.replay_reads += cluster.partition(n, 0).replay_reads();
  }
  return out;
}

CsvTable freshness_table(const FreshnessResult& r) {
  CsvTable t({"t_ms", "leader_lsn", "leader_commit", "follower_min_flushed", "follower_max_flushed", "score"});
  for (const auto& s : r.samples) {
    const auto [lo, hi] = std::minmax_element(s.follower_flushed.begin(), s.follower_flushed.end());
    const bool any = !s.follower_flushed.empty();
    t.add_row({fmt_double(static_cast<double>(s.t) / 1000.0, 1), std::to_string(s.leader_lsn),
               std::to_string(s.leader_commit), any ? std::to_string(*lo) : "0", any ? std::to_string(*hi) : "0",
               fmt_double(s.score, 6)});
  }
  return t;
}

// ---- write-scaling ----

namespace {

ScalingRow engine_scaling(const ScalingParams& params, std::uint32_t partitions) {
  EngineConfig cfg;
  cfg.node_id = 1;
  cfg.members = {1};
  cfg.partitions = partitions;
  cfg.data_dir = fresh_dir(params.dir, "scaling-engine-p" + std::to_string(partitions));
  cfg.partition.flush_policy = FlushPolicy::Group;
  cfg.pin_threads = false;
  LoopbackNetwork net;
  ScalingRow row;
  row.mode = "engine";
  row.partitions = partitions;
  row.clients = params.engine_threads;
  std::vector<std::vector<double>> lat(params.engine_threads);
  {
    Engine engine(cfg, net.endpoint(1));
    const auto deadline = Clock::now() + std::chrono::duration<double>(params.engine_seconds);
    const std::string value(params.value_size, 'v');
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < params.engine_threads; ++t) {
      threads.emplace_back([&, t] {
        std::mt19937_64 rng(params.seed + t);
        std::uniform_int_distribution<std::uint64_t> pick(0, params.key_space - 1);
        while (Clock::now() < deadline) {
          Request req;
          req.op = MsgType::Put;
          req.key = encode_key(pick(rng));
          req.value = value;
          const auto t0 = Clock::now();
          if (engine.call(std::move(req)).status == Status::Ok) lat[t].push_back(ms_since(t0));
        }
      });
    }
    for (auto& th : threads) th.join();
    engine.stop();
  }
  net.shutdown();
  std::vector<double> all;
  for (auto& l : lat) all.insert(all.end(), l.begin(), l.end());
  std::sort(all.begin(), all.end());
  row.completed = all.size();
  row.ops_per_sec = static_cast<double>(all.size()) / params.engine_seconds;
  row.p50_ms = percentile(all, 0.50);
  row.p99_ms = percentile(all, 0.99);
  return row;
}

}  // namespace

std::vector<ScalingRow> run_write_scaling(const ScalingParams& params) {
  std::vector<ScalingRow> rows;
  for (auto p : params.partitions) {
    SimClusterConfig cfg;
    cfg.dir = fresh_dir(params.dir, "scaling-sim-p" + std::to_string(p));
    cfg.nodes = 3;
    cfg.partitions = p;
    cfg.seed = params.seed;
    cfg.partition.flush_policy = FlushPolicy::OsBuffered;
    cfg.partition.checkpoint_every = 0;
    SimCluster cluster(cfg);
    const auto r = cluster.closed_loop_puts(params.clients, params.sim_duration, params.key_space, params.value_size);
    rows.push_back({"sim", p, params.clients, r.completed, r.ops_per_sec, r.p50_ms, r.p99_ms});
  }
  if (params.include_engine) {
    for (auto p : params.partitions) rows.push_back(engine_scaling(params, p));
  }
  return rows;
}

CsvTable scaling_table(const std::vector<ScalingRow>& rows) {
  CsvTable t({"mode", "partitions", "clients", "completed", "ops_per_sec", "p50_ms", "p99_ms"});
  for (const auto& r : rows) {
    t.add_row({r.mode, std::to_string(r.partitions), std::to_string(r.clients), std::to_string(r.completed),
               fmt_double(r.ops_per_sec, 1), fmt_double(r.p50_ms, 3), fmt_double(r.p99_ms, 3)});
  }
  return t;
}

// ---- fail-over ----

FailoverResult run_failover(const FailoverParams& params) {
  SimClusterConfig cfg;
  cfg.dir = fresh_dir(params.dir, "failover");
  cfg.nodes = 3;
  cfg.partitions = 1;
  cfg.seed = params.seed;
  cfg.partition.flush_policy = FlushPolicy::OsBuffered;
  cfg.partition.checkpoint_every = 0;
  SimCluster cluster(cfg);
  auto& net = cluster.net();

  const std::size_t value_size = 64;
  std::vector<std::uint64_t> acked;
  std::uint64_t issued = 0;
  bool writing = true;
  std::function<void()> tick = [&] {
    if (!writing) return;
    const auto i = issued++;
    cluster.put("w" + std::to_string(i), value_for(i, value_size), [&acked, i](const Response& r) {
      if (r.status == Status::Ok) acked.push_back(i);
    });
    net.after(params.write_interval, tick);
  };
  net.after(params.write_interval, tick);
  const Micros give_up = net.now() + 600'000'000;
  while (acked.size() < params.acked_before_crash) {
    if (net.now() > give_up) throw Error("fail-over run never reached the acked-write target");
    cluster.run_for(1'000);
  }

  FailoverResult out;
  const NodeId old_leader = cluster.leader(0);
  out.leader_last_at_crash = cluster.partition(old_leader, 0).last_lsn();
  cluster.crash(old_leader);
  writing = false;
  // Frames already on the wire land before anyone notices the crash.
  cluster.run_for(5'000);
  out.acked = acked.size();

  NodeId target = 0;
  Lsn best = 0;
  for (NodeId n = 1; n <= cfg.nodes; ++n) {
    if (n == old_leader || !cluster.alive(n)) continue;
    const auto flushed = cluster.lsn_state(n, 0).flushed;
    if (target == 0 || flushed > best) {
      target = n;
      best = flushed;
    }
  }
  out.new_leader = target;
  out.promoted_flushed = best;
  auto& part = cluster.partition(target, 0);
  const auto replay_before = part.replay_reads();
  const auto index_before = part.live_keys();
  const std::uint64_t scanned_before = part.io().scan_records_read;
  const auto t0 = Clock::now();
  const auto epoch = cluster.promote(target, 0);
  out.promote_wall_ms = ms_since(t0);
  if (!epoch) throw Error("promotion of the freshest follower was refused");
  out.new_epoch = *epoch;
  out.replay_reads_delta = part.replay_reads() - replay_before;
  out.index_size_delta = part.live_keys() - index_before;
  out.scan_records_delta = part.io().scan_records_read - scanned_before;

  std::uint64_t replies = 0;
  for (auto i : acked) {
    cluster.get(target, "w" + std::to_string(i), std::nullopt,
                [&out, &replies, expect = value_for(i, value_size)](const Response& r) {
                  ++replies;
                  if (r.status == Status::Ok && r.value == expect) ++out.readable;
                });
  }
  bool wrote = false;
  cluster.put("after-failover", "1", [&](const Response& r) { wrote = r.status == Status::Ok; });
  const Micros read_deadline = net.now() + 60'000'000;
  while ((replies < acked.size() || !wrote) && net.now() < read_deadline) cluster.run_for(1'000);
  out.accepts_writes = wrote;
  return out;
}

}  // namespace logstore::bench

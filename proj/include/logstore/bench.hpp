#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "logstore/partition.hpp"
#include "logstore/simulation.hpp"
#include "logstore/workload.hpp"

namespace logstore::bench {

/// CSV with a fixed header. Cells are written verbatim, so callers keep
/// commas out of them.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  /// Throws InvalidArgument when the row width differs from the header.
  void add_row(std::vector<std::string> row);
  void write(std::ostream& out) const;
  void write(const std::filesystem::path& file) const;

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string fmt_double(double v, int precision = 4);

// ---- cache-hitratio ----

struct CacheSweepParams {
  std::uint64_t keys = 100'000;
  std::size_t value_size = 1024;
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<Distribution> distributions{Distribution::Uniform, Distribution::Zipfian};
  double theta = 0.99;
  std::uint64_t warmup = 200'000;
  std::uint64_t measured = 300'000;
  std::uint64_t seed = 7;
};

struct CacheSweepRow {
  Distribution distribution;
  double ratio;
  std::string policy;
  double hit_ratio;
};

/// Read-through simulation: each access is a get, and a miss admits the
/// record. Every policy sees the same access stream for a given
/// distribution. Capacity is ratio times the accounted size of all records.
std::vector<CacheSweepRow> run_cache_sweep(const CacheSweepParams& params);
CsvTable cache_sweep_table(const std::vector<CacheSweepRow>& rows);

// ---- recovery ----

struct RecoveryParams {
  std::filesystem::path dir;
  std::uint64_t records = 1'000'000;
  std::uint64_t snapshot_at = 900'000;
  std::uint64_t keys = 100'000;
  std::size_t value_size = 128;
  int repeats = 3;
};

struct RecoveryResult {
  Lsn last_lsn = kNoLsn;
  Lsn snapshot_lsn = kNoLsn;
  std::uint64_t tail_records_read = 0;
  std::uint64_t full_records_read = 0;
  bool full_rebuild_used = false;
  double snapshot_seconds = 0;  // best of repeats
  double full_seconds = 0;      // best of repeats
  double ratio() const { return full_seconds > 0 ? snapshot_seconds / full_seconds : 0; }
};

/// Writes `records` puts into a fresh partition, checkpoints after
/// `snapshot_at`, then measures reopening with and without the snapshot.
RecoveryResult run_recovery(const RecoveryParams& params);
CsvTable recovery_table(const RecoveryParams& params, const RecoveryResult& r);

// ---- batchget-crossover ----

struct CrossoverParams {
  std::filesystem::path dir;
  std::uint64_t keys = 100'000;
  std::size_t value_size = 100;
  std::vector<std::size_t> batch_sizes{100, 1'000, 5'000, 10'000, 20'000, 50'000};
  std::uint64_t seed = 11;
};

struct CrossoverRow {
  std::size_t batch = 0;
  std::uint64_t live_keys = 0;
  BatchPath chosen = BatchPath::Index;
  double index_ms = 0;
  double scan_ms = 0;
  bool identical = false;
};

/// The cache holds nothing during this run, so the index path pays one log
/// read per key.
std::vector<CrossoverRow> run_crossover(const CrossoverParams& params);
CsvTable crossover_table(const std::vector<CrossoverRow>& rows);

// ---- freshness ----

struct FreshnessParams {
  std::filesystem::path dir;
  double writes_per_sec = 1000;
  Micros duration = 30'000'000;
  Micros sample_every = 20'000;
  std::uint64_t key_space = 10'000;
  std::size_t value_size = 1024;
  std::uint64_t seed = 3;
};

struct FreshnessSample {
  Micros t = 0;
  Lsn leader_lsn = kNoLsn;
  Lsn leader_commit = kNoLsn;
  std::vector<Lsn> follower_flushed;
  double score = 0;  // mean over followers
};

struct FreshnessResult {
  std::vector<FreshnessSample> samples;
  double mean_score = 0;
  double min_score = 0;
  std::uint64_t writes_acked = 0;
  std::uint64_t follower_reads = 0;
  std::uint64_t reads_served = 0;
  std::uint64_t reads_rejected = 0;
  std::uint64_t replay_reads = 0;  // summed over follower replicas
};

/// Simulated 3-node cluster, one partition, steady open-loop writes. At
/// every sample each follower also gets a read whose view is the leader's
/// potential commit LSN at that moment.
FreshnessResult run_freshness(const FreshnessParams& params);
CsvTable freshness_table(const FreshnessResult& r);

// ---- write-scaling ----

struct ScalingParams {
  std::filesystem::path dir;
  std::vector<std::uint32_t> partitions{1, 2};
  std::size_t clients = 1000;
  Micros sim_duration = 300'000;
  std::uint64_t key_space = 1'000'000;
  std::size_t value_size = 1024;
  std::uint64_t seed = 5;
  bool include_engine = true;  // also time the threaded single-node engine
  std::size_t engine_threads = 4;
  double engine_seconds = 2.0;
};

struct ScalingRow {
  std::string mode;  // "sim" or "engine"
  std::uint32_t partitions = 0;
  std::size_t clients = 0;
  std::uint64_t completed = 0;
  double ops_per_sec = 0;
  double p50_ms = 0;
  double p99_ms = 0;
};

std::vector<ScalingRow> run_write_scaling(const ScalingParams& params);
CsvTable scaling_table(const std::vector<ScalingRow>& rows);

// ---- fail-over ----

struct FailoverParams {
  std::filesystem::path dir;
  std::uint64_t acked_before_crash = 10'000;
  Micros write_interval = 50;
  std::uint64_t seed = 9;
};

struct FailoverResult {
  std::uint64_t acked = 0;
  std::uint64_t readable = 0;
  NodeId new_leader = 0;
  Epoch new_epoch = 0;
  Lsn leader_last_at_crash = kNoLsn;
  Lsn promoted_flushed = kNoLsn;
  std::uint64_t replay_reads_delta = 0;
  std::uint64_t index_size_delta = 0;    // index entries added by the promotion itself
  std::uint64_t scan_records_delta = 0;  // log records scanned by the promotion itself
  double promote_wall_ms = 0;
  bool accepts_writes = false;  // a put after promotion commits
};

/// 3-node simulated cluster: steady writes of distinct keys, crash the
/// leader once enough of them are acked, promote the freshest follower and
/// read every acked key back from it.
FailoverResult run_failover(const FailoverParams& params);

}  // namespace logstore::bench

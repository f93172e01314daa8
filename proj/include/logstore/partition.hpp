#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "logstore/cache.hpp"
#include "logstore/radix_index.hpp"
#include "logstore/recovery.hpp"
#include "logstore/segment_log.hpp"

namespace logstore {

struct PartitionOptions {
  std::filesystem::path dir;  // per-partition directory
  PartitionId id = 0;
  std::uint64_t segment_bytes = 64ull << 20;
  FlushPolicy flush_policy = FlushPolicy::Group;
  CacheConfig cache;
  std::uint64_t checkpoint_every = 1ull << 20;  // appended records between checkpoints; 0 = never
  bool auto_compact = true;
  double compaction_ratio = 0.5;  // compact when sealed-unsorted bytes > sorted bytes * ratio
  std::shared_ptr<IoStats> stats;
};

using KeyValue = std::pair<std::string, std::string>;
using BatchResult = std::vector<std::pair<std::string, std::optional<std::string>>>;

enum class BatchPath { Index, Scan };

/// Batches larger than this share of the live keys are answered by a scan.
inline constexpr double kBatchScanThreshold = 0.1;

/// One partition's storage state: log, index and read cache, plus the
/// write/read/delete flows over them. Exactly one thread (the partition
/// executor) may use a Partition; debug builds assert that.
class Partition {
 public:
  /// Opens the directory and recovers the index.
  explicit Partition(PartitionOptions options);

  Partition(const Partition&) = delete;
  Partition& operator=(const Partition&) = delete;

  /// Rebinds the owner check to the calling thread.
  void bind_owner();

  /// Leader write path: append, index, refresh the cache entry if present.
  LogPosition exec_put(std::string_view key, std::string_view value, Lsn lsn);
  /// Invalidate cache, drop index entry, append tombstone (always).
  bool exec_delete(std::string_view key, Lsn lsn);
  /// Cache first; on miss one read_at through the index, then admit.
  std::optional<std::string> exec_get(std::string_view key);
  BatchResult exec_batch_get(std::vector<std::string> keys);
  BatchResult exec_batch_get(std::vector<std::string> keys, BatchPath forced);
  std::vector<KeyValue> exec_range(std::string_view start, std::string_view end,
                                   std::size_t limit);

  /// Follower path: append a replicated record and index it right away.
  void apply_replicated(const LogRecord& rec);

  /// Group flush of everything appended so far; returns the flushed LSN.
  Lsn flush();

  CheckpointInfo checkpoint();
  CompactionResult compact();
  /// Runs checkpoint/compaction when their triggers fire. Call between batches.
  void maintain();

  static BatchPath choose_batch_path(std::size_t batch, std::size_t live_keys);

  Lsn last_lsn() const noexcept { return log_.last_lsn(); }
  Lsn flushed_lsn() const noexcept { return flushed_lsn_; }
  PartitionId id() const noexcept { return opts_.id; }
  std::size_t live_keys() const noexcept { return index_.size(); }
  const RecoveryReport& recovery() const noexcept { return recovery_; }
  const SegmentLog& log() const noexcept { return log_; }
  SegmentLog& log() noexcept { return log_; }
  const RadixIndex& index() const noexcept { return index_; }
  TwoStageCache& cache() noexcept { return cache_; }
  IoStats& io() const noexcept { return log_.stats(); }
  std::uint64_t replay_reads() const noexcept { return replay_reads_; }
  BatchPath last_batch_path() const noexcept { return last_batch_path_; }

 private:
  void check_owner() const;
  std::string value_at(const IndexEntry& e);

  PartitionOptions opts_;
  SegmentLog log_;
  RadixIndex index_;
  TwoStageCache cache_;
  RecoveryReport recovery_;
  Lsn flushed_lsn_ = kNoLsn;
  std::uint64_t appended_since_checkpoint_ = 0;
  // Log records re-read to bring the index up to date after they were
  // received. Applying at append time keeps this at zero.
  std::uint64_t replay_reads_ = 0;
  BatchPath last_batch_path_ = BatchPath::Index;
  std::thread::id owner_;
};

}  // namespace logstore

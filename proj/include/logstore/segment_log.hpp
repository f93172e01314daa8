#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "logstore/file.hpp"
#include "logstore/io_stats.hpp"
#include "logstore/log_record.hpp"
#include "logstore/types.hpp"

namespace logstore {

enum class SegmentState : std::uint8_t { Active, SealedUnsorted, Sorted };

std::string_view to_string(SegmentState s);

struct SegmentMeta {
  SegmentId segment_id = 0;
  SegmentState state = SegmentState::Active;
  Lsn min_lsn = kNoLsn;
  Lsn max_lsn = kNoLsn;
  std::uint64_t record_count = 0;
  std::uint64_t file_size = 0;
  // Sorted segments only: highest LSN among the compaction inputs, and the
  // length of the record region (the key directory follows it).
  Lsn covered_lsn = kNoLsn;
  std::uint64_t data_size = 0;

  friend bool operator==(const SegmentMeta&, const SegmentMeta&) = default;
};

enum class FlushPolicy {
  PerRecord,   // write + fdatasync on every append
  Group,       // write + fdatasync once per flush() call (one per executed batch)
  OsBuffered,  // write on flush(), never sync
};

struct SegmentLogOptions {
  std::filesystem::path dir;
  PartitionId partition = 0;
  std::uint64_t segment_bytes = 64ull << 20;
  FlushPolicy flush_policy = FlushPolicy::Group;
  std::shared_ptr<IoStats> stats;  // created when null
};

/// Outcome of a sequential scan over the unsorted segments.
struct ScanResult {
  Lsn last_valid_lsn = kNoLsn;
  std::uint64_t records_read = 0;  // records yielded (lsn >= start)
  bool torn_tail = false;
  std::uint64_t truncated_bytes = 0;
};

/// New position of a live key after compaction.
struct RemapEntry {
  std::string key;
  LogPosition position;
  Lsn lsn;
};

struct CompactionResult {
  SegmentMeta output;
  std::vector<RemapEntry> remap;  // ascending key order
  std::vector<SegmentId> removed_segments;
  std::uint64_t dropped_records = 0;
};

using RecordVisitor = std::function<void(const LogRecord&, LogPosition)>;

/// Segmented append-only log of one partition. Segment files are named
/// `p<partition>_s<segment_id>.log`; a MANIFEST lists their states.
///
/// Not thread-safe: every call happens on the partition's executor thread.
class SegmentLog {
 public:
  explicit SegmentLog(SegmentLogOptions options);
  ~SegmentLog();

  SegmentLog(const SegmentLog&) = delete;
  SegmentLog& operator=(const SegmentLog&) = delete;

  /// Appends one record; lsn must be last_lsn() + 1. The record becomes
  /// durable per the flush policy; read_at works immediately.
  LogPosition append(RecordKind kind, std::string_view key, std::string_view value, Lsn lsn);
  LogPosition append(const LogRecord& rec) { return append(rec.kind, rec.key, rec.value, rec.lsn); }

  /// Writes buffered records and syncs according to the flush policy.
  void flush();

  /// Reads one record with a single positioned read (a second one only for
  /// records longer than the read-ahead window) and verifies its checksum.
  LogRecord read_at(LogPosition pos) const;

  /// Seals the active segment and opens a fresh one. No-op on an empty
  /// active segment.
  SegmentMeta seal_and_rotate();

  /// Merges every Sorted and SealedUnsorted segment into one new Sorted
  /// segment: newest record per key, tombstoned keys dropped. apply_remap is
  /// invoked after the output is durable and before the inputs are deleted;
  /// if anything fails before that point the inputs stay untouched.
  CompactionResult compact_merge(const std::function<void(const CompactionResult&)>& apply_remap);

  /// Yields records with lsn >= start_lsn from the unsorted segments in LSN
  /// order. Stops at the first torn record. With truncate_torn, the torn
  /// bytes are cut from the active segment (recovery mode).
  ScanResult scan_from(Lsn start_lsn, const RecordVisitor& visit, bool truncate_torn = false);
  std::vector<LogRecord> iter_from_lsn(Lsn start_lsn);

  /// Visits every record of every Sorted segment (ascending key per segment).
  void scan_sorted(const RecordVisitor& visit) const;
  /// Visits sorted-segment records with start <= key < end, seeking through
  /// the in-file key directory.
  void scan_sorted_range(std::string_view start, std::string_view end,
                         const RecordVisitor& visit) const;

  Lsn last_lsn() const noexcept { return last_lsn_; }
  Lsn max_covered_lsn() const noexcept;
  std::vector<SegmentMeta> segments() const;
  const SegmentMeta& active() const;
  std::uint64_t unsorted_bytes() const;
  std::uint64_t sorted_bytes() const;
  bool faulted() const noexcept { return faulted_; }
  bool needs_recovery() const noexcept { return needs_recovery_; }
  IoStats& stats() const noexcept { return *stats_; }
  const std::filesystem::path& dir() const noexcept { return opts_.dir; }
  PartitionId partition() const noexcept { return opts_.partition; }

  std::filesystem::path segment_path(SegmentId id) const;

  /// Key-directory stride of sorted segments.
  static constexpr std::size_t kDirectoryStride = 64;
  /// Bytes fetched by the first read of read_at.
  static constexpr std::size_t kReadAhead = 4096;

 private:
  struct Segment {
    SegmentMeta meta;
    File file;
  };

  void load_manifest();
  void write_manifest();
  Segment& create_active(SegmentId id);
  void write_pending();
  [[noreturn]] void fault(const std::exception& e);
  void check_writable() const;
  std::string segment_bytes(const Segment& seg) const;

  SegmentLogOptions opts_;
  std::shared_ptr<IoStats> stats_;
  std::map<SegmentId, Segment> segments_;
  SegmentId active_id_ = 0;
  SegmentId next_segment_id_ = 0;
  Lsn last_lsn_ = kNoLsn;

  // Records appended to the active segment but not yet written to the file.
  std::string pending_;
  std::uint64_t written_size_ = 0;  // bytes of the active file already written
  bool faulted_ = false;
  // Set when an existing active segment was opened; cleared by a
  // scan_from(..., truncate_torn = true) pass.
  bool needs_recovery_ = false;
};

}  // namespace logstore

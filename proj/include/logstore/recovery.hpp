#pragma once

#include <filesystem>
#include <optional>

#include "logstore/radix_index.hpp"
#include "logstore/segment_log.hpp"

namespace logstore {

struct CheckpointInfo {
  std::filesystem::path file;
  SnapshotInfo snapshot;
  std::uint64_t bytes = 0;
};

/// Writes `p<partition>_snap_<last_included_lsn>.idx` for the given index via
/// temp file + rename, then deletes older snapshots of the partition. The
/// active segment is sealed first so the next recovery tail starts on a
/// segment boundary. Must run on the partition's executor thread.
CheckpointInfo write_checkpoint(const RadixIndex& index, SegmentLog& log);

struct RecoveryReport {
  bool used_snapshot = false;
  bool full_rebuild = false;
  std::optional<SnapshotInfo> snapshot;
  std::uint64_t tail_records_read = 0;  // records replayed from the unsorted tail
  std::uint64_t sorted_records_read = 0;
  Lsn last_valid_lsn = kNoLsn;
  bool torn_tail = false;
  std::uint64_t truncated_bytes = 0;
  double seconds = 0.0;
};

/// Applies one replayed record to the index only: puts are version-checked
/// and deletes only remove entries older than the tombstone, so replaying
/// any record twice is harmless.
void replay_record(RadixIndex& index, const LogRecord& rec, LogPosition pos);

/// Rebuilds the index: newest valid snapshot + unsorted tail, or a full scan
/// of every segment when no usable snapshot exists. Truncates a torn tail.
RecoveryReport recover_index(SegmentLog& log, RadixIndex& index);

/// Path of the newest snapshot file in dir for the partition, if any.
std::optional<std::filesystem::path> newest_snapshot(const std::filesystem::path& dir,
                                                     PartitionId partition);

}  // namespace logstore

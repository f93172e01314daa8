#pragma once

#include <atomic>
#include <cstdint>

namespace logstore {

/// Disk traffic counters. Every byte the store writes goes through exactly one
/// of the *_bytes_written buckets, which is what the write-once checks rely on.
struct IoStats {
  std::atomic<std::uint64_t> record_bytes_written{0};      // appended log records
  std::atomic<std::uint64_t> compaction_bytes_written{0};  // sorted segments (records + key directory)
  std::atomic<std::uint64_t> snapshot_bytes_written{0};
  std::atomic<std::uint64_t> manifest_bytes_written{0};
  std::atomic<std::uint64_t> write_calls{0};
  std::atomic<std::uint64_t> sync_calls{0};

  std::atomic<std::uint64_t> log_reads{0};       // read_at calls (point reads)
  std::atomic<std::uint64_t> read_syscalls{0};   // positioned reads issued by read_at
  std::atomic<std::uint64_t> scan_records_read{0};  // records decoded by sequential scans

  std::uint64_t total_bytes_written() const noexcept {
    return record_bytes_written + compaction_bytes_written + snapshot_bytes_written +
           manifest_bytes_written;
  }
};

}  // namespace logstore

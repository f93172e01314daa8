#include "logstore/recovery.hpp"

#include <chrono>
#include <set>
#include <vector>

#include <spdlog/spdlog.h>

#include "logstore/file.hpp"

namespace logstore {

namespace fs = std::filesystem;

namespace {

std::string snapshot_prefix(PartitionId partition) {
  return "p" + std::to_string(partition) + "_snap_";
}

// Snapshot files of the partition keyed by the LSN in their name.
std::vector<std::pair<Lsn, fs::path>> list_snapshots(const fs::path& dir, PartitionId partition) {
  std::vector<std::pair<Lsn, fs::path>> out;
  const auto prefix = snapshot_prefix(partition);
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!name.starts_with(prefix) || entry.path().extension() != ".idx") continue;
    const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - 4);
    try {
      out.emplace_back(std::stoull(digits), entry.path());
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  return out;
}

}  // namespace

std::optional<fs::path> newest_snapshot(const fs::path& dir, PartitionId partition) {
  auto all = list_snapshots(dir, partition);
  if (all.empty()) return std::nullopt;
  return all.front().second;
}

CheckpointInfo write_checkpoint(const RadixIndex& index, SegmentLog& log) {
  log.flush();
  log.seal_and_rotate();

  std::string data;
  CheckpointInfo info;
  info.snapshot = write_snapshot(index, data);
  info.bytes = data.size();
  info.file = log.dir() / (snapshot_prefix(log.partition()) +
                           std::to_string(info.snapshot.last_included_lsn) + ".idx");
  // write_file_atomic leaves the previous snapshot in place if it throws.
  write_file_atomic(info.file, data);
  log.stats().snapshot_bytes_written += data.size();
  log.stats().write_calls++;
  log.stats().sync_calls++;

  for (const auto& [lsn, path] : list_snapshots(log.dir(), log.partition())) {
    if (path != info.file) {
      std::error_code ec;
      fs::remove(path, ec);
    }
  }
  return info;
}

void replay_record(RadixIndex& index, const LogRecord& rec, LogPosition pos) {
  if (rec.kind == RecordKind::Put) {
    index.put(rec.key, pos, rec.lsn);
    return;
  }
  if (auto e = index.get(rec.key); e && e->version_lsn < rec.lsn) index.remove(rec.key);
}

RecoveryReport recover_index(SegmentLog& log, RadixIndex& index) {
  const auto t0 = std::chrono::steady_clock::now();
  RecoveryReport report;
  index.clear();

  std::set<SegmentId> live_segments;
  for (const auto& m : log.segments()) live_segments.insert(m.segment_id);

  if (auto path = newest_snapshot(log.dir(), log.partition())) {
    try {
      auto loaded = load_snapshot(read_file(*path));
      bool usable = loaded.info.last_included_lsn >= log.max_covered_lsn();
      // A snapshot that points into segments removed by a later compaction
      // is stale even if its LSN looks fine.
      loaded.index.for_each([&](const IndexEntry& e) {
        if (!live_segments.contains(e.position.segment_id)) usable = false;
        return usable;
      });
      if (usable) {
        index = std::move(loaded.index);
        report.used_snapshot = true;
        report.snapshot = loaded.info;
      } else {
        spdlog::warn("recovery p{}: snapshot {} predates a compaction, rebuilding from the log",
                     log.partition(), path->string());
      }
    } catch (const CorruptSnapshot& e) {
      spdlog::warn("recovery p{}: {} ({}), rebuilding from the log", log.partition(), e.what(),
                   path->string());
    }
  }

  Lsn start = 1;
  if (report.used_snapshot) {
    start = report.snapshot->last_included_lsn + 1;
  } else {
    report.full_rebuild = true;
    log.scan_sorted([&](const LogRecord& rec, LogPosition pos) {
      replay_record(index, rec, pos);
      report.sorted_records_read++;
    });
  }

  auto scan = log.scan_from(
      start, [&](const LogRecord& rec, LogPosition pos) { replay_record(index, rec, pos); },
      /*truncate_torn=*/true);
  report.tail_records_read = scan.records_read;
  report.torn_tail = scan.torn_tail;
  report.truncated_bytes = scan.truncated_bytes;
  report.last_valid_lsn = log.last_lsn();
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace logstore

#include "logstore/partition.hpp"

#include <algorithm>
#include <cassert>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace logstore {

namespace {

SegmentLogOptions log_options(const PartitionOptions& o) {
  return SegmentLogOptions{o.dir, o.id, o.segment_bytes, o.flush_policy, o.stats};
}

}  // namespace

Partition::Partition(PartitionOptions options)
    : opts_(std::move(options)),
      log_(log_options(opts_)),
      cache_(opts_.cache),
      owner_(std::this_thread::get_id()) {
  recovery_ = recover_index(log_, index_);
  flushed_lsn_ = log_.last_lsn();
}

void Partition::bind_owner() { owner_ = std::this_thread::get_id(); }

void Partition::check_owner() const {
  assert(owner_ == std::this_thread::get_id() && "partition used off its executor thread");
}

LogPosition Partition::exec_put(std::string_view key, std::string_view value, Lsn lsn) {
  check_owner();
  auto pos = log_.append(RecordKind::Put, key, value, lsn);
  index_.put(key, pos, lsn);
  if (cache_.contains(key)) cache_.admit(key, value, lsn);
  ++appended_since_checkpoint_;
  return pos;
}

bool Partition::exec_delete(std::string_view key, Lsn lsn) {
  check_owner();
  cache_.invalidate(key);
  const bool existed = index_.remove(key).has_value();
  log_.append(RecordKind::Delete, key, {}, lsn);
  ++appended_since_checkpoint_;
  return existed;
}

std::string Partition::value_at(const IndexEntry& e) {
  auto rec = log_.read_at(e.position);
  if (rec.key != e.key || rec.lsn != e.version_lsn) {
    throw CorruptRecord("index entry for '" + e.key + "' points at a different record");
  }
  return std::move(rec.value);
}

std::optional<std::string> Partition::exec_get(std::string_view key) {
  check_owner();
  if (auto hit = cache_.get(key)) return std::move(hit->value);
  auto entry = index_.get(key);
  if (!entry) return std::nullopt;
  auto value = value_at(*entry);
  cache_.admit(key, value, entry->version_lsn);
  return value;
}

BatchPath Partition::choose_batch_path(std::size_t batch, std::size_t live_keys) {
  if (live_keys == 0) return BatchPath::Index;
  return static_cast<double>(batch) / static_cast<double>(live_keys) > kBatchScanThreshold
             ? BatchPath::Scan
             : BatchPath::Index;
}

BatchResult Partition::exec_batch_get(std::vector<std::string> keys) {
  const auto path = choose_batch_path(keys.size(), index_.size());
  return exec_batch_get(std::move(keys), path);
}

BatchResult Partition::exec_batch_get(std::vector<std::string> keys, BatchPath forced) {
  check_owner();
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  last_batch_path_ = forced;
  BatchResult out;
  out.reserve(keys.size());

  if (forced == BatchPath::Index) {
    for (auto& k : keys) {
      auto v = exec_get(k);
      out.emplace_back(std::move(k), std::move(v));
    }
    return out;
  }

  // One sequential pass over sorted then unsorted segments, newest record
  // per wanted key wins.
  flush();
  std::unordered_set<std::string_view> wanted(keys.begin(), keys.end());
  std::unordered_map<std::string, LogRecord> newest;
  auto take = [&](const LogRecord& rec, LogPosition) {
    if (!wanted.contains(rec.key)) return;
    auto& slot = newest[rec.key];
    if (rec.lsn > slot.lsn) slot = rec;
  };
  log_.scan_sorted(take);
  log_.scan_from(1, take);
  for (auto& k : keys) {
    auto it = newest.find(k);
    if (it == newest.end() || it->second.kind == RecordKind::Delete) {
      out.emplace_back(std::move(k), std::nullopt);
    } else {
      out.emplace_back(std::move(k), std::move(it->second.value));
    }
  }
  return out;
}

std::vector<KeyValue> Partition::exec_range(std::string_view start, std::string_view end,
                                            std::size_t limit) {
  check_owner();
  std::vector<KeyValue> out;
  for (auto& e : index_.range(start, end, limit)) {
    if (auto hit = cache_.get(e.key)) {
      out.emplace_back(e.key, std::move(hit->value));
    } else {
      auto v = value_at(e);
      cache_.admit(e.key, v, e.version_lsn);
      out.emplace_back(e.key, std::move(v));
    }
  }
  return out;
}

void Partition::apply_replicated(const LogRecord& rec) {
  check_owner();
  auto pos = log_.append(rec);
  if (rec.kind == RecordKind::Put) {
    index_.put(rec.key, pos, rec.lsn);
    if (cache_.contains(rec.key)) cache_.admit(rec.key, rec.value, rec.lsn);
  } else {
    cache_.invalidate(rec.key);
    index_.remove(rec.key);
  }
  ++appended_since_checkpoint_;
}

Lsn Partition::flush() {
  check_owner();
  log_.flush();
  flushed_lsn_ = log_.last_lsn();
  return flushed_lsn_;
}

CheckpointInfo Partition::checkpoint() {
  check_owner();
  auto info = write_checkpoint(index_, log_);
  flushed_lsn_ = log_.last_lsn();
  appended_since_checkpoint_ = 0;
  return info;
}

CompactionResult Partition::compact() {
  check_owner();
  flush();
  log_.seal_and_rotate();
  auto result = log_.compact_merge([this](const CompactionResult& r) {
    for (const auto& m : r.remap) index_.relocate(m.key, m.position, m.lsn);
  });
  // Sorted segments are only covered by a snapshot taken after them.
  if (!result.removed_segments.empty()) checkpoint();
  return result;
}

void Partition::maintain() {
  check_owner();
  if (log_.faulted()) return;
  if (opts_.checkpoint_every > 0 && appended_since_checkpoint_ >= opts_.checkpoint_every) {
    checkpoint();
  }
  if (opts_.auto_compact) {
    const auto unsorted = log_.unsorted_bytes();
    if (unsorted > 0 &&
        static_cast<double>(unsorted) > static_cast<double>(log_.sorted_bytes()) * opts_.compaction_ratio) {
      compact();
    }
  }
}

}  // namespace logstore

#include "logstore/segment_log.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "logstore/bytes.hpp"

namespace logstore {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kDirectoryMagic = 0x5244534C;  // "LSDR"
constexpr std::size_t kTrailerSize = 8 + 4 + 4 + 4;
constexpr std::string_view kManifestName = "MANIFEST";
constexpr std::string_view kManifestHeader = "logstore-manifest 1";

SegmentState parse_state(const std::string& s) {
  if (s == "active") return SegmentState::Active;
  if (s == "sealed") return SegmentState::SealedUnsorted;
  if (s == "sorted") return SegmentState::Sorted;
  throw CorruptRecord("MANIFEST: unknown segment state " + s);
}

bool all_zero(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == 0; });
}

}  // namespace

std::string_view to_string(SegmentState s) {
  switch (s) {
    case SegmentState::Active: return "active";
    case SegmentState::SealedUnsorted: return "sealed";
    case SegmentState::Sorted: return "sorted";
  }
  return "?";
}

SegmentLog::SegmentLog(SegmentLogOptions options)
    : opts_(std::move(options)), stats_(opts_.stats ? opts_.stats : std::make_shared<IoStats>()) {
  fs::create_directories(opts_.dir);
  // Leftovers of an interrupted compaction or manifest rewrite.
  for (const auto& entry : fs::directory_iterator(opts_.dir)) {
    if (entry.path().extension() == ".tmp") fs::remove(entry.path());
  }
  if (fs::exists(opts_.dir / kManifestName)) {
    load_manifest();
  } else {
    create_active(next_segment_id_++);
    write_manifest();
  }
}

SegmentLog::~SegmentLog() {
  if (!faulted_ && !pending_.empty()) {
    try {
      write_pending();
    } catch (const std::exception& e) {
      spdlog::warn("segment log p{}: final flush failed: {}", opts_.partition, e.what());
    }
  }
}

fs::path SegmentLog::segment_path(SegmentId id) const {
  return opts_.dir / ("p" + std::to_string(opts_.partition) + "_s" + std::to_string(id) + ".log");
}

void SegmentLog::load_manifest() {
  std::istringstream in(read_file(opts_.dir / kManifestName));
  std::string line;
  std::getline(in, line);
  if (line != kManifestHeader) throw CorruptRecord("MANIFEST: bad header");
  bool have_active = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "next_segment") {
      ls >> next_segment_id_;
    } else if (tag == "segment") {
      SegmentMeta m;
      std::string state;
      ls >> m.segment_id >> state >> m.min_lsn >> m.max_lsn >> m.record_count >> m.file_size >>
          m.covered_lsn >> m.data_size;
      if (!ls) throw CorruptRecord("MANIFEST: malformed line: " + line);
      m.state = parse_state(state);
      auto path = segment_path(m.segment_id);
      if (m.state == SegmentState::Active) {
        have_active = true;
        active_id_ = m.segment_id;
        File f(path, File::Mode::Append);
        m.file_size = f.size();
        written_size_ = m.file_size;
        needs_recovery_ = m.file_size > 0;
        m.min_lsn = m.max_lsn = kNoLsn;
        m.record_count = 0;
        segments_.emplace(m.segment_id, Segment{m, std::move(f)});
      } else {
        File f(path, File::Mode::ReadOnly);
        last_lsn_ = std::max(last_lsn_, m.state == SegmentState::Sorted
                                             ? std::max(m.max_lsn, m.covered_lsn)
                                             : m.max_lsn);
        segments_.emplace(m.segment_id, Segment{m, std::move(f)});
      }
    } else {
      throw CorruptRecord("MANIFEST: unknown entry " + tag);
    }
  }
  if (!have_active) {
    create_active(next_segment_id_++);
    write_manifest();
  }
}

void SegmentLog::write_manifest() {
  std::ostringstream out;
  out << kManifestHeader << "\n";
  out << "next_segment " << next_segment_id_ << "\n";
  for (const auto& [id, seg] : segments_) {
    const auto& m = seg.meta;
    out << "segment " << m.segment_id << ' ' << to_string(m.state) << ' ' << m.min_lsn << ' '
        << m.max_lsn << ' ' << m.record_count << ' ' << m.file_size << ' ' << m.covered_lsn << ' '
        << m.data_size << "\n";
  }
  auto text = out.str();
  write_file_atomic(opts_.dir / kManifestName, text);
  stats_->manifest_bytes_written += text.size();
  stats_->write_calls++;
  stats_->sync_calls++;
}

SegmentLog::Segment& SegmentLog::create_active(SegmentId id) {
  File f(segment_path(id), File::Mode::Truncate);
  f = File(segment_path(id), File::Mode::Append);
  SegmentMeta m;
  m.segment_id = id;
  m.state = SegmentState::Active;
  active_id_ = id;
  written_size_ = 0;
  auto [it, _] = segments_.insert_or_assign(id, Segment{m, std::move(f)});
  return it->second;
}

const SegmentMeta& SegmentLog::active() const { return segments_.at(active_id_).meta; }

void SegmentLog::fault(const std::exception& e) {
  faulted_ = true;
  spdlog::error("segment log p{}: entering read-only fault state: {}", opts_.partition, e.what());
  throw IoError(e.what());
}

void SegmentLog::check_writable() const {
  if (needs_recovery_) throw Error("segment log needs a recovery scan before writing");
  if (faulted_) throw PartitionFaulted("partition " + std::to_string(opts_.partition) + " is read-only after an IO failure");
}

LogPosition SegmentLog::append(RecordKind kind, std::string_view key, std::string_view value,
                               Lsn lsn) {
  check_writable();
  if (key.empty()) throw InvalidArgument("empty key");
  if (kind == RecordKind::Delete && !value.empty()) throw InvalidArgument("delete with value");
  if (key.size() > kMaxFieldSize || value.size() > kMaxFieldSize) {
    throw InvalidArgument("key or value too large");
  }
  if (lsn != last_lsn_ + 1) {
    throw InvalidArgument("lsn gap: expected " + std::to_string(last_lsn_ + 1) + ", got " +
                          std::to_string(lsn));
  }
  const auto size = LogRecord::kHeaderSize + key.size() + value.size();
  if (active().record_count > 0 && active().file_size + size > opts_.segment_bytes) {
    seal_and_rotate();
  }

  auto& meta = segments_.at(active_id_).meta;
  LogPosition pos{active_id_, meta.file_size};
  encode_record(LogRecord{lsn, kind, std::string(key), std::string(value)}, pending_);
  meta.file_size += size;
  if (meta.record_count == 0) meta.min_lsn = lsn;
  meta.max_lsn = lsn;
  meta.record_count++;
  last_lsn_ = lsn;

  if (opts_.flush_policy == FlushPolicy::PerRecord) {
    write_pending();
    try {
      segments_.at(active_id_).file.sync();
      stats_->sync_calls++;
    } catch (const std::exception& e) {
      fault(e);
    }
  }
  return pos;
}

void SegmentLog::write_pending() {
  if (pending_.empty()) return;
  try {
    segments_.at(active_id_).file.write_all(pending_);
  } catch (const std::exception& e) {
    fault(e);
  }
  stats_->record_bytes_written += pending_.size();
  stats_->write_calls++;
  written_size_ += pending_.size();
  pending_.clear();
}

void SegmentLog::flush() {
  check_writable();
  if (pending_.empty()) return;
  write_pending();
  if (opts_.flush_policy == FlushPolicy::Group) {
    try {
      segments_.at(active_id_).file.sync();
      stats_->sync_calls++;
    } catch (const std::exception& e) {
      fault(e);
    }
  }
}

LogRecord SegmentLog::read_at(LogPosition pos) const {
  auto it = segments_.find(pos.segment_id);
  if (it == segments_.end()) {
    throw InvalidPosition("no segment " + std::to_string(pos.segment_id));
  }
  const auto& seg = it->second;
  stats_->log_reads++;

  if (pos.segment_id == active_id_ && pos.offset >= written_size_) {
    if (pos.offset - written_size_ >= pending_.size()) {
      throw InvalidPosition("offset beyond end of segment");
    }
    auto r = decode_record(std::string_view(pending_).substr(pos.offset - written_size_));
    if (r.status != DecodeStatus::Ok) throw CorruptRecord("corrupt buffered record");
    return std::move(r.record);
  }

  const std::uint64_t limit = seg.meta.state == SegmentState::Sorted
                                  ? seg.meta.data_size
                                  : (pos.segment_id == active_id_ ? written_size_ : seg.meta.file_size);
  if (pos.offset >= limit) throw InvalidPosition("offset beyond end of segment");

  auto buf = seg.file.pread(pos.offset, std::min<std::uint64_t>(kReadAhead, limit - pos.offset));
  stats_->read_syscalls++;
  auto header = decode_header(buf);
  if (!header) throw CorruptRecord("corrupt record header at " + std::to_string(pos.offset));
  if (pos.offset + header->total_size() > limit) {
    throw CorruptRecord("record at " + std::to_string(pos.offset) + " overruns its segment");
  }
  if (header->total_size() > buf.size()) {
    buf += seg.file.pread(pos.offset + buf.size(), header->total_size() - buf.size());
    stats_->read_syscalls++;
  }
  auto r = decode_record(buf);
  if (r.status != DecodeStatus::Ok) {
    throw CorruptRecord("checksum mismatch at segment " + std::to_string(pos.segment_id) +
                        " offset " + std::to_string(pos.offset));
  }
  return std::move(r.record);
}

SegmentMeta SegmentLog::seal_and_rotate() {
  check_writable();
  auto& seg = segments_.at(active_id_);
  if (seg.meta.record_count == 0) return seg.meta;
  write_pending();
  try {
    if (opts_.flush_policy != FlushPolicy::OsBuffered) {
      seg.file.sync();
      stats_->sync_calls++;
    }
    seg.meta.state = SegmentState::SealedUnsorted;
    auto sealed = seg.meta;
    create_active(next_segment_id_++);
    write_manifest();
    return sealed;
  } catch (const std::exception& e) {
    fault(e);
  }
}

std::string SegmentLog::segment_bytes(const Segment& seg) const {
  std::string data;
  if (seg.meta.segment_id == active_id_) {
    data = seg.file.pread(0, written_size_);
    data += pending_;
  } else {
    data = seg.file.pread(0, seg.meta.file_size);
  }
  return data;
}

ScanResult SegmentLog::scan_from(Lsn start_lsn, const RecordVisitor& visit, bool truncate_torn) {
  ScanResult result;
  Lsn prev = kNoLsn;
  for (auto& [id, seg] : segments_) {
    if (seg.meta.state == SegmentState::Sorted) continue;
    const bool is_active = id == active_id_;
    if (!is_active) {
      if (seg.meta.record_count == 0) continue;
      if (seg.meta.max_lsn < start_lsn) {
        prev = seg.meta.max_lsn;
        result.last_valid_lsn = std::max(result.last_valid_lsn, seg.meta.max_lsn);
        continue;
      }
    }

    const auto data = segment_bytes(seg);
    std::string_view rest(data);
    std::uint64_t offset = 0;
    SegmentMeta rebuilt = seg.meta;
    if (is_active && truncate_torn) {
      rebuilt.min_lsn = rebuilt.max_lsn = kNoLsn;
      rebuilt.record_count = 0;
    }
    bool stop = false;
    while (!rest.empty()) {
      auto r = decode_record(rest);
      if (r.status != DecodeStatus::Ok) {
        // Only the end of the active segment may be torn; anything else is
        // real corruption and is surfaced.
        bool torn = false;
        if (is_active) {
          auto header = decode_header(rest);
          if (r.status == DecodeStatus::Truncated) {
            torn = true;
          } else if (!header) {
            torn = rest.size() < LogRecord::kHeaderSize || all_zero(rest);
          } else {
            torn = header->total_size() >= rest.size();
          }
        }
        if (!torn) {
          throw CorruptRecord("corrupt record in segment " + std::to_string(id) + " at offset " +
                              std::to_string(offset));
        }
        result.torn_tail = true;
        result.truncated_bytes = rest.size();
        if (truncate_torn) {
          write_pending();
          seg.file.truncate(offset);
          written_size_ = offset;
          rebuilt.file_size = offset;
          spdlog::warn("segment log p{}: truncated {} torn bytes at segment {} offset {}",
                       opts_.partition, rest.size(), id, offset);
        }
        stop = true;
        break;
      }
      const auto& rec = r.record;
      if (prev != kNoLsn && rec.lsn != prev + 1) {
        throw CorruptRecord("lsn discontinuity in segment " + std::to_string(id) + ": " +
                            std::to_string(prev) + " -> " + std::to_string(rec.lsn));
      }
      prev = rec.lsn;
      result.last_valid_lsn = rec.lsn;
      if (is_active && truncate_torn) {
        if (rebuilt.record_count == 0) rebuilt.min_lsn = rec.lsn;
        rebuilt.max_lsn = rec.lsn;
        rebuilt.record_count++;
      }
      if (rec.lsn >= start_lsn) {
        stats_->scan_records_read++;
        result.records_read++;
        visit(rec, LogPosition{id, offset});
      }
      offset += r.consumed;
      rest.remove_prefix(r.consumed);
    }
    if (is_active && truncate_torn) {
      seg.meta = rebuilt;
      needs_recovery_ = false;
      last_lsn_ = std::max(last_lsn_, result.last_valid_lsn);
    }
    if (stop) break;
  }
  return result;
}

std::vector<LogRecord> SegmentLog::iter_from_lsn(Lsn start_lsn) {
  if (start_lsn == kNoLsn) throw InvalidArgument("start_lsn must be >= 1");
  std::vector<LogRecord> out;
  scan_from(start_lsn, [&](const LogRecord& r, LogPosition) { out.push_back(r); });
  return out;
}

void SegmentLog::scan_sorted(const RecordVisitor& visit) const {
  for (const auto& [id, seg] : segments_) {
    if (seg.meta.state != SegmentState::Sorted) continue;
    auto data = seg.file.pread(0, seg.meta.data_size);
    std::string_view rest(data);
    std::uint64_t offset = 0;
    while (!rest.empty()) {
      auto r = decode_record(rest);
      if (r.status != DecodeStatus::Ok) {
        throw CorruptRecord("corrupt record in sorted segment " + std::to_string(id));
      }
      stats_->scan_records_read++;
      visit(r.record, LogPosition{id, offset});
      offset += r.consumed;
      rest.remove_prefix(r.consumed);
    }
  }
}

void SegmentLog::scan_sorted_range(std::string_view start, std::string_view end,
                                   const RecordVisitor& visit) const {
  for (const auto& [id, seg] : segments_) {
    if (seg.meta.state != SegmentState::Sorted || seg.meta.record_count == 0) continue;
    // Trailer: [dir_offset u64 | dir_count u32 | dir_crc u32 | magic u32]
    auto trailer = seg.file.pread(seg.meta.file_size - kTrailerSize, kTrailerSize);
    if (trailer.size() != kTrailerSize || load_u32(trailer.data() + 16) != kDirectoryMagic) {
      throw CorruptRecord("bad key directory trailer in segment " + std::to_string(id));
    }
    const auto dir_offset = load_u64(trailer.data());
    const auto dir_count = load_u32(trailer.data() + 8);
    auto dir = seg.file.pread(dir_offset, seg.meta.file_size - kTrailerSize - dir_offset);
    if (crc32(dir) != load_u32(trailer.data() + 12)) {
      throw CorruptRecord("key directory checksum mismatch in segment " + std::to_string(id));
    }
    ByteReader reader(dir);
    std::uint64_t seek = 0;
    for (std::uint32_t i = 0; i < dir_count; ++i) {
      auto key = reader.bytes();
      auto off = reader.u64();
      if (key <= start) {
        seek = off;
      } else {
        break;
      }
    }
    auto data = seg.file.pread(seek, seg.meta.data_size - seek);
    std::string_view rest(data);
    std::uint64_t offset = seek;
    while (!rest.empty()) {
      auto r = decode_record(rest);
      if (r.status != DecodeStatus::Ok) {
        throw CorruptRecord("corrupt record in sorted segment " + std::to_string(id));
      }
      stats_->scan_records_read++;
      if (r.record.key >= end) break;
      if (r.record.key >= start) visit(r.record, LogPosition{id, offset});
      offset += r.consumed;
      rest.remove_prefix(r.consumed);
    }
  }
}

CompactionResult SegmentLog::compact_merge(
    const std::function<void(const CompactionResult&)>& apply_remap) {
  check_writable();
  std::vector<SegmentId> inputs;
  std::size_t sorted_inputs = 0, unsorted_inputs = 0;
  for (const auto& [id, seg] : segments_) {
    if (seg.meta.state == SegmentState::Sorted) {
      inputs.push_back(id);
      ++sorted_inputs;
    } else if (seg.meta.state == SegmentState::SealedUnsorted) {
      inputs.push_back(id);
      ++unsorted_inputs;
    }
  }
  CompactionResult result;
  if (unsorted_inputs == 0 && sorted_inputs <= 1) {
    // Nothing to merge: the output is the sorted input itself.
    if (sorted_inputs == 1) result.output = segments_.at(inputs.front()).meta;
    return result;
  }

  // Last writer wins over every input.
  std::map<std::string, LogRecord> newest;
  Lsn covered = kNoLsn;
  std::uint64_t input_records = 0;
  for (auto id : inputs) {
    const auto& seg = segments_.at(id);
    covered = std::max({covered, seg.meta.max_lsn, seg.meta.covered_lsn});
    const auto data = seg.meta.state == SegmentState::Sorted
                          ? seg.file.pread(0, seg.meta.data_size)
                          : seg.file.pread(0, seg.meta.file_size);
    std::string_view rest(data);
    while (!rest.empty()) {
      auto r = decode_record(rest);
      if (r.status != DecodeStatus::Ok) {
        throw CorruptRecord("compaction input segment " + std::to_string(id) + " is corrupt");
      }
      ++input_records;
      stats_->scan_records_read++;
      rest.remove_prefix(r.consumed);
      auto& slot = newest[r.record.key];
      if (r.record.lsn > slot.lsn) slot = std::move(r.record);
    }
  }

  const SegmentId out_id = next_segment_id_++;
  SegmentMeta out;
  out.segment_id = out_id;
  out.state = SegmentState::Sorted;
  out.covered_lsn = covered;

  std::string buf;
  std::string directory;
  std::uint32_t dir_count = 0;
  for (auto& [key, rec] : newest) {
    if (rec.kind == RecordKind::Delete) continue;
    if (out.record_count % kDirectoryStride == 0) {
      put_bytes(directory, key);
      put_u64(directory, buf.size());
      ++dir_count;
    }
    result.remap.push_back({key, LogPosition{out_id, buf.size()}, rec.lsn});
    encode_record(rec, buf);
    out.min_lsn = out.record_count == 0 ? rec.lsn : std::min(out.min_lsn, rec.lsn);
    out.max_lsn = std::max(out.max_lsn, rec.lsn);
    out.record_count++;
  }
  out.data_size = buf.size();
  const auto dir_crc = crc32(directory);
  buf += directory;
  put_u64(buf, out.data_size);
  put_u32(buf, dir_count);
  put_u32(buf, dir_crc);
  put_u32(buf, kDirectoryMagic);
  out.file_size = buf.size();
  result.dropped_records = input_records - out.record_count;

  const auto final_path = segment_path(out_id);
  auto tmp_path = final_path;
  tmp_path += ".tmp";
  try {
    {
      File f(tmp_path, File::Mode::Truncate);
      f.write_all(buf);
      f.sync();
    }
    stats_->compaction_bytes_written += buf.size();
    stats_->write_calls++;
    stats_->sync_calls++;
    fs::rename(tmp_path, final_path);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(tmp_path, ec);
    throw IoError(std::string("compaction output failed: ") + e.what());
  }

  result.output = out;
  result.removed_segments = inputs;
  try {
    apply_remap(result);
  } catch (...) {
    std::error_code ec;
    fs::remove(final_path, ec);
    throw;
  }

  for (auto id : inputs) segments_.erase(id);
  segments_.emplace(out_id, Segment{out, File(final_path, File::Mode::ReadOnly)});
  write_manifest();
  for (auto id : inputs) {
    std::error_code ec;
    fs::remove(segment_path(id), ec);
  }
  return result;
}

Lsn SegmentLog::max_covered_lsn() const noexcept {
  Lsn m = kNoLsn;
  for (const auto& [id, seg] : segments_) {
    if (seg.meta.state == SegmentState::Sorted) m = std::max(m, seg.meta.covered_lsn);
  }
  return m;
}

std::vector<SegmentMeta> SegmentLog::segments() const {
  std::vector<SegmentMeta> out;
  out.reserve(segments_.size());
  for (const auto& [id, seg] : segments_) out.push_back(seg.meta);
  return out;
}

std::uint64_t SegmentLog::unsorted_bytes() const {
  std::uint64_t n = 0;
  for (const auto& [id, seg] : segments_) {
    if (seg.meta.state == SegmentState::SealedUnsorted) n += seg.meta.file_size;
  }
  return n;
}

std::uint64_t SegmentLog::sorted_bytes() const {
  std::uint64_t n = 0;
  for (const auto& [id, seg] : segments_) {
    if (seg.meta.state == SegmentState::Sorted) n += seg.meta.file_size;
  }
  return n;
}

}  // namespace logstore

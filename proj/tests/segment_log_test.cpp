#include "logstore/segment_log.hpp"

#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace logstore {
namespace {

using testing::TempDir;

SegmentLogOptions opts(const TempDir& dir, std::uint64_t segment_bytes = 64ull << 20) {
  SegmentLogOptions o;
  o.dir = dir.path();
  o.partition = 0;
  o.segment_bytes = segment_bytes;
  o.flush_policy = FlushPolicy::OsBuffered;
  return o;
}

TEST(SegmentLogTest, FirstRecordAtOffsetZeroSecondAfterFraming) {
  TempDir dir;
  SegmentLog log(opts(dir));
  EXPECT_EQ(log.append(RecordKind::Put, "k1", "v1", 1), (LogPosition{0, 0}));
  // header (21) + "k1" + "v1"
  EXPECT_EQ(log.append(RecordKind::Put, "k2", "v2", 2), (LogPosition{0, 25}));
}

TEST(SegmentLogTest, LsnGapIsRejected) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "k1", "v1", 1);
  EXPECT_THROW(log.append(RecordKind::Put, "k3", "v3", 3), InvalidArgument);
  EXPECT_THROW(log.append(RecordKind::Put, "", "v", 2), InvalidArgument);
}

TEST(SegmentLogTest, ReadYourWriteBeforeAndAfterFlush) {
  TempDir dir;
  SegmentLog log(opts(dir));
  auto p1 = log.append(RecordKind::Put, "k1", "v1", 1);
  auto p2 = log.append(RecordKind::Delete, "k1", "", 2);
  EXPECT_EQ(log.read_at(p1), make_put(1, "k1", "v1"));
  log.flush();
  EXPECT_EQ(log.read_at(p1), make_put(1, "k1", "v1"));
  auto del = log.read_at(p2);
  EXPECT_EQ(del.kind, RecordKind::Delete);
  EXPECT_TRUE(del.value.empty());
}

TEST(SegmentLogTest, ReadAtIsOnePositionedRead) {
  TempDir dir;
  SegmentLog log(opts(dir));
  std::vector<LogPosition> pos;
  for (Lsn i = 1; i <= 50; ++i) pos.push_back(log.append(RecordKind::Put, testing::key_of(i), std::string(1000, 'x'), i));
  log.flush();
  const auto before = log.stats().read_syscalls.load();
  for (auto p : pos) log.read_at(p);
  EXPECT_EQ(log.stats().read_syscalls.load() - before, 50u);
  EXPECT_EQ(log.stats().log_reads.load(), 50u);
}

TEST(SegmentLogTest, FlippedByteIsCorruptRecord) {
  TempDir dir;
  SegmentLog log(opts(dir));
  auto p = log.append(RecordKind::Put, "k1", "v1", 1);
  log.flush();
  testing::flip_byte(log.segment_path(0), 23);  // inside the value
  EXPECT_THROW(log.read_at(p), CorruptRecord);
}

TEST(SegmentLogTest, InvalidPositions) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "k1", "v1", 1);
  log.flush();
  EXPECT_THROW(log.read_at({0, 1000}), InvalidPosition);
  EXPECT_THROW(log.read_at({9, 0}), InvalidPosition);
}

TEST(SegmentLogTest, RotateSealsActiveSegment) {
  TempDir dir;
  SegmentLog log(opts(dir));
  for (Lsn i = 1; i <= 3; ++i) log.append(RecordKind::Put, testing::key_of(i), "v", i);
  auto sealed = log.seal_and_rotate();
  EXPECT_EQ(sealed.segment_id, 0u);
  EXPECT_EQ(sealed.state, SegmentState::SealedUnsorted);
  EXPECT_EQ(sealed.min_lsn, 1u);
  EXPECT_EQ(sealed.max_lsn, 3u);
  EXPECT_EQ(sealed.record_count, 3u);
  EXPECT_EQ(log.active().segment_id, 1u);
  EXPECT_EQ(log.active().state, SegmentState::Active);
}

TEST(SegmentLogTest, RotatingEmptyActiveIsNoop) {
  TempDir dir;
  SegmentLog log(opts(dir));
  auto before = log.active();
  auto meta = log.seal_and_rotate();
  EXPECT_EQ(meta, before);
  EXPECT_EQ(log.segments().size(), 1u);
}

TEST(SegmentLogTest, SegmentIdsAreMonotone) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "a", "1", 1);
  log.seal_and_rotate();
  log.append(RecordKind::Put, "b", "2", 2);
  log.seal_and_rotate();
  std::vector<SegmentId> ids;
  for (const auto& m : log.segments()) ids.push_back(m.segment_id);
  EXPECT_EQ(ids, (std::vector<SegmentId>{0, 1, 2}));
}

TEST(SegmentLogTest, RotatesAtConfiguredSize) {
  TempDir dir;
  SegmentLog log(opts(dir, 1000));
  for (Lsn i = 1; i <= 100; ++i) log.append(RecordKind::Put, testing::key_of(i), std::string(50, 'v'), i);
  auto segs = log.segments();
  EXPECT_GT(segs.size(), 5u);
  for (const auto& m : segs) EXPECT_LE(m.file_size, 1000u);
}

// Brute-force last-writer-wins over a list of records.
std::map<std::string, LogRecord> lww(const std::vector<LogRecord>& recs) {
  std::map<std::string, LogRecord> out;
  for (const auto& r : recs) {
    auto it = out.find(r.key);
    if (it == out.end() || it->second.lsn < r.lsn) out[r.key] = r;
  }
  std::erase_if(out, [](const auto& kv) { return kv.second.kind == RecordKind::Delete; });
  return out;
}

std::vector<LogRecord> sorted_contents(SegmentLog& log) {
  std::vector<LogRecord> out;
  log.scan_sorted([&](const LogRecord& r, LogPosition) { out.push_back(r); });
  return out;
}

TEST(SegmentLogTest, CompactionKeepsNewestPerKey) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "a", "1", 1);
  log.seal_and_rotate();
  log.compact_merge([](const CompactionResult&) {});  // sorted {a -> 1}
  log.append(RecordKind::Put, "b", "2", 2);
  log.append(RecordKind::Put, "a", "3", 3);
  log.seal_and_rotate();

  auto oracle = lww({make_put(1, "a", "1"), make_put(2, "b", "2"), make_put(3, "a", "3")});
  CompactionResult seen;
  auto result = log.compact_merge([&](const CompactionResult& r) { seen = r; });
  auto got = sorted_contents(log);
  ASSERT_EQ(got.size(), oracle.size());
  std::size_t i = 0;
  for (const auto& [k, rec] : oracle) EXPECT_EQ(got[i++], rec);
  EXPECT_EQ(got[0].lsn, 3u);
  EXPECT_EQ(got[1].lsn, 2u);
  EXPECT_EQ(result.remap.size(), 2u);
  EXPECT_EQ(seen.remap.size(), 2u);
  EXPECT_EQ(log.read_at(result.remap[0].position), make_put(3, "a", "3"));
  EXPECT_EQ(result.output.covered_lsn, 3u);
  for (auto id : result.removed_segments) EXPECT_FALSE(std::filesystem::exists(log.segment_path(id)));
}

TEST(SegmentLogTest, CompactionDropsTombstonedKeys) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "a", "1", 1);
  log.append(RecordKind::Delete, "a", "", 2);
  log.seal_and_rotate();
  auto r = log.compact_merge([](const CompactionResult&) {});
  EXPECT_EQ(r.output.record_count, 0u);
  EXPECT_TRUE(sorted_contents(log).empty());
  EXPECT_EQ(r.dropped_records, 2u);
}

TEST(SegmentLogTest, CompactionWithoutUnsortedInputsIsIdentity) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "b", "2", 1);
  log.append(RecordKind::Put, "a", "1", 2);
  log.seal_and_rotate();
  auto first = log.compact_merge([](const CompactionResult&) {});
  auto before = sorted_contents(log);
  bool called = false;
  auto second = log.compact_merge([&](const CompactionResult&) { called = true; });
  EXPECT_FALSE(called);
  EXPECT_EQ(second.output, first.output);
  EXPECT_EQ(sorted_contents(log), before);
}

TEST(SegmentLogTest, FailedRemapKeepsInputs) {
  TempDir dir;
  SegmentLog log(opts(dir));
  log.append(RecordKind::Put, "a", "1", 1);
  log.seal_and_rotate();
  auto before = log.segments();
  EXPECT_THROW(log.compact_merge([](const CompactionResult&) { throw IoError("boom"); }), IoError);
  EXPECT_EQ(log.segments(), before);
  EXPECT_EQ(log.iter_from_lsn(1).size(), 1u);
}

TEST(SegmentLogTest, IterFromLsn) {
  TempDir dir;
  SegmentLog log(opts(dir));
  for (Lsn i = 1; i <= 5; ++i) log.append(RecordKind::Put, testing::key_of(i), "v", i);
  auto recs = log.iter_from_lsn(3);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].lsn, 3u);
  EXPECT_EQ(recs[2].lsn, 5u);
  EXPECT_TRUE(log.iter_from_lsn(6).empty());
}

TEST(SegmentLogTest, TruncatedTailStopsAtLastValidRecord) {
  TempDir dir;
  std::vector<LogPosition> pos;
  {
    SegmentLog log(opts(dir));
    for (Lsn i = 1; i <= 5; ++i) pos.push_back(log.append(RecordKind::Put, testing::key_of(i), "value", i));
    log.flush();
  }
  // Cut the file in the middle of record 4.
  std::filesystem::resize_file(dir / "p0_s0.log", pos[3].offset + 10);
  SegmentLog log(opts(dir));
  EXPECT_TRUE(log.needs_recovery());
  std::vector<Lsn> seen;
  auto r = log.scan_from(1, [&](const LogRecord& rec, LogPosition) { seen.push_back(rec.lsn); }, true);
  EXPECT_EQ(seen, (std::vector<Lsn>{1, 2, 3}));
  EXPECT_EQ(r.last_valid_lsn, 3u);
  EXPECT_TRUE(r.torn_tail);
  EXPECT_EQ(std::filesystem::file_size(dir / "p0_s0.log"), pos[3].offset);
  // Writable again, continuing at lsn 4.
  EXPECT_EQ(log.append(RecordKind::Put, "again", "v", 4).offset, pos[3].offset);
}

TEST(SegmentLogTest, CorruptSealedRecordIsSurfaced) {
  TempDir dir;
  {
    SegmentLog log(opts(dir));
    for (Lsn i = 1; i <= 5; ++i) log.append(RecordKind::Put, testing::key_of(i), "value", i);
    log.seal_and_rotate();
    log.append(RecordKind::Put, "x", "y", 6);
    log.flush();
  }
  testing::flip_byte(dir / "p0_s0.log", 30);
  SegmentLog log(opts(dir));
  EXPECT_THROW(log.scan_from(1, [](const LogRecord&, LogPosition) {}, true), CorruptRecord);
}

TEST(SegmentLogTest, CorruptMiddleOfActiveSegmentIsSurfaced) {
  TempDir dir;
  {
    SegmentLog log(opts(dir));
    for (Lsn i = 1; i <= 5; ++i) log.append(RecordKind::Put, testing::key_of(i), "value", i);
    log.flush();
  }
  testing::flip_byte(dir / "p0_s0.log", 25);  // record 1 body, records 2..5 follow
  SegmentLog log(opts(dir));
  EXPECT_THROW(log.scan_from(1, [](const LogRecord&, LogPosition) {}, true), CorruptRecord);
}

TEST(SegmentLogTest, ReopenRecoversMetadata) {
  TempDir dir;
  {
    SegmentLog log(opts(dir, 500));
    for (Lsn i = 1; i <= 40; ++i) log.append(RecordKind::Put, testing::key_of(i), std::string(20, 'v'), i);
    log.flush();
  }
  SegmentLog log(opts(dir, 500));
  auto r = log.scan_from(1, [](const LogRecord&, LogPosition) {}, true);
  EXPECT_EQ(r.records_read, 40u);
  EXPECT_EQ(log.last_lsn(), 40u);
  EXPECT_FALSE(r.torn_tail);
  log.append(RecordKind::Put, "next", "v", 41);
}

TEST(SegmentLogTest, LsnDensityAcrossSegments) {
  TempDir dir;
  SegmentLog log(opts(dir, 700));
  std::mt19937_64 rng(7);
  const Lsn n = 500;
  for (Lsn i = 1; i <= n; ++i) {
    auto kind = rng() % 5 == 0 ? RecordKind::Delete : RecordKind::Put;
    log.append(kind, testing::key_of(rng() % 50), kind == RecordKind::Put ? "val" : "", i);
    if (rng() % 97 == 0) log.seal_and_rotate();
  }
  log.flush();
  std::multiset<Lsn> lsns;
  log.scan_from(1, [&](const LogRecord& r, LogPosition) { lsns.insert(r.lsn); });
  ASSERT_EQ(lsns.size(), n);
  Lsn expect = 1;
  for (auto l : lsns) EXPECT_EQ(l, expect++);
}

TEST(SegmentLogTest, GroupFlushIsOneWriteAndOneSync) {
  TempDir dir;
  auto o = opts(dir);
  o.flush_policy = FlushPolicy::Group;
  SegmentLog log(o);
  const auto w0 = log.stats().write_calls.load();
  const auto s0 = log.stats().sync_calls.load();
  std::uint64_t bytes = 0;
  for (Lsn i = 1; i <= 8; ++i) {
    log.append(RecordKind::Put, testing::key_of(i), "v", i);
    bytes += LogRecord::kHeaderSize + testing::key_of(i).size() + 1;
  }
  log.flush();
  EXPECT_EQ(log.stats().write_calls.load() - w0, 1u);
  EXPECT_EQ(log.stats().sync_calls.load() - s0, 1u);
  EXPECT_EQ(log.stats().record_bytes_written.load(), bytes);
}

TEST(SegmentLogTest, SortedRangeScanUsesKeyDirectory) {
  TempDir dir;
  SegmentLog log(opts(dir));
  std::map<std::string, std::string> oracle;
  for (Lsn i = 1; i <= 1000; ++i) {
    char key[16];
    std::snprintf(key, sizeof key, "k%05llu", static_cast<unsigned long long>((i * 7919) % 1000));
    log.append(RecordKind::Put, key, std::to_string(i), i);
    oracle[key] = std::to_string(i);
  }
  log.seal_and_rotate();
  log.compact_merge([](const CompactionResult&) {});
  std::vector<std::string> got;
  const auto before = log.stats().scan_records_read.load();
  log.scan_sorted_range("k00500", "k00510", [&](const LogRecord& r, LogPosition) { got.push_back(r.key); });
  std::vector<std::string> want;
  for (auto it = oracle.lower_bound("k00500"); it != oracle.lower_bound("k00510"); ++it) want.push_back(it->first);
  EXPECT_EQ(got, want);
  // Seeking through the directory reads at most one stride before the range.
  EXPECT_LE(log.stats().scan_records_read.load() - before, SegmentLog::kDirectoryStride + want.size() + 1);
}

TEST(SegmentLogTest, ManifestSurvivesReopenWithSortedSegments) {
  TempDir dir;
  {
    SegmentLog log(opts(dir));
    log.append(RecordKind::Put, "a", "1", 1);
    log.append(RecordKind::Put, "b", "2", 2);
    log.seal_and_rotate();
    log.compact_merge([](const CompactionResult&) {});
    log.append(RecordKind::Put, "c", "3", 3);
    log.flush();
  }
  SegmentLog log(opts(dir));
  log.scan_from(1, [](const LogRecord&, LogPosition) {}, true);
  EXPECT_EQ(log.last_lsn(), 3u);
  EXPECT_EQ(log.max_covered_lsn(), 2u);
  EXPECT_EQ(sorted_contents(log).size(), 2u);
}

}  // namespace
}  // namespace logstore

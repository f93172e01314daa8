#include "logstore/recovery.hpp"

#include <map>
#include <random>

#include <gtest/gtest.h>

#include "logstore/file.hpp"
#include "logstore/partition.hpp"
#include "test_util.hpp"

namespace logstore {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

PartitionOptions popts(const TempDir& dir) {
  PartitionOptions o;
  o.dir = dir.path();
  o.flush_policy = FlushPolicy::OsBuffered;
  o.cache.capacity_bytes = 1 << 20;
  o.auto_compact = false;
  o.checkpoint_every = 0;
  return o;
}

using Oracle = std::map<std::string, std::string>;

void expect_matches(Partition& p, const Oracle& oracle) {
  ASSERT_EQ(p.live_keys(), oracle.size());
  for (const auto& [k, v] : oracle) ASSERT_EQ(p.exec_get(k), v) << k;
}

void put_n(Partition& p, Oracle& oracle, Lsn from, Lsn to, std::uint64_t key_space) {
  for (Lsn i = from; i <= to; ++i) {
    auto key = testing::key_of(i % key_space);
    auto v = "v" + std::to_string(i);
    p.exec_put(key, v, i);
    oracle[key] = v;
  }
}

TEST(RecoveryTest, CheckpointOfEmptyPartition) {
  TempDir dir;
  Partition p(popts(dir));
  auto info = p.checkpoint();
  EXPECT_EQ(info.snapshot.entry_count, 0u);
  EXPECT_EQ(info.snapshot.last_included_lsn, 0u);
  EXPECT_EQ(info.file.filename(), "p0_snap_0.idx");
}

TEST(RecoveryTest, SecondCheckpointAdvancesByWrites) {
  TempDir dir;
  Partition p(popts(dir));
  Oracle o;
  put_n(p, o, 1, 25, 1000);
  auto first = p.checkpoint();
  put_n(p, o, 26, 35, 1000);
  auto second = p.checkpoint();
  EXPECT_EQ(second.snapshot.last_included_lsn, first.snapshot.last_included_lsn + 10);
  EXPECT_FALSE(fs::exists(first.file));
  EXPECT_TRUE(fs::exists(second.file));
}

TEST(RecoveryTest, FullRebuildMatchesOracle) {
  TempDir dir;
  Oracle oracle;
  {
    Partition p(popts(dir));
    std::mt19937_64 rng(31);
    for (Lsn i = 1; i <= 10000; ++i) {
      auto key = testing::key_of(rng() % 3000);
      if (rng() % 10 == 0) {
        p.exec_delete(key, i);
        oracle.erase(key);
      } else {
        p.exec_put(key, std::to_string(i), i);
        oracle[key] = std::to_string(i);
      }
      if (i == 5000) p.compact();
      if (i == 4000) p.log().seal_and_rotate();
    }
    p.flush();
    // Drop the snapshot written by compact() to force a full rebuild.
    for (const auto& e : fs::directory_iterator(dir.path())) {
      if (e.path().extension() == ".idx") fs::remove(e.path());
    }
  }
  Partition p(popts(dir));
  EXPECT_TRUE(p.recovery().full_rebuild);
  EXPECT_FALSE(p.recovery().used_snapshot);
  expect_matches(p, oracle);
}

TEST(RecoveryTest, TailReadEqualsRecordsAfterSnapshot) {
  TempDir dir;
  Oracle oracle;
  {
    Partition p(popts(dir));
    put_n(p, oracle, 1, 9000, 4000);
    auto info = p.checkpoint();
    EXPECT_EQ(info.snapshot.last_included_lsn, 9000u);
    put_n(p, oracle, 9001, 10000, 4000);
    p.flush();
  }
  Partition p(popts(dir));
  EXPECT_TRUE(p.recovery().used_snapshot);
  EXPECT_EQ(p.recovery().tail_records_read, 1000u);
  EXPECT_EQ(p.recovery().last_valid_lsn, 10000u);
  expect_matches(p, oracle);
}

TEST(RecoveryTest, TempFileFromInterruptedCheckpointIsIgnored) {
  TempDir dir;
  Oracle oracle;
  fs::path first;
  {
    Partition p(popts(dir));
    put_n(p, oracle, 1, 100, 50);
    first = p.checkpoint().file;
    put_n(p, oracle, 101, 150, 50);
    p.flush();
  }
  // A checkpoint that died before its rename leaves only a temp file behind.
  std::string partial = "half-written snapshot";
  {
    File f(dir / "p0_snap_150.idx.tmp", File::Mode::Truncate);
    f.write_all(partial);
  }
  Partition p(popts(dir));
  ASSERT_TRUE(p.recovery().used_snapshot);
  EXPECT_EQ(p.recovery().snapshot->last_included_lsn, 100u);
  EXPECT_EQ(p.recovery().tail_records_read, 50u);
  expect_matches(p, oracle);
}

TEST(RecoveryTest, CorruptSnapshotFallsBackToFullRebuild) {
  TempDir dir;
  Oracle oracle;
  fs::path snap;
  {
    Partition p(popts(dir));
    put_n(p, oracle, 1, 300, 90);
    snap = p.checkpoint().file;
    put_n(p, oracle, 301, 320, 90);
    p.flush();
  }
  testing::flip_byte(snap, 5);
  Partition p(popts(dir));
  EXPECT_TRUE(p.recovery().full_rebuild);
  expect_matches(p, oracle);
}

TEST(RecoveryTest, TornTailRecoversToLastValidLsn) {
  TempDir dir;
  Oracle oracle;
  std::vector<LogPosition> pos;
  {
    Partition p(popts(dir));
    for (Lsn i = 1; i <= 10; ++i) {
      pos.push_back(p.exec_put(testing::key_of(i), "value", i));
      if (i <= 7) oracle[testing::key_of(i)] = "value";
    }
    p.flush();
  }
  fs::resize_file(dir / "p0_s0.log", pos[7].offset + 5);  // mid record 8
  Partition p(popts(dir));
  EXPECT_TRUE(p.recovery().torn_tail);
  EXPECT_EQ(p.recovery().last_valid_lsn, 7u);
  EXPECT_EQ(p.last_lsn(), 7u);
  expect_matches(p, oracle);
  p.exec_put("after", "x", 8);
  EXPECT_EQ(p.exec_get("after"), "x");
}

TEST(RecoveryTest, SnapshotOlderThanCompactionIsRejected) {
  TempDir dir;
  Oracle oracle;
  std::string old_snapshot;
  {
    Partition p(popts(dir));
    put_n(p, oracle, 1, 200, 60);
    auto info = p.checkpoint();
    old_snapshot = read_file(info.file);
    put_n(p, oracle, 201, 260, 60);
    p.compact();
    p.flush();
  }
  // Put the pre-compaction snapshot back in place of the current one.
  for (const auto& e : fs::directory_iterator(dir.path())) {
    if (e.path().extension() == ".idx") fs::remove(e.path());
  }
  write_file_atomic(dir / "p0_snap_200.idx", old_snapshot);
  Partition p(popts(dir));
  EXPECT_TRUE(p.recovery().full_rebuild);
  expect_matches(p, oracle);
}

TEST(RecoveryTest, ReplayIsIdempotent) {
  RadixIndex idx;
  replay_record(idx, make_put(5, "k", "v"), {0, 10});
  replay_record(idx, make_put(3, "k", "old"), {0, 0});
  EXPECT_EQ(idx.get("k")->version_lsn, 5u);
  replay_record(idx, make_delete(4, "k"), {0, 5});
  EXPECT_TRUE(idx.get("k"));
  replay_record(idx, make_delete(6, "k"), {0, 20});
  EXPECT_FALSE(idx.get("k"));
  replay_record(idx, make_delete(6, "k"), {0, 20});
  EXPECT_FALSE(idx.get("k"));
}

}  // namespace
}  // namespace logstore

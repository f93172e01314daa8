#include "logstore/partition.hpp"

#include <map>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace logstore {
namespace {

using testing::TempDir;

PartitionOptions popts(const TempDir& dir) {
  PartitionOptions o;
  o.dir = dir.path();
  o.flush_policy = FlushPolicy::OsBuffered;
  o.cache.capacity_bytes = 1 << 20;
  o.auto_compact = false;
  return o;
}

TEST(PartitionTest, PutGetDelete) {
  TempDir dir;
  Partition p(popts(dir));
  p.exec_put("k1", "v1", 1);
  EXPECT_EQ(p.exec_get("k1"), "v1");
  EXPECT_TRUE(p.exec_delete("k1", 2));
  EXPECT_EQ(p.exec_get("k1"), std::nullopt);
  EXPECT_EQ(p.last_lsn(), 2u);
}

TEST(PartitionTest, DeleteOfAbsentKeyStillLogsTombstone) {
  TempDir dir;
  Partition p(popts(dir));
  EXPECT_FALSE(p.exec_delete("ghost", 1));
  EXPECT_EQ(p.last_lsn(), 1u);
  auto recs = p.log().iter_from_lsn(1);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].kind, RecordKind::Delete);
}

TEST(PartitionTest, ColdGetIsOneReadWarmGetIsNone) {
  TempDir dir;
  Partition p(popts(dir));
  for (Lsn i = 1; i <= 100; ++i) p.exec_put(testing::key_of(i), std::string(200, 'a'), i);
  p.flush();
  p.cache().invalidate(testing::key_of(7));
  const auto r0 = p.io().read_syscalls.load();
  EXPECT_TRUE(p.exec_get(testing::key_of(7)));
  EXPECT_EQ(p.io().read_syscalls.load() - r0, 1u);
  EXPECT_TRUE(p.exec_get(testing::key_of(7)));
  EXPECT_EQ(p.io().read_syscalls.load() - r0, 1u);
  EXPECT_FALSE(p.exec_get("absent"));
  EXPECT_EQ(p.io().read_syscalls.load() - r0, 1u);
}

TEST(PartitionTest, OverwriteRefreshesCachedValue) {
  TempDir dir;
  Partition p(popts(dir));
  p.exec_put("k", "old", 1);
  EXPECT_EQ(p.exec_get("k"), "old");
  p.exec_put("k", "new", 2);
  EXPECT_EQ(p.cache().get("k")->value, "new");
  EXPECT_EQ(p.exec_get("k"), "new");
}

TEST(PartitionTest, BatchPathFollowsThreshold) {
  EXPECT_EQ(Partition::choose_batch_path(10, 100), BatchPath::Index);
  EXPECT_EQ(Partition::choose_batch_path(11, 100), BatchPath::Scan);
  EXPECT_EQ(Partition::choose_batch_path(5, 0), BatchPath::Index);
}

TEST(PartitionTest, BatchPathsAgree) {
  TempDir dir;
  Partition p(popts(dir));
  std::mt19937_64 rng(21);
  std::map<std::string, std::string> oracle;
  Lsn lsn = 0;
  for (int i = 0; i < 3000; ++i) {
    auto key = testing::key_of(rng() % 400);
    if (rng() % 6 == 0) {
      p.exec_delete(key, ++lsn);
      oracle.erase(key);
    } else {
      auto v = std::to_string(rng());
      p.exec_put(key, v, ++lsn);
      oracle[key] = v;
    }
    if (i == 1500) p.compact();
  }
  std::vector<std::string> batch;
  for (int i = 0; i < 120; ++i) batch.push_back(testing::key_of(rng() % 450));
  auto by_index = p.exec_batch_get(batch, BatchPath::Index);
  auto by_scan = p.exec_batch_get(batch, BatchPath::Scan);
  EXPECT_EQ(by_index, by_scan);
  for (const auto& [k, v] : by_index) {
    auto it = oracle.find(k);
    EXPECT_EQ(v, it == oracle.end() ? std::nullopt : std::optional<std::string>(it->second)) << k;
  }
  p.exec_batch_get(batch);
  EXPECT_EQ(p.last_batch_path(), BatchPath::Scan);
  p.exec_batch_get({testing::key_of(1)});
  EXPECT_EQ(p.last_batch_path(), BatchPath::Index);
}

TEST(PartitionTest, RangeAfterCompactionMatchesOracle) {
  TempDir dir;
  Partition p(popts(dir));
  std::map<std::string, std::string> oracle;
  Lsn lsn = 0;
  for (int round = 0; round < 3; ++round) {
    for (int i = 0; i < 300; ++i) {
      auto key = testing::key_of((i * 37 + round) % 250);
      auto v = "r" + std::to_string(round) + "_" + std::to_string(i);
      p.exec_put(key, v, ++lsn);
      oracle[key] = v;
    }
    p.exec_delete(testing::key_of(round * 10), ++lsn);
    oracle.erase(testing::key_of(round * 10));
    p.compact();
  }
  auto got = p.exec_range("key1", "key2", SIZE_MAX);
  std::vector<KeyValue> want(oracle.lower_bound("key1"), oracle.lower_bound("key2"));
  EXPECT_EQ(got, want);
  EXPECT_EQ(p.exec_range("key1", "key2", 3).size(), 3u);
  EXPECT_EQ(p.log().unsorted_bytes(), 0u);
}

TEST(PartitionTest, ReopenRestoresState) {
  TempDir dir;
  std::map<std::string, std::string> oracle;
  {
    Partition p(popts(dir));
    for (Lsn i = 1; i <= 500; ++i) {
      auto key = testing::key_of(i % 120);
      p.exec_put(key, std::to_string(i), i);
      oracle[key] = std::to_string(i);
    }
    p.flush();
  }
  Partition p(popts(dir));
  EXPECT_EQ(p.last_lsn(), 500u);
  EXPECT_EQ(p.live_keys(), oracle.size());
  for (const auto& [k, v] : oracle) EXPECT_EQ(p.exec_get(k), v);
}

TEST(PartitionTest, AutoCompactionTriggers) {
  TempDir dir;
  auto o = popts(dir);
  o.auto_compact = true;
  o.segment_bytes = 4096;
  Partition p(o);
  for (Lsn i = 1; i <= 400; ++i) {
    p.exec_put(testing::key_of(i % 50), std::string(40, 'x'), i);
    p.maintain();
  }
  EXPECT_GT(p.log().sorted_bytes(), 0u);
  for (int i = 0; i < 50; ++i) EXPECT_TRUE(p.exec_get(testing::key_of(i)));
}

TEST(PartitionTest, ReplicatedApplyIndexesImmediately) {
  TempDir dir;
  Partition p(popts(dir));
  p.apply_replicated(make_put(1, "a", "1"));
  p.apply_replicated(make_put(2, "b", "2"));
  p.apply_replicated(make_delete(3, "a"));
  EXPECT_EQ(p.exec_get("b"), "2");
  EXPECT_FALSE(p.exec_get("a"));
  EXPECT_EQ(p.replay_reads(), 0u);
}

}  // namespace
}  // namespace logstore

#include "logstore/simulation.hpp"

#include <map>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace logstore {
namespace {

using testing::TempDir;

SimClusterConfig base_config(const TempDir& dir, std::uint64_t seed = 1) {
  SimClusterConfig c;
  c.dir = dir.path();
  c.seed = seed;
  c.partition.flush_policy = FlushPolicy::OsBuffered;
  c.partition.auto_compact = false;
  c.partition.checkpoint_every = 0;
  return c;
}

// Issues n puts spread over `every` microseconds each; returns acked LSNs per key.
std::map<std::string, std::string> write_load(SimCluster& c, int n, Micros every, int* acked) {
  auto expected = std::make_shared<std::map<std::string, std::string>>();
  for (int i = 0; i < n; ++i) {
    auto key = testing::key_of(i % 500);
    auto value = "v" + std::to_string(i);
    c.net().at(c.now() + static_cast<Micros>(i) * every, [&c, key, value, expected, acked] {
      c.put(key, value, [key, value, expected, acked](const Response& r) {
        if (r.status == Status::Ok) {
          (*expected)[key] = value;
          ++*acked;
        }
      });
    });
  }
  c.run_for(static_cast<Micros>(n) * every + 500'000);
  return *expected;
}

TEST(SimNetworkTest, EventsRunInTimeThenInsertionOrder) {
  SimNetwork net(1, LinkFaults{});
  std::vector<int> order;
  net.at(20, [&] { order.push_back(3); });
  net.at(10, [&] { order.push_back(1); });
  net.at(10, [&] { order.push_back(2); });
  net.run_until(15);
  EXPECT_EQ(order, (std::vector<int>{1, 2}));
  EXPECT_EQ(net.now(), 15u);
  net.run_until(100);
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3}));
}

TEST(SimNetworkTest, LinksAreFifoAndDownNodesLoseFrames) {
  SimNetwork net(7, LinkFaults{100, 5000, 0, 0});
  std::vector<NodeId> got;
  net.endpoint(2).set_handler([&](NodeId, Frame f) { got.push_back(decode_hello(f.payload)); });
  for (NodeId i = 0; i < 50; ++i) net.endpoint(1).send(2, encode_hello(i));
  net.set_down(2, true);
  net.endpoint(1).send(2, encode_hello(999));
  net.set_down(2, false);
  net.run_until(1'000'000);
  ASSERT_EQ(got.size(), 50u);
  for (NodeId i = 0; i < 50; ++i) EXPECT_EQ(got[i], i);
  EXPECT_EQ(net.frames_dropped(), 1u);
}

TEST(SimClusterTest, SameSeedSameRun) {
  auto run = [](std::uint64_t seed) {
    TempDir dir;
    auto cfg = base_config(dir, seed);
    cfg.links = LinkFaults{500, 3000, 0.05, 0.05};
    SimCluster c(cfg);
    int acked = 0;
    write_load(c, 400, 300, &acked);
    std::vector<std::uint64_t> out{static_cast<std::uint64_t>(acked), c.net().frames_sent(),
                                   c.net().frames_dropped()};
    for (NodeId n = 1; n <= 3; ++n) out.push_back(c.lsn_state(n, 0).flushed);
    return out;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(SimClusterTest, EveryReplyIsOnAQuorumDespiteDropsAndDuplicates) {
  TempDir dir;
  auto cfg = base_config(dir, 3);
  cfg.links = LinkFaults{200, 4000, 0.1, 0.1};
  cfg.heartbeat = 10'000;
  SimCluster c(cfg);
  int violations = 0, replies = 0;
  c.on_reply = [&](NodeId, PartitionId p, Lsn lsn) {
    ++replies;
    int have = 0;
    for (NodeId n = 1; n <= 3; ++n) have += c.partition(n, p).flushed_lsn() >= lsn;
    if (have < 2) ++violations;
  };
  int acked = 0;
  auto expected = write_load(c, 2000, 200, &acked);
  EXPECT_EQ(acked, 2000);
  EXPECT_EQ(replies, 2000);
  EXPECT_EQ(violations, 0);
  EXPECT_GT(c.net().frames_dropped(), 0u);
  EXPECT_GT(c.net().frames_duplicated(), 0u);
  // Followers converge to the leader's log.
  c.run_for(1'000'000);
  for (NodeId n = 2; n <= 3; ++n) EXPECT_EQ(c.partition(n, 0).last_lsn(), 2000u);
}

TEST(SimClusterTest, ReplicationIsPipelined) {
  TempDir dir;
  auto cfg = base_config(dir);
  cfg.max_batch = 8;
  cfg.links = LinkFaults{5000, 5000, 0, 0};
  SimCluster c(cfg);
  int acked = 0;
  write_load(c, 500, 50, &acked);
  EXPECT_EQ(acked, 500);
  EXPECT_GE(c.max_pipeline_depth(0), 2u);
}

TEST(SimClusterTest, FailoverKeepsEveryAckedWrite) {
  TempDir dir;
  auto cfg = base_config(dir, 9);
  cfg.partitions = 2;
  SimCluster c(cfg);
  int acked = 0;
  auto expected = write_load(c, 1000, 100, &acked);
  ASSERT_EQ(acked, 1000);
  c.crash(1);
  for (PartitionId p = 0; p < 2; ++p) {
    auto epoch = c.promote(2, p);
    ASSERT_TRUE(epoch);
    EXPECT_EQ(*epoch, 2u);
    EXPECT_EQ(c.leader(p), 2u);
  }
  std::map<std::string, std::optional<std::string>> got;
  for (const auto& [k, v] : expected) {
    c.get(2, k, std::nullopt, [&got, k](const Response& r) { got[k] = r.value; });
  }
  c.run_for(100'000);
  ASSERT_EQ(got.size(), expected.size());
  for (const auto& [k, v] : expected) EXPECT_EQ(got[k], v) << k;
  // The new leader keeps accepting writes with node 3 as its quorum partner.
  bool ok = false;
  c.put("after", "x", [&](const Response& r) { ok = r.status == Status::Ok; });
  c.run_for(100'000);
  EXPECT_TRUE(ok);
  EXPECT_EQ(c.partition(3, c.route("after")).exec_get("after"), "x");
}

TEST(SimClusterTest, PromotionRefusedWhileAPeerIsAhead) {
  TempDir dir;
  SimCluster c(base_config(dir));
  int acked = 0;
  write_load(c, 100, 100, &acked);
  c.net().set_down(2, true);  // node 2 misses the next writes
  write_load(c, 100, 100, &acked);
  ASSERT_EQ(acked, 200);
  c.crash(1);
  c.net().set_down(2, false);
  EXPECT_EQ(c.promote(2, 0), std::nullopt);
  ASSERT_TRUE(c.promote(3, 0));
  c.run_for(500'000);  // node 3 catches node 2 up
  EXPECT_EQ(c.partition(2, 0).last_lsn(), 200u);
}

TEST(SimClusterTest, FollowerReadBlocksUntilCommitPointArrives) {
  TempDir dir;
  auto cfg = base_config(dir);
  cfg.heartbeat = 20'000;
  SimCluster c(cfg);
  bool put_ok = false;
  c.put("k", "v", [&](const Response& r) { put_ok = r.status == Status::Ok; });
  c.run_for(10'000);
  ASSERT_TRUE(put_ok);
  const Lsn view = c.lsn_state(1, 0).potential_commit;
  ASSERT_EQ(view, 1u);
  // Followers have the record but may not know it committed yet.
  std::optional<Response> got;
  c.get(2, "k", view, [&](const Response& r) { got = r; });
  c.run_for(60'000);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->status, Status::Ok);
  EXPECT_EQ(got->value, "v");
  EXPECT_EQ(c.partition(2, 0).replay_reads(), 0u);

  std::optional<Response> ahead;
  c.get(2, "k", 50, [&](const Response& r) { ahead = r; });
  c.run_for(10'000);
  ASSERT_TRUE(ahead);
  EXPECT_EQ(ahead->status, Status::Rejected);

  std::optional<Response> no_view;
  c.get(2, "k", std::nullopt, [&](const Response& r) { no_view = r; });
  c.run_for(10'000);
  ASSERT_TRUE(no_view);
  EXPECT_EQ(no_view->status, Status::NotLeader);
}

TEST(SimClusterTest, ThroughputGrowsWithPartitions) {
  auto measure = [](std::uint32_t partitions) {
    TempDir dir;
    auto cfg = base_config(dir);
    cfg.partitions = partitions;
    SimCluster c(cfg);
    return c.closed_loop_puts(1000, 300'000, 10'000, 16).ops_per_sec;
  };
  const double one = measure(1);
  const double two = measure(2);
  EXPECT_GT(two, 1.6 * one) << one << " vs " << two;
}

}  // namespace
}  // namespace logstore

#include "logstore/replication.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace logstore {
namespace {

using testing::TempDir;

ChannelOptions three_nodes(std::size_t max_batch = 512) {
  ChannelOptions o;
  o.partition = 0;
  o.self = 1;
  o.followers = {2, 3};
  o.epoch = 1;
  o.max_batch_records = max_batch;
  return o;
}

std::vector<LogRecord> puts(Lsn from, Lsn to) {
  std::vector<LogRecord> out;
  for (Lsn l = from; l <= to; ++l) out.push_back(make_put(l, testing::key_of(l), "v"));
  return out;
}

void fire(const std::vector<ReplyFn>& fns) {
  for (const auto& fn : fns) fn(ReplyOutcome::Committed);
}

// Dispatch and execute n writes, recording which replies have fired.
std::vector<int> run_writes(LeaderChannel& ch, Lsn n) {
  std::vector<int> fired(n + 1, 0);
  std::vector<LogRecord> recs;
  for (Lsn i = 1; i <= n; ++i) {
    const Lsn lsn = ch.dispatch();
    EXPECT_EQ(lsn, i);
    recs.push_back(make_put(lsn, testing::key_of(lsn), "v"));
  }
  ch.append_executed(std::move(recs));
  for (Lsn i = 1; i <= n; ++i) {
    ch.add_reply(i, [&fired, i](ReplyOutcome o) { fired[i] += o == ReplyOutcome::Committed ? 1 : 100; });
  }
  return fired;
}

TEST(LeaderChannelTest, QuorumIsLeaderPlusOneFollowerOfThree) {
  LeaderChannel ch(three_nodes());
  EXPECT_EQ(ch.cluster_size(), 3u);
  EXPECT_EQ(ch.quorum(), 2u);
  std::vector<int> fired(6, 0);
  std::vector<LogRecord> recs;
  for (Lsn i = 1; i <= 5; ++i) recs.push_back(make_put(ch.dispatch(), "k", "v"));
  ch.append_executed(recs);
  for (Lsn i = 1; i <= 5; ++i) ch.add_reply(i, [&fired, i](ReplyOutcome) { fired[i]++; });

  fire(ch.on_local_flush(5));  // the local ack alone is not a quorum
  EXPECT_EQ(ch.commit_lsn(), 0u);
  EXPECT_EQ(fired, (std::vector<int>{0, 0, 0, 0, 0, 0}));

  fire(ch.on_ack(AckMessage{0, 1, 2, 3}));
  EXPECT_EQ(ch.commit_lsn(), 3u);
  EXPECT_EQ(fired, (std::vector<int>{0, 1, 1, 1, 0, 0}));

  fire(ch.on_ack(AckMessage{0, 1, 3, 5}));
  EXPECT_EQ(ch.commit_lsn(), 5u);
  EXPECT_EQ(fired, (std::vector<int>{0, 1, 1, 1, 1, 1}));
}

TEST(LeaderChannelTest, CommitNeedsLocalFlushWhenOnlyOneFollowerAcked) {
  LeaderChannel ch(three_nodes());
  auto fired = run_writes(ch, 4);
  fire(ch.on_ack(AckMessage{0, 1, 2, 4}));
  EXPECT_EQ(ch.commit_lsn(), 0u);
  fire(ch.on_local_flush(2));
  EXPECT_EQ(ch.commit_lsn(), 2u);
  EXPECT_EQ(ch.lsn_state(), (LsnState{2, 2, 2}));
}

TEST(LeaderChannelTest, SingleCumulativeAckReleasesEveryEarlierReply) {
  LeaderChannel ch(three_nodes());
  std::vector<int> fired(101, 0);
  std::vector<LogRecord> recs;
  for (Lsn i = 1; i <= 100; ++i) recs.push_back(make_put(ch.dispatch(), "k", "v"));
  ch.append_executed(recs);
  for (Lsn i = 1; i <= 100; ++i) ch.add_reply(i, [&fired, i](ReplyOutcome) { fired[i]++; });
  fire(ch.on_local_flush(100));
  auto ready = ch.on_ack(AckMessage{0, 1, 3, 100});
  EXPECT_EQ(ready.size(), 100u);
  fire(ready);
  for (Lsn i = 1; i <= 100; ++i) EXPECT_EQ(fired[i], 1) << i;
  // A stale duplicate ack releases nothing further.
  EXPECT_TRUE(ch.on_ack(AckMessage{0, 1, 3, 40}).empty());
}

TEST(LeaderChannelTest, ReplyAddedAfterCommitFiresImmediately) {
  ChannelOptions o;
  o.self = 1;
  LeaderChannel ch(o);  // single node
  ch.append_executed({make_put(ch.dispatch(), "k", "v")});
  fire(ch.on_local_flush(1));
  bool fired = false;
  ch.add_reply(1, [&](ReplyOutcome o) { fired = o == ReplyOutcome::Committed; });
  EXPECT_TRUE(fired);
}

TEST(LeaderChannelTest, AcksFromUnknownNodesOrOtherEpochsAreIgnored) {
  LeaderChannel ch(three_nodes());
  run_writes(ch, 3);
  fire(ch.on_local_flush(3));
  EXPECT_TRUE(ch.on_ack(AckMessage{0, 1, 9, 3}).empty());
  EXPECT_TRUE(ch.on_ack(AckMessage{0, 2, 2, 3}).empty());
  EXPECT_EQ(ch.commit_lsn(), 0u);
}

TEST(LeaderChannelTest, ProbeFirstThenPipelinedBatchesWithoutWaiting) {
  LeaderChannel ch(three_nodes(10));
  ch.append_executed(puts(1, 35));
  for (Lsn i = 1; i <= 35; ++i) ch.dispatch();

  auto probe = ch.next_batch(2);
  ASSERT_TRUE(probe);
  EXPECT_TRUE(probe->records.empty());
  EXPECT_FALSE(ch.next_batch(2));  // nothing until the probe is answered
  ch.on_ack(AckMessage{0, 1, 2, 0});

  std::vector<AppendEntries> sent;
  while (auto m = ch.next_batch(2)) sent.push_back(*m);
  ASSERT_EQ(sent.size(), 4u);  // 10 + 10 + 10 + 5, all before any ack
  EXPECT_EQ(sent[0].records.front().lsn, 1u);
  EXPECT_EQ(sent[3].records.back().lsn, 35u);
  EXPECT_EQ(ch.in_flight(2), 35u);

  ch.on_ack(AckMessage{0, 1, 2, 20});
  EXPECT_EQ(ch.mark(2), 20u);
  EXPECT_EQ(ch.in_flight(2), 15u);
}

TEST(LeaderChannelTest, ProbeAckPositionsCursorAtFollowerLog) {
  ChannelOptions o = three_nodes();
  o.last_lsn = 50;  // a promoted leader that already holds 50 records
  std::vector<LogRecord> log = puts(1, 50);
  LeaderChannel ch(o, [&](Lsn from, std::size_t max) {
    std::vector<LogRecord> out;
    for (Lsn l = from; l <= 50 && out.size() < max; ++l) out.push_back(log[l - 1]);
    return out;
  });
  ASSERT_TRUE(ch.next_batch(3));
  ch.on_ack(AckMessage{0, 1, 3, 45});
  auto m = ch.next_batch(3);
  ASSERT_TRUE(m);
  ASSERT_EQ(m->records.size(), 5u);
  EXPECT_EQ(m->records.front().lsn, 46u);  // read back through the backfill
}

TEST(LeaderChannelTest, NackRewindsOncePerGap) {
  LeaderChannel ch(three_nodes(5));
  ch.append_executed(puts(1, 20));
  ch.next_batch(2);
  ch.on_ack(AckMessage{0, 1, 2, 0});
  while (ch.next_batch(2)) {
  }
  // The batch 1..5 was lost; the three later batches each Nack at 0.
  ch.on_nack(AckMessage{0, 1, 2, 0});
  auto resend = ch.next_batch(2);
  ASSERT_TRUE(resend);
  EXPECT_EQ(resend->records.front().lsn, 1u);
  ch.on_nack(AckMessage{0, 1, 2, 0});
  ch.on_nack(AckMessage{0, 1, 2, 0});
  auto next = ch.next_batch(2);
  ASSERT_TRUE(next);
  EXPECT_EQ(next->records.front().lsn, 6u);  // not rewound again
}

TEST(LeaderChannelTest, HeartbeatRewindsAStalledFollower) {
  LeaderChannel ch(three_nodes(5));
  ch.append_executed(puts(1, 10));
  ch.next_batch(2);
  ch.on_ack(AckMessage{0, 1, 2, 0});
  while (ch.next_batch(2)) {
  }
  ch.heartbeat(2);  // no progress yet, but this is the first observation
  EXPECT_FALSE(ch.next_batch(2));
  ch.heartbeat(2);  // still no progress: resend from the mark
  auto m = ch.next_batch(2);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->records.front().lsn, 1u);
}

TEST(LeaderChannelTest, AbandonReturnsPendingReplies) {
  LeaderChannel ch(three_nodes());
  auto fired = run_writes(ch, 3);
  for (auto& fn : ch.abandon_all()) fn(ReplyOutcome::Abandoned);
  EXPECT_TRUE(ch.abandon_all().empty());
}

PartitionOptions popts(const TempDir& dir) {
  PartitionOptions o;
  o.dir = dir.path();
  o.flush_policy = FlushPolicy::OsBuffered;
  o.auto_compact = false;
  return o;
}

TEST(FollowerTest, AppliesAndAcksFlushedLsn) {
  TempDir dir;
  Partition part(popts(dir));
  FollowerState st;
  auto r = follower_append_entries(part, st, 2, 1, AppendEntries{0, 1, 2, puts(1, 3)});
  EXPECT_FALSE(r.nack);
  EXPECT_EQ(r.applied, 3u);
  EXPECT_EQ(r.ack, (AckMessage{0, 1, 2, 3}));
  EXPECT_EQ(st.lsn, (LsnState{3, 2, 2}));
  EXPECT_EQ(st.leader, 1u);
  EXPECT_EQ(part.exec_get(testing::key_of(2)), "v");
}

TEST(FollowerTest, ResendIsIdempotent) {
  TempDir dir;
  Partition part(popts(dir));
  FollowerState st;
  AppendEntries msg{0, 1, 0, puts(1, 5)};
  auto first = follower_append_entries(part, st, 2, 1, msg);
  const auto bytes = part.io().record_bytes_written.load();
  auto again = follower_append_entries(part, st, 2, 1, msg);
  EXPECT_EQ(again.applied, 0u);
  EXPECT_FALSE(again.nack);
  EXPECT_EQ(again.ack, first.ack);
  EXPECT_EQ(part.io().record_bytes_written.load(), bytes);
  EXPECT_EQ(part.last_lsn(), 5u);
  // Overlapping resend applies only the new suffix.
  auto overlap = follower_append_entries(part, st, 2, 1, AppendEntries{0, 1, 0, puts(3, 8)});
  EXPECT_EQ(overlap.applied, 3u);
  EXPECT_EQ(part.last_lsn(), 8u);
}

TEST(FollowerTest, GapIsNackedWithFlushedLsn) {
  TempDir dir;
  Partition part(popts(dir));
  FollowerState st;
  follower_append_entries(part, st, 2, 1, AppendEntries{0, 1, 0, puts(1, 2)});
  auto r = follower_append_entries(part, st, 2, 1, AppendEntries{0, 1, 0, puts(5, 6)});
  EXPECT_TRUE(r.nack);
  EXPECT_EQ(r.ack.last_flushed, 2u);
  EXPECT_EQ(part.last_lsn(), 2u);
}

TEST(FollowerTest, StaleEpochIsNackedAndHigherEpochAdopted) {
  TempDir dir;
  Partition part(popts(dir));
  FollowerState st;
  st.epoch = 3;
  auto stale = follower_append_entries(part, st, 2, 1, AppendEntries{0, 2, 0, puts(1, 1)});
  EXPECT_TRUE(stale.nack);
  EXPECT_EQ(stale.ack.epoch, 3u);
  EXPECT_EQ(part.last_lsn(), 0u);
  auto newer = follower_append_entries(part, st, 2, 4, AppendEntries{0, 5, 0, puts(1, 1)});
  EXPECT_FALSE(newer.nack);
  EXPECT_EQ(st.epoch, 5u);
  EXPECT_EQ(st.leader, 4u);
}

TEST(FollowerTest, PotentialCommitNeverExceedsFlushed) {
  TempDir dir;
  Partition part(popts(dir));
  FollowerState st;
  follower_append_entries(part, st, 2, 1, AppendEntries{0, 1, 100, puts(1, 4)});
  EXPECT_EQ(st.lsn.potential_commit, 4u);
  // Heartbeats never move it backwards.
  follower_append_entries(part, st, 2, 1, AppendEntries{0, 1, 1, {}});
  EXPECT_EQ(st.lsn.potential_commit, 4u);
}

TEST(ReadGateTest, ServesAtOrBelowPotentialCommit) {
  LsnState s{12, 10, 10};
  EXPECT_EQ(read_gate(5, s), GateDecision::ServeNow);
  EXPECT_EQ(read_gate(10, s), GateDecision::ServeNow);
}

TEST(ReadGateTest, ServingAdvancesReplayed) {
  LsnState s{12, 10, 8};
  EXPECT_EQ(read_gate(9, s), GateDecision::ServeNow);
  EXPECT_EQ(s.replayed, 10u);
}

TEST(ReadGateTest, BlocksBetweenCommitAndFlushedRejectsBeyond) {
  LsnState s{12, 10, 10};
  EXPECT_EQ(read_gate(11, s), GateDecision::Block);
  EXPECT_EQ(read_gate(12, s), GateDecision::Block);
  EXPECT_EQ(read_gate(15, s), GateDecision::Reject);
  EXPECT_EQ(s.replayed, 10u);
}

TEST(FreshnessTest, RatioClampedToUnitInterval) {
  EXPECT_DOUBLE_EQ(freshness_score(8, 10), 0.8);
  EXPECT_DOUBLE_EQ(freshness_score(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(freshness_score(12, 10), 1.0);
  EXPECT_DOUBLE_EQ(freshness_score(0, 10), 0.0);
}

TEST(PromotionTest, RefusedWhenAReachablePeerIsAhead) {
  std::vector<StatusReply> peers{{0, 1, 90, 80}, {0, 1, 101, 90}};
  EXPECT_EQ(promotion_epoch(100, 1, peers), std::nullopt);
}

TEST(PromotionTest, EpochExceedsEveryKnownEpoch) {
  std::vector<StatusReply> peers{{0, 4, 90, 80}, {0, 2, 100, 90}};
  EXPECT_EQ(promotion_epoch(100, 3, peers), 5u);
  EXPECT_EQ(promotion_epoch(0, 1, {}), 2u);
}

}  // namespace
}  // namespace logstore

#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "logstore/partition.hpp"
#include "logstore/wire.hpp"

namespace logstore {

/// Freshness triple of one partition replica.
/// Invariant: replayed <= potential_commit <= flushed, all non-decreasing.
struct LsnState {
  Lsn flushed = kNoLsn;
  Lsn potential_commit = kNoLsn;
  Lsn replayed = kNoLsn;

  friend bool operator==(const LsnState&, const LsnState&) = default;
};

enum class ReplyOutcome { Committed, Abandoned };
using ReplyFn = std::function<void(ReplyOutcome)>;

struct ChannelOptions {
  PartitionId partition = 0;
  NodeId self = 0;
  std::vector<NodeId> followers;
  Epoch epoch = 1;
  Lsn last_lsn = kNoLsn;    // last LSN already in the leader's log
  Lsn commit_lsn = kNoLsn;  // known-committed point at channel creation
  std::size_t max_batch_records = 512;
  std::size_t window_records = 1 << 16;  // executed records kept for resends
};

/// Leader side of one partition's replication: LSN dispatch, per-follower
/// send cursors, cumulative ack marks, the quorum commit point and the reply
/// set. Thread-safe; the executor, send stage and ack stage share one
/// instance.
///
/// Acks are high-water marks: node n acking LSN x acknowledges every request
/// with lsn <= x. A request is committed once floor(N/2)+1 marks (the leader's
/// own flushed LSN included) reach it.
class LeaderChannel {
 public:
  /// Supplies records below the resend window, read back from the log.
  using Backfill = std::function<std::vector<LogRecord>(Lsn from, std::size_t max)>;

  explicit LeaderChannel(ChannelOptions options, Backfill backfill = {});

  /// Assigns the next contiguous LSN to a modification.
  Lsn dispatch();
  /// Attaches the reply object of an executed request. Fired exactly once,
  /// after commit (or with Abandoned on step-down).
  void add_reply(Lsn lsn, ReplyFn fn);

  /// Executor: records applied locally, in LSN order. They become sendable.
  void append_executed(std::vector<LogRecord> records);
  /// Executor: local group flush reached `flushed` (the local ack).
  std::vector<ReplyFn> on_local_flush(Lsn flushed);
  /// Ack stage. Acks from unknown nodes or other epochs are ignored.
  std::vector<ReplyFn> on_ack(const AckMessage& ack);
  /// A Nack rewinds the follower's send cursor to its flushed LSN + 1.
  void on_nack(const AckMessage& nack);

  /// Send stage: next batch of unsent records for a follower, advancing its
  /// cursor without waiting for acks. nullopt when nothing is pending.
  std::optional<AppendEntries> next_batch(NodeId follower);
  /// Idle heartbeat carrying the commit point. A follower that had records
  /// outstanding at the previous heartbeat and has acked nothing since is
  /// rewound to resend from its mark.
  AppendEntries heartbeat(NodeId follower);

  bool has_unsent() const;
  std::vector<ReplyFn> abandon_all();

  Lsn commit_lsn() const;
  Lsn local_flushed() const;
  Lsn last_dispatched() const;
  Lsn mark(NodeId follower) const;
  /// Records sent to the follower but not yet covered by its ack.
  std::uint64_t in_flight(NodeId follower) const;
  std::size_t cluster_size() const noexcept { return opts_.followers.size() + 1; }
  std::size_t quorum() const noexcept { return cluster_size() / 2 + 1; }
  const ChannelOptions& options() const noexcept { return opts_; }
  LsnState lsn_state() const;

 private:
  struct FollowerProgress {
    Lsn mark = kNoLsn;  // highest LSN acked
    Lsn next = 1;       // next LSN to send
    Lsn sent_max = kNoLsn;
    Lsn mark_at_heartbeat = kNoLsn;
    Lsn sent_at_heartbeat = kNoLsn;
    Lsn rewound_to = kNoLsn;
    // A new channel does not know where the follower stands; the first
    // message is an empty probe and its ack positions the cursor.
    bool probing = true;
    bool probe_sent = false;
  };

  std::vector<ReplyFn> advance_commit_locked();
  std::vector<LogRecord> records_from_locked(Lsn from, std::size_t max) const;

  ChannelOptions opts_;
  Backfill backfill_;
  mutable std::mutex mu_;
  Lsn next_lsn_;
  Lsn executed_ = kNoLsn;
  Lsn local_flushed_ = kNoLsn;
  Lsn commit_ = kNoLsn;
  std::deque<LogRecord> window_;  // contiguous, window_.front().lsn .. executed_
  std::map<NodeId, FollowerProgress> followers_;
  std::map<Lsn, ReplyFn> replies_;
};

/// Result of a follower handling one AppendEntries.
struct FollowerResponse {
  AckMessage ack;
  bool nack = false;
  std::uint64_t applied = 0;  // records appended by this message
};

/// Follower replica state kept by the partition executor.
struct FollowerState {
  Epoch epoch = 0;
  NodeId leader = 0;
  LsnState lsn;
};

/// Follower side of AppendEntries: drop duplicates, Nack gaps and stale
/// epochs, otherwise append, group-flush and index every record, then move
/// potential_commit to min(leader_commit, flushed) and replayed with it (the
/// index is already current, so there is nothing to replay).
FollowerResponse follower_append_entries(Partition& partition, FollowerState& state, NodeId self,
                                         NodeId from, const AppendEntries& msg);

enum class GateDecision { ServeNow, Block, Reject };

/// Follower read gate for a read view l.
///   l <= potential_commit             -> ServeNow (replayed advanced to potential_commit)
///   potential_commit < l <= flushed   -> Block until potential_commit >= l
///   l > flushed                       -> Reject
GateDecision read_gate(Lsn read_view, LsnState& state);

/// bLSN / pLSN clamped to [0, 1]; 1.0 for an empty leader log.
double freshness_score(Lsn backup_lsn, Lsn primary_lsn);

/// Promotion safety check: the target must be at least as fresh as every
/// reachable peer. Returns the epoch for the new leader, or nullopt when a
/// reachable peer has a higher flushed LSN.
std::optional<Epoch> promotion_epoch(Lsn target_flushed, Epoch target_epoch,
                                     const std::vector<StatusReply>& reachable_peers);

}  // namespace logstore

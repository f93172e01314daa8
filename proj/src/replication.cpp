#include "logstore/replication.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace logstore {

LeaderChannel::LeaderChannel(ChannelOptions options, Backfill backfill)
    : opts_(std::move(options)),
      backfill_(std::move(backfill)),
      next_lsn_(opts_.last_lsn + 1),
      executed_(opts_.last_lsn),
      local_flushed_(opts_.last_lsn),
      commit_(opts_.commit_lsn) {
  for (auto id : opts_.followers) {
    if (id == opts_.self) throw InvalidArgument("leader listed as its own follower");
    followers_[id] = FollowerProgress{};
  }
  if (followers_.size() != opts_.followers.size()) throw InvalidArgument("duplicate follower id");
  if (opts_.max_batch_records == 0) throw InvalidArgument("max_batch_records must be positive");
}

Lsn LeaderChannel::dispatch() {
  std::lock_guard lock(mu_);
  return next_lsn_++;
}

void LeaderChannel::add_reply(Lsn lsn, ReplyFn fn) {
  std::unique_lock lock(mu_);
  if (lsn <= commit_) {
    lock.unlock();
    fn(ReplyOutcome::Committed);
    return;
  }
  replies_.emplace(lsn, std::move(fn));
}

void LeaderChannel::append_executed(std::vector<LogRecord> records) {
  std::lock_guard lock(mu_);
  for (auto& r : records) {
    if (r.lsn != executed_ + 1) throw InvalidArgument("executed records out of order");
    executed_ = r.lsn;
    window_.push_back(std::move(r));
  }
  while (window_.size() > opts_.window_records) window_.pop_front();
}

std::vector<ReplyFn> LeaderChannel::on_local_flush(Lsn flushed) {
  std::lock_guard lock(mu_);
  local_flushed_ = std::max(local_flushed_, std::min(flushed, executed_));
  return advance_commit_locked();
}

std::vector<ReplyFn> LeaderChannel::on_ack(const AckMessage& ack) {
  std::lock_guard lock(mu_);
  auto it = followers_.find(ack.node);
  if (it == followers_.end()) {
    spdlog::warn("p{}: ack from unknown node {} ignored", opts_.partition, ack.node);
    return {};
  }
  if (ack.epoch != opts_.epoch) return {};
  auto& f = it->second;
  const Lsn acked = std::min(ack.last_flushed, executed_);
  if (f.probing) {
    f.probing = false;
    f.next = acked + 1;
  }
  if (acked > f.mark) {
    f.mark = acked;
    if (f.next <= f.mark) f.next = f.mark + 1;
  }
  // Trim records every follower already has.
  Lsn low = executed_;
  for (const auto& [id, p] : followers_) low = std::min(low, p.mark);
  while (!window_.empty() && window_.front().lsn <= low) window_.pop_front();
  return advance_commit_locked();
}

void LeaderChannel::on_nack(const AckMessage& nack) {
  std::lock_guard lock(mu_);
  auto it = followers_.find(nack.node);
  if (it == followers_.end() || nack.epoch != opts_.epoch) return;
  auto& f = it->second;
  const Lsn have = std::min(nack.last_flushed, executed_);
  f.mark = std::max(f.mark, have);
  f.probing = false;
  // Every in-flight message behind a lost one Nacks the same gap; rewind once.
  if (have + 1 < f.next && have + 1 != f.rewound_to) {
    f.next = have + 1;
    f.rewound_to = have + 1;
  }
}

std::vector<LogRecord> LeaderChannel::records_from_locked(Lsn from, std::size_t max) const {
  std::vector<LogRecord> out;
  if (window_.empty() || from < window_.front().lsn) return out;
  const auto start = static_cast<std::size_t>(from - window_.front().lsn);
  for (std::size_t i = start; i < window_.size() && out.size() < max; ++i) out.push_back(window_[i]);
  return out;
}

std::optional<AppendEntries> LeaderChannel::next_batch(NodeId follower) {
  std::unique_lock lock(mu_);
  auto& f = followers_.at(follower);
  AppendEntries msg{opts_.partition, opts_.epoch, commit_, {}};
  if (f.probing) {
    if (f.probe_sent) return std::nullopt;
    f.probe_sent = true;
    return msg;
  }
  if (f.next > executed_) return std::nullopt;
  const Lsn from = f.next;
  const auto max = static_cast<std::size_t>(
      std::min<Lsn>(opts_.max_batch_records, executed_ - from + 1));
  auto records = records_from_locked(from, max);
  if (records.empty()) {
    if (!backfill_) return std::nullopt;
    lock.unlock();
    records = backfill_(from, max);
    lock.lock();
    if (records.empty() || records.front().lsn != from) return std::nullopt;
    auto& again = followers_.at(follower);
    if (again.next != from) return std::nullopt;  // cursor moved meanwhile
    msg.leader_commit = commit_;
  }
  auto& cur = followers_.at(follower);
  cur.next = records.back().lsn + 1;
  cur.sent_max = std::max(cur.sent_max, records.back().lsn);
  msg.records = std::move(records);
  return msg;
}

AppendEntries LeaderChannel::heartbeat(NodeId follower) {
  std::lock_guard lock(mu_);
  auto& f = followers_.at(follower);
  if (f.probing) {
    f.probe_sent = true;  // this heartbeat is the probe
  } else if (f.sent_at_heartbeat > f.mark && f.mark == f.mark_at_heartbeat) {
    f.next = f.mark + 1;
    f.rewound_to = 0;
  }
  f.mark_at_heartbeat = f.mark;
  f.sent_at_heartbeat = f.sent_max;
  return AppendEntries{opts_.partition, opts_.epoch, commit_, {}};
}

bool LeaderChannel::has_unsent() const {
  std::lock_guard lock(mu_);
  for (const auto& [id, f] : followers_) {
    if (f.probing ? !f.probe_sent : f.next <= executed_) return true;
  }
  return false;
}

std::vector<ReplyFn> LeaderChannel::abandon_all() {
  std::lock_guard lock(mu_);
  std::vector<ReplyFn> out;
  for (auto& [lsn, fn] : replies_) out.push_back(std::move(fn));
  replies_.clear();
  return out;
}

std::vector<ReplyFn> LeaderChannel::advance_commit_locked() {
  std::vector<Lsn> marks{local_flushed_};
  for (const auto& [id, f] : followers_) marks.push_back(f.mark);
  std::sort(marks.begin(), marks.end(), std::greater<>());
  commit_ = std::max(commit_, marks[quorum() - 1]);

  std::vector<ReplyFn> ready;
  auto end = replies_.upper_bound(commit_);
  for (auto it = replies_.begin(); it != end; ++it) ready.push_back(std::move(it->second));
  replies_.erase(replies_.begin(), end);
  return ready;
}

Lsn LeaderChannel::commit_lsn() const {
  std::lock_guard lock(mu_);
  return commit_;
}

Lsn LeaderChannel::local_flushed() const {
  std::lock_guard lock(mu_);
  return local_flushed_;
}

Lsn LeaderChannel::last_dispatched() const {
  std::lock_guard lock(mu_);
  return next_lsn_ - 1;
}

Lsn LeaderChannel::mark(NodeId follower) const {
  std::lock_guard lock(mu_);
  return followers_.at(follower).mark;
}

std::uint64_t LeaderChannel::in_flight(NodeId follower) const {
  std::lock_guard lock(mu_);
  const auto& f = followers_.at(follower);
  return f.sent_max > f.mark ? f.sent_max - f.mark : 0;
}

LsnState LeaderChannel::lsn_state() const {
  std::lock_guard lock(mu_);
  const Lsn pc = std::min(commit_, local_flushed_);
  return LsnState{local_flushed_, pc, pc};
}

FollowerResponse follower_append_entries(Partition& partition, FollowerState& state, NodeId self,
                                         NodeId from, const AppendEntries& msg) {
  FollowerResponse resp;
  resp.ack = AckMessage{msg.partition, state.epoch, self, partition.flushed_lsn()};
  if (msg.epoch < state.epoch) {
    resp.nack = true;
    return resp;
  }
  if (msg.epoch > state.epoch) state.epoch = msg.epoch;
  state.leader = from;
  resp.ack.epoch = state.epoch;

  Lsn last = partition.last_lsn();
  for (const auto& rec : msg.records) {
    if (rec.lsn <= last) continue;  // duplicate from a resend
    if (rec.lsn != last + 1) {
      resp.nack = true;
      break;
    }
    partition.apply_replicated(rec);
    last = rec.lsn;
    resp.applied++;
  }
  if (resp.applied > 0) partition.flush();

  auto& s = state.lsn;
  s.flushed = partition.flushed_lsn();
  s.potential_commit = std::max(s.potential_commit, std::min(msg.leader_commit, s.flushed));
  s.replayed = s.potential_commit;
  resp.ack.last_flushed = s.flushed;
  return resp;
}

GateDecision read_gate(Lsn read_view, LsnState& state) {
  if (read_view <= state.potential_commit) {
    state.replayed = std::max(state.replayed, state.potential_commit);
    return GateDecision::ServeNow;
  }
  if (read_view <= state.flushed) return GateDecision::Block;
  return GateDecision::Reject;
}

double freshness_score(Lsn backup_lsn, Lsn primary_lsn) {
  if (primary_lsn == 0) return 1.0;
  return std::clamp(static_cast<double>(backup_lsn) / static_cast<double>(primary_lsn), 0.0, 1.0);
}

std::optional<Epoch> promotion_epoch(Lsn target_flushed, Epoch target_epoch,
                                     const std::vector<StatusReply>& reachable_peers) {
  Epoch epoch = target_epoch;
  for (const auto& peer : reachable_peers) {
    if (peer.flushed > target_flushed) return std::nullopt;
    epoch = std::max(epoch, peer.epoch);
  }
  return epoch + 1;
}

}  // namespace logstore

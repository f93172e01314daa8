#include "logstore/engine.hpp"

#include <algorithm>
#include <deque>
#include <future>
#include <set>

#include <pthread.h>
#include <sched.h>

#include <spdlog/spdlog.h>

namespace logstore {

using Clock = std::chrono::steady_clock;

NodeId EngineConfig::leader_of(PartitionId p) const {
  if (auto it = leaders.find(p); it != leaders.end()) return it->second;
  return members.front();
}

void EngineConfig::validate() const {
  if (members.empty()) throw InvalidArgument("cluster has no members");
  std::set<NodeId> seen;
  for (auto id : members) {
    if (!seen.insert(id).second) throw InvalidArgument("duplicate node id " + std::to_string(id));
  }
  if (!seen.contains(node_id)) throw InvalidArgument("node id " + std::to_string(node_id) + " is not a member");
  if (partitions == 0) throw InvalidArgument("partitions must be at least 1");
  for (const auto& [p, n] : leaders) {
    if (p >= partitions) throw InvalidArgument("leader given for unknown partition " + std::to_string(p));
    if (!seen.contains(n)) throw InvalidArgument("leader " + std::to_string(n) + " is not a member");
  }
  if (queue_capacity == 0 || max_batch == 0) throw InvalidArgument("queue sizes must be positive");
}

PartitionId route_key(std::string_view key, std::uint32_t partitions) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return static_cast<PartitionId>(h % partitions);
}

struct Engine::Task {
  enum class Kind { Client, Replicate, Control };
  Kind kind = Kind::Client;
  Request req;
  ResponseFn done;
  Lsn lsn = kNoLsn;
  NodeId from = 0;
  AppendEntries msg;
  std::function<void(Partition&)> control;
  Clock::time_point deadline{};
};

struct Engine::Runtime {
  PartitionId id = 0;
  std::unique_ptr<Partition> part;

  std::mutex mu;  // queue, and role/channel transitions
  std::condition_variable cv;
  std::deque<Task> queue;
  bool stopping = false;
  std::atomic<Role> role{Role::Follower};
  std::atomic<Epoch> epoch{0};
  std::atomic<NodeId> leader{0};
  std::shared_ptr<LeaderChannel> channel;

  // Executor-only state.
  FollowerState follower;
  std::vector<Task> parked;

  // Published by the executor for stats readers.
  std::atomic<Lsn> flushed{0}, potential_commit{0}, replayed{0}, last_lsn{0};
  std::atomic<std::uint64_t> live_keys{0}, replay_reads{0};

  std::atomic<bool> halt{false};
  std::mutex send_mu;
  std::condition_variable send_cv;
  bool send_wake = false;

  std::mutex reply_mu;
  std::condition_variable reply_cv;
  std::deque<std::function<void()>> replies;

  std::thread executor, sender, replier;
};

namespace {

Response error_response(const Request& req, Status status, std::string message, NodeId leader = 0) {
  Response r;
  r.id = req.id;
  r.status = status;
  r.message = std::move(message);
  r.leader_hint = leader;
  return r;
}

void pin_current_thread(unsigned index) {
  const auto cpus = std::max(1u, std::thread::hardware_concurrency());
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(index % cpus, &set);
  if (int rc = pthread_setaffinity_np(pthread_self(), sizeof set, &set); rc != 0) {
    spdlog::warn("could not pin executor to cpu {} (error {}); running unpinned", index % cpus, rc);
  }
}

}  // namespace

Engine::Engine(EngineConfig config, Transport& transport)
    : config_(std::move(config)), transport_(transport) {
  config_.validate();
  for (PartitionId p = 0; p < config_.partitions; ++p) {
    auto rt = std::make_unique<Runtime>();
    rt->id = p;
    auto opts = config_.partition;
    opts.dir = config_.data_dir / ("p" + std::to_string(p));
    opts.id = p;
    std::filesystem::create_directories(opts.dir);
    rt->part = std::make_unique<Partition>(opts);
    const auto leader = config_.leader_of(p);
    rt->leader = leader;
    if (leader == config_.node_id) {
      rt->role = Role::Leader;
      rt->epoch = 1;
      rt->channel = make_channel(*rt, 1, kNoLsn);
    } else {
      rt->role = Role::Follower;
      rt->follower.leader = leader;
      rt->follower.lsn.flushed = rt->part->flushed_lsn();
    }
    publish(*rt);
    runtimes_.push_back(std::move(rt));
  }
  for (auto& rt : runtimes_) {
    rt->executor = std::thread([this, r = rt.get()] { executor_loop(*r); });
    rt->sender = std::thread([this, r = rt.get()] { sender_loop(*r); });
    rt->replier = std::thread([this, r = rt.get()] { reply_loop(*r); });
  }
  transport_.set_handler([this](NodeId from, Frame f) { on_frame(from, std::move(f)); });
}

Engine::~Engine() { stop(); }

std::vector<NodeId> Engine::peers() const {
  std::vector<NodeId> out;
  for (auto id : config_.members) {
    if (id != config_.node_id) out.push_back(id);
  }
  return out;
}

std::shared_ptr<LeaderChannel> Engine::make_channel(Runtime& rt, Epoch epoch, Lsn commit) {
  ChannelOptions o;
  o.partition = rt.id;
  o.self = config_.node_id;
  o.followers = peers();
  o.epoch = epoch;
  o.last_lsn = rt.part->last_lsn();
  o.commit_lsn = commit;
  o.max_batch_records = config_.max_batch;
  // Records older than the window are read back from the log on the executor.
  auto backfill = [this, &rt](Lsn from, std::size_t max) {
    auto out = std::make_shared<std::vector<LogRecord>>();
    auto done = std::make_shared<std::promise<void>>();
    auto fut = done->get_future();
    Task t;
    t.kind = Task::Kind::Control;
    t.control = [out, done, from, max](Partition& part) {
      try {
        part.log().scan_from(from, [&](const LogRecord& r, LogPosition) {
          if (out->size() < max) out->push_back(r);
        });
      } catch (const std::exception& e) {
        spdlog::error("p{}: backfill from lsn {} failed: {}", part.id(), from, e.what());
        out->clear();
      }
      done->set_value();
    };
    if (!enqueue(rt, std::move(t), false)) return std::vector<LogRecord>{};
    if (fut.wait_for(std::chrono::seconds(2)) != std::future_status::ready) return std::vector<LogRecord>{};
    return std::move(*out);
  };
  return std::make_shared<LeaderChannel>(o, backfill);
}

std::shared_ptr<LeaderChannel> Engine::channel_of(Runtime& rt) {
  std::lock_guard lock(rt.mu);
  return rt.channel;
}

bool Engine::enqueue(Runtime& rt, Task task, bool bounded) {
  std::lock_guard lock(rt.mu);
  if (rt.stopping) return false;
  if (bounded && rt.queue.size() >= config_.queue_capacity) return false;
  rt.queue.push_back(std::move(task));
  rt.cv.notify_one();
  return true;
}

void Engine::submit(Request req, ResponseFn done) {
  if (stopped_) return done(error_response(req, Status::Error, "engine stopped"));
  auto invalid = [&](const std::string& msg) { done(error_response(req, Status::InvalidArgument, msg)); };
  switch (req.op) {
    case MsgType::Get:
    case MsgType::Put:
    case MsgType::Delete:
      if (req.key.empty()) return invalid("empty key");
      if (req.key.size() > kMaxFieldSize || req.value.size() > kMaxFieldSize) return invalid("key or value too large");
      if (req.op == MsgType::Delete && !req.value.empty()) return invalid("delete carries no value");
      {
        auto& rt = *runtimes_[route(req.key)];
        return enqueue_client(rt, std::move(req), std::move(done));
      }
    case MsgType::Range:
      if (req.end < req.key) return invalid("range start is after end");
      return fan_out(std::move(req), std::move(done));
    case MsgType::BatchGet:
      for (const auto& k : req.keys) {
        if (k.empty()) return invalid("empty key in batch");
      }
      return fan_out(std::move(req), std::move(done));
    case MsgType::Stats: {
      Response r;
      r.id = req.id;
      if (req.partition == kAllPartitions) {
        r.stats = stats();
      } else if (req.partition < config_.partitions) {
        r.stats.push_back(stats(req.partition));
      } else {
        return invalid("no such partition");
      }
      return done(std::move(r));
    }
    case MsgType::Promote:
      if (req.partition >= config_.partitions) return invalid("no such partition");
      return promote(req.partition, [id = req.id, done = std::move(done)](Response r) {
        r.id = id;
        done(std::move(r));
      });
    default:
      return invalid("not a client operation");
  }
}

Response Engine::call(Request req) {
  std::promise<Response> p;
  auto fut = p.get_future();
  submit(std::move(req), [&p](Response r) { p.set_value(std::move(r)); });
  return fut.get();
}

void Engine::enqueue_client(Runtime& rt, Request req, ResponseFn done) {
  const bool write = req.op == MsgType::Put || req.op == MsgType::Delete;
  Status status = Status::Ok;
  std::string message;
  NodeId hint = 0;
  {
    std::lock_guard lock(rt.mu);
    if (rt.stopping) {
      status = Status::Error;
      message = "partition stopping";
    } else if (rt.queue.size() >= config_.queue_capacity) {
      status = Status::Backpressure;
      message = "partition " + std::to_string(rt.id) + " queue is full";
    } else if (rt.role != Role::Leader && (write || !req.read_view)) {
      status = Status::NotLeader;
      hint = rt.leader;
      message = "partition " + std::to_string(rt.id) + " is led by node " + std::to_string(hint);
    } else {
      Task t;
      t.req = std::move(req);
      t.done = std::move(done);
      // LSNs are handed out under the queue lock, so queue order is LSN order.
      if (write) t.lsn = rt.channel->dispatch();
      rt.queue.push_back(std::move(t));
      rt.cv.notify_one();
      return;
    }
  }
  done(error_response(req, status, std::move(message), hint));
}

void Engine::fan_out(Request req, ResponseFn done) {
  struct Merge {
    std::mutex mu;
    std::size_t remaining = 0;
    Response out;
    bool failed = false;
    Request req;
    ResponseFn done;
  };
  auto m = std::make_shared<Merge>();
  m->out.id = req.id;
  m->req = req;
  m->done = std::move(done);

  std::map<PartitionId, Request> parts;
  if (req.op == MsgType::Range) {
    for (PartitionId p = 0; p < config_.partitions; ++p) parts[p] = req;
  } else {
    std::set<std::string> unique(req.keys.begin(), req.keys.end());
    for (const auto& k : unique) {
      auto& sub = parts[route(k)];
      sub.op = MsgType::BatchGet;
      sub.id = req.id;
      sub.read_view = req.read_view;
      sub.keys.push_back(k);
    }
    if (parts.empty()) return m->done(std::move(m->out));
  }

  m->remaining = parts.size();
  auto finish = [m](Response r) {
    std::unique_lock lock(m->mu);
    if (m->failed) return;
    if (r.status != Status::Ok) {
      m->failed = true;
      r.id = m->out.id;
      lock.unlock();
      m->done(std::move(r));
      return;
    }
    for (auto& kv : r.pairs) m->out.pairs.push_back(std::move(kv));
    for (auto& kv : r.batch) m->out.batch.push_back(std::move(kv));
    if (--m->remaining > 0) return;
    auto& out = m->out;
    std::sort(out.pairs.begin(), out.pairs.end());
    if (m->req.limit > 0 && out.pairs.size() > m->req.limit) out.pairs.resize(m->req.limit);
    std::sort(out.batch.begin(), out.batch.end());
    lock.unlock();
    m->done(std::move(m->out));
  };
  for (auto& [p, sub] : parts) enqueue_client(*runtimes_[p], std::move(sub), finish);
}

void Engine::run_on(PartitionId p, const std::function<void(Partition&)>& fn) {
  auto done = std::make_shared<std::promise<void>>();
  auto fut = done->get_future();
  Task t;
  t.kind = Task::Kind::Control;
  t.control = [&fn, done](Partition& part) {
    try {
      fn(part);
      done->set_value();
    } catch (...) {
      done->set_exception(std::current_exception());
    }
  };
  if (!enqueue(*runtimes_.at(p), std::move(t), false)) throw Error("partition stopping");
  fut.get();
}

void Engine::executor_loop(Runtime& rt) {
  rt.part->bind_owner();
  if (config_.pin_threads) pin_current_thread(rt.id);
  std::vector<Task> batch;
  for (;;) {
    batch.clear();
    {
      std::unique_lock lock(rt.mu);
      const auto tick = rt.parked.empty() ? std::chrono::milliseconds(50) : std::chrono::milliseconds(5);
      rt.cv.wait_for(lock, tick, [&] { return rt.stopping || !rt.queue.empty(); });
      if (rt.stopping && rt.queue.empty()) break;
      while (!rt.queue.empty() && batch.size() < config_.max_batch) {
        batch.push_back(std::move(rt.queue.front()));
        rt.queue.pop_front();
      }
    }
    if (!batch.empty()) process(rt, batch);
    recheck_parked(rt, true);
    try {
      rt.part->maintain();
    } catch (const std::exception& e) {
      spdlog::error("p{}: maintenance failed: {}", rt.id, e.what());
    }
    publish(rt);
  }
  for (auto& t : rt.parked) {
    post_reply(rt, [r = error_response(t.req, Status::Rejected, "shutting down"), d = std::move(t.done)] { d(r); });
  }
  rt.parked.clear();
}

void Engine::process(Runtime& rt, std::vector<Task>& batch) {
  struct PendingWrite {
    Lsn lsn;
    Response resp;
    ResponseFn done;
  };
  std::vector<LogRecord> executed;
  std::vector<PendingWrite> pending;
  auto channel = channel_of(rt);
  const bool leader = rt.role == Role::Leader && channel;

  for (auto& t : batch) {
    try {
      switch (t.kind) {
        case Task::Kind::Control:
          t.control(*rt.part);
          break;
        case Task::Kind::Replicate:
          handle_replicate(rt, t);
          break;
        case Task::Kind::Client: {
          const bool write = t.req.op == MsgType::Put || t.req.op == MsgType::Delete;
          if (!write) {
            serve_read(rt, t);
            break;
          }
          if (!leader) {
            post_reply(rt, [r = error_response(t.req, Status::NotLeader, "leadership moved", rt.leader),
                            d = std::move(t.done)] { d(r); });
            break;
          }
          Response r;
          r.id = t.req.id;
          r.lsn = t.lsn;
          if (t.req.op == MsgType::Put) {
            rt.part->exec_put(t.req.key, t.req.value, t.lsn);
            executed.push_back(make_put(t.lsn, t.req.key, std::move(t.req.value)));
          } else {
            r.existed = rt.part->exec_delete(t.req.key, t.lsn);
            executed.push_back(make_delete(t.lsn, t.req.key));
          }
          pending.push_back(PendingWrite{t.lsn, std::move(r), std::move(t.done)});
          break;
        }
      }
    } catch (const std::exception& e) {
      spdlog::error("p{}: {}", rt.id, e.what());
      if (t.kind == Task::Kind::Client && t.done) {
        post_reply(rt, [r = error_response(t.req, Status::Error, e.what()), d = std::move(t.done)] { d(r); });
      }
    }
  }
  if (executed.empty()) return;

  channel->append_executed(std::move(executed));
  {
    std::lock_guard lock(rt.send_mu);
    rt.send_wake = true;
  }
  rt.send_cv.notify_one();

  Lsn flushed = kNoLsn;
  try {
    flushed = rt.part->flush();
  } catch (const std::exception& e) {
    spdlog::error("p{}: flush failed: {}", rt.id, e.what());
    for (auto& w : pending) {
      w.resp.status = Status::Error;
      w.resp.message = e.what();
      post_reply(rt, [r = std::move(w.resp), d = std::move(w.done)] { d(r); });
    }
    return;
  }
  for (auto& w : pending) {
    channel->add_reply(w.lsn, [this, &rt, resp = std::move(w.resp), done = std::move(w.done)](ReplyOutcome o) {
      auto r = resp;
      if (o == ReplyOutcome::Abandoned) {
        r.status = Status::NotLeader;
        r.message = "leadership lost before the write reached a quorum";
        r.leader_hint = rt.leader;
      }
      post_reply(rt, [r = std::move(r), done] { done(r); });
    });
  }
  for (auto& fn : channel->on_local_flush(flushed)) fn(ReplyOutcome::Committed);
}

void Engine::handle_replicate(Runtime& rt, Task& t) {
  if (rt.role == Role::Leader) {
    if (t.msg.epoch <= rt.epoch) {
      // Another node thinks it leads an epoch we already own; tell it ours.
      AckMessage a{rt.id, rt.epoch, config_.node_id, rt.part->flushed_lsn()};
      transport_.send(t.from, encode_ack(a, true));
      return;
    }
    step_down(rt, t.msg.epoch);
  }
  auto resp = follower_append_entries(*rt.part, rt.follower, config_.node_id, t.from, t.msg);
  rt.epoch = rt.follower.epoch;
  rt.leader = rt.follower.leader;
  transport_.send(t.from, encode_ack(resp.ack, resp.nack));
}

void Engine::serve_read(Runtime& rt, Task& t) {
  if (rt.role == Role::Leader) return execute_read(rt, t);
  if (!t.req.read_view) {
    post_reply(rt, [r = error_response(t.req, Status::NotLeader, "follower reads need a read view", rt.leader),
                    d = std::move(t.done)] { d(r); });
    return;
  }
  switch (read_gate(*t.req.read_view, rt.follower.lsn)) {
    case GateDecision::ServeNow:
      return execute_read(rt, t);
    case GateDecision::Block:
      t.deadline = Clock::now() + config_.read_block_timeout;
      rt.parked.push_back(std::move(t));
      return;
    case GateDecision::Reject: {
      auto msg = "read view " + std::to_string(*t.req.read_view) + " is ahead of this replica (flushed " +
                 std::to_string(rt.follower.lsn.flushed) + "); retry later";
      post_reply(rt, [r = error_response(t.req, Status::Rejected, msg, rt.leader), d = std::move(t.done)] { d(r); });
      return;
    }
  }
}

void Engine::execute_read(Runtime& rt, Task& t) {
  Response r;
  r.id = t.req.id;
  switch (t.req.op) {
    case MsgType::Get:
      r.value = rt.part->exec_get(t.req.key);
      if (!r.value) r.status = Status::NotFound;
      break;
    case MsgType::Range:
      r.pairs = rt.part->exec_range(t.req.key, t.req.end, t.req.limit == 0 ? SIZE_MAX : t.req.limit);
      break;
    case MsgType::BatchGet:
      r.batch = rt.part->exec_batch_get(std::move(t.req.keys));
      break;
    default:
      r = error_response(t.req, Status::InvalidArgument, "not a read");
  }
  post_reply(rt, [r = std::move(r), d = std::move(t.done)] { d(r); });
}

void Engine::recheck_parked(Runtime& rt, bool expire) {
  if (rt.parked.empty()) return;
  const auto now = Clock::now();
  std::vector<Task> still;
  for (auto& t : rt.parked) {
    if (rt.role == Role::Leader) {
      execute_read(rt, t);
      continue;
    }
    switch (read_gate(*t.req.read_view, rt.follower.lsn)) {
      case GateDecision::ServeNow:
        execute_read(rt, t);
        break;
      case GateDecision::Block:
        if (expire && now >= t.deadline) {
          post_reply(rt, [r = error_response(t.req, Status::Rejected, "timed out waiting for the commit point; retry",
                                             rt.leader),
                          d = std::move(t.done)] { d(r); });
        } else {
          still.push_back(std::move(t));
        }
        break;
      case GateDecision::Reject:
        post_reply(rt, [r = error_response(t.req, Status::Rejected, "read view ahead of replica", rt.leader),
                        d = std::move(t.done)] { d(r); });
        break;
    }
  }
  rt.parked = std::move(still);
}

void Engine::publish(Runtime& rt) {
  LsnState s = rt.follower.lsn;
  if (rt.role == Role::Leader) {
    if (auto ch = channel_of(rt)) s = ch->lsn_state();
  }
  rt.flushed = s.flushed;
  rt.potential_commit = s.potential_commit;
  rt.replayed = s.replayed;
  rt.last_lsn = rt.part->last_lsn();
  rt.live_keys = rt.part->live_keys();
  rt.replay_reads = rt.part->replay_reads();
}

void Engine::post_reply(Runtime& rt, std::function<void()> fn) {
  {
    std::lock_guard lock(rt.reply_mu);
    rt.replies.push_back(std::move(fn));
  }
  rt.reply_cv.notify_one();
}

void Engine::reply_loop(Runtime& rt) {
  for (;;) {
    std::function<void()> fn;
    {
      std::unique_lock lock(rt.reply_mu);
      rt.reply_cv.wait(lock, [&] { return rt.halt || !rt.replies.empty(); });
      if (rt.replies.empty()) return;
      fn = std::move(rt.replies.front());
      rt.replies.pop_front();
    }
    try {
      fn();
    } catch (const std::exception& e) {
      spdlog::warn("p{}: reply callback threw: {}", rt.id, e.what());
    }
  }
}

void Engine::sender_loop(Runtime& rt) {
  auto last_heartbeat = Clock::now();
  for (;;) {
    {
      std::unique_lock lock(rt.send_mu);
      rt.send_cv.wait_for(lock, config_.heartbeat, [&] { return rt.halt || rt.send_wake; });
      rt.send_wake = false;
      if (rt.halt) return;
    }
    auto ch = channel_of(rt);
    if (!ch || rt.role != Role::Leader) continue;
    const auto now = Clock::now();
    const bool heartbeat = now - last_heartbeat >= config_.heartbeat;
    if (heartbeat) last_heartbeat = now;
    for (auto f : ch->options().followers) {
      while (ch->in_flight(f) < config_.max_in_flight_records) {
        auto msg = ch->next_batch(f);
        if (!msg) break;
        transport_.send(f, encode_append_entries(*msg));
      }
      if (heartbeat) transport_.send(f, encode_append_entries(ch->heartbeat(f)));
    }
  }
}

void Engine::on_frame(NodeId from, Frame frame) {
  std::shared_lock gate(frame_mu_);
  if (!accepting_frames_) return;
  auto runtime = [&](PartitionId p) -> Runtime& {
    if (p >= runtimes_.size()) throw InvalidArgument("frame for unknown partition " + std::to_string(p));
    return *runtimes_[p];
  };
  auto wake_sender = [](Runtime& rt) {
    {
      std::lock_guard lock(rt.send_mu);
      rt.send_wake = true;
    }
    rt.send_cv.notify_one();
  };
  try {
    switch (frame.type) {
      case MsgType::AppendEntries: {
        auto msg = decode_append_entries(frame.payload);
        Task t;
        t.kind = Task::Kind::Replicate;
        t.from = from;
        auto& rt = runtime(msg.partition);
        t.msg = std::move(msg);
        enqueue(rt, std::move(t), true);  // dropped when full; the leader resends
        break;
      }
      case MsgType::Ack:
      case MsgType::Nack: {
        auto ack = decode_ack(frame.payload);
        auto& rt = runtime(ack.partition);
        if (ack.epoch > rt.epoch && rt.role == Role::Leader) {
          Task t;
          t.kind = Task::Kind::Control;
          t.control = [this, &rt, e = ack.epoch](Partition&) { step_down(rt, e); };
          enqueue(rt, std::move(t), false);
          break;
        }
        auto ch = channel_of(rt);
        if (!ch) break;
        if (frame.type == MsgType::Ack) {
          for (auto& fn : ch->on_ack(ack)) fn(ReplyOutcome::Committed);
          const auto s = ch->lsn_state();
          rt.potential_commit = s.potential_commit;
          rt.replayed = s.replayed;
        } else {
          ch->on_nack(ack);
        }
        wake_sender(rt);
        break;
      }
      case MsgType::StatusQuery: {
        auto& rt = runtime(decode_status_query(frame.payload));
        StatusReply s{rt.id, rt.epoch, rt.flushed, rt.potential_commit};
        transport_.send(from, encode_status_reply(s));
        break;
      }
      case MsgType::StatusReply: {
        auto s = decode_status_reply(frame.payload);
        {
          std::lock_guard lock(status_mu_);
          status_replies_[s.partition][from] = s;
        }
        status_cv_.notify_all();
        break;
      }
      default:
        spdlog::warn("node {}: unexpected frame type {} from node {}", config_.node_id,
                     static_cast<int>(frame.type), from);
    }
  } catch (const std::exception& e) {
    spdlog::warn("node {}: bad frame from node {}: {}", config_.node_id, from, e.what());
  }
}

void Engine::step_down(Runtime& rt, Epoch epoch) {
  std::shared_ptr<LeaderChannel> old;
  {
    std::lock_guard lock(rt.mu);
    if (rt.role != Role::Leader || epoch <= rt.epoch) return;
    old = std::move(rt.channel);
    rt.role = Role::Follower;
    rt.epoch = epoch;
    rt.leader = 0;
  }
  const auto flushed = rt.part->flushed_lsn();
  const auto pc = std::min(old ? old->commit_lsn() : kNoLsn, flushed);
  rt.follower.epoch = epoch;
  rt.follower.leader = 0;
  rt.follower.lsn = LsnState{flushed, pc, pc};
  spdlog::warn("p{}: stepping down, epoch {} is newer", rt.id, epoch);
  if (old) {
    for (auto& fn : old->abandon_all()) fn(ReplyOutcome::Abandoned);
  }
  publish(rt);
}

void Engine::promote(PartitionId p, ResponseFn done) {
  std::lock_guard admin(admin_mu_);
  admin_threads_.emplace_back([this, p, done = std::move(done)] {
    auto& rt = *runtimes_[p];
    Response resp;
    if (rt.role == Role::Leader) {
      resp.message = "already leader of partition " + std::to_string(p);
      return done(resp);
    }
    const auto others = peers();
    {
      std::lock_guard lock(status_mu_);
      status_replies_[p].clear();
    }
    for (auto peer : others) transport_.send(peer, encode_status_query(p));
    std::vector<StatusReply> reachable;
    {
      std::unique_lock lock(status_mu_);
      status_cv_.wait_for(lock, config_.status_timeout, [&] { return status_replies_[p].size() == others.size(); });
      for (const auto& [node, s] : status_replies_[p]) reachable.push_back(s);
    }
    try {
      run_on(p, [&](Partition& part) {
        const auto flushed = part.flushed_lsn();
        auto epoch = promotion_epoch(flushed, rt.follower.epoch, reachable);
        if (!epoch) {
          resp.status = Status::Error;
          resp.message = "promotion refused: a reachable peer has a newer log than " + std::to_string(flushed);
          return;
        }
        auto ch = make_channel(rt, *epoch, rt.follower.lsn.potential_commit);
        {
          std::lock_guard lock(rt.mu);
          rt.channel = ch;
          rt.role = Role::Leader;
          rt.epoch = *epoch;
          rt.leader = config_.node_id;
        }
        recheck_parked(rt, false);
        publish(rt);
        resp.lsn = flushed;
        resp.message = "node " + std::to_string(config_.node_id) + " leads partition " + std::to_string(p) +
                       " at epoch " + std::to_string(*epoch);
      });
    } catch (const std::exception& e) {
      resp.status = Status::Error;
      resp.message = e.what();
    }
    {
      std::lock_guard lock(rt.send_mu);
      rt.send_wake = true;
    }
    rt.send_cv.notify_one();
    done(resp);
  });
}

std::vector<PartitionStats> Engine::stats() const {
  std::vector<PartitionStats> out;
  for (PartitionId p = 0; p < config_.partitions; ++p) out.push_back(stats(p));
  return out;
}

PartitionStats Engine::stats(PartitionId p) const {
  auto& rt = *runtimes_.at(p);
  PartitionStats s;
  s.partition = p;
  s.role = rt.role;
  s.epoch = rt.epoch;
  s.leader = rt.leader;
  s.flushed = rt.flushed;
  s.potential_commit = rt.potential_commit;
  s.replayed = rt.replayed;
  s.last_lsn = rt.last_lsn;
  s.live_keys = rt.live_keys;
  const auto cs = rt.part->cache().stats();
  s.cache_hits = cs.hits;
  s.cache_misses = cs.misses;
  s.log_reads = rt.part->io().log_reads;
  s.replay_reads = rt.replay_reads;
  s.bytes_written = rt.part->io().total_bytes_written();
  {
    std::lock_guard lock(rt.mu);
    s.queue_depth = rt.queue.size();
  }
  return s;
}

void Engine::stop() {
  if (stopped_.exchange(true)) return;
  {
    std::lock_guard admin(admin_mu_);
    for (auto& t : admin_threads_) {
      if (t.joinable()) t.join();
    }
  }
  for (auto& rt : runtimes_) {
    {
      std::lock_guard lock(rt->mu);
      rt->stopping = true;
    }
    rt->cv.notify_all();
    if (rt->executor.joinable()) rt->executor.join();
  }
  {
    std::unique_lock gate(frame_mu_);
    accepting_frames_ = false;
  }
  for (auto& rt : runtimes_) {
    rt->halt = true;
    {
      std::lock_guard lock(rt->send_mu);
      rt->send_wake = true;
    }
    rt->send_cv.notify_all();
    if (rt->sender.joinable()) rt->sender.join();
    rt->part->bind_owner();
    try {
      rt->part->flush();
      if (!rt->part->log().faulted()) rt->part->checkpoint();
    } catch (const std::exception& e) {
      spdlog::error("p{}: final checkpoint failed: {}", rt->id, e.what());
    }
    if (auto ch = channel_of(*rt)) {
      for (auto& fn : ch->abandon_all()) fn(ReplyOutcome::Abandoned);
    }
    rt->reply_cv.notify_all();
    if (rt->replier.joinable()) rt->replier.join();
  }
}

}  // namespace logstore

#include "logstore/simulation.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "logstore/engine.hpp"

namespace logstore {

// ---------------------------------------------------------------------------
// SimNetwork

class SimNetwork::Endpoint final : public Transport {
 public:
  Endpoint(SimNetwork& net, NodeId id) : net_(net), id_(id) {}

  NodeId self() const override { return id_; }
  void send(NodeId to, std::string frame) override { net_.transmit(id_, to, std::move(frame)); }
  void set_handler(Handler handler) override { handler_ = std::move(handler); }

  void deliver(NodeId from, const std::string& bytes) {
    if (down || !handler_) return;
    FrameDecoder dec;
    dec.feed(bytes);
    try {
      while (auto f = dec.next()) handler_(from, std::move(*f));
    } catch (const InvalidArgument& e) {
      spdlog::warn("sim node {}: dropping frame from {}: {}", id_, from, e.what());
    }
  }

  bool down = false;

 private:
  SimNetwork& net_;
  NodeId id_;
  Handler handler_;
};

SimNetwork::SimNetwork(std::uint64_t seed, LinkFaults faults) : rng_(seed), faults_(faults) {}

SimNetwork::~SimNetwork() = default;

void SimNetwork::at(Micros when, std::function<void()> fn) {
  events_.push(Event{std::max(when, now_), seq_++, std::move(fn)});
}

Transport& SimNetwork::endpoint(NodeId id) {
  auto& ep = endpoints_[id];
  if (!ep) ep = std::make_unique<Endpoint>(*this, id);
  return *ep;
}

void SimNetwork::set_down(NodeId id, bool down) {
  endpoint(id);
  endpoints_.at(id)->down = down;
}

bool SimNetwork::is_down(NodeId id) const {
  auto it = endpoints_.find(id);
  return it != endpoints_.end() && it->second->down;
}

void SimNetwork::transmit(NodeId from, NodeId to, std::string frame) {
  ++sent_;
  if (is_down(from) || is_down(to) || !endpoints_.contains(to)) {
    ++dropped_;
    return;
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (faults_.drop > 0 && coin(rng_) < faults_.drop) {
    ++dropped_;
    return;
  }
  std::uniform_int_distribution<Micros> delay(faults_.min_delay, std::max(faults_.min_delay, faults_.max_delay));
  auto& tail = link_tail_[{from, to}];
  const bool dup = faults_.duplicate > 0 && coin(rng_) < faults_.duplicate;
  auto schedule = [&](std::string bytes) {
    tail = std::max(now_ + delay(rng_), tail);
    at(tail, [this, from, to, bytes = std::move(bytes)] {
      if (auto it = endpoints_.find(to); it != endpoints_.end()) it->second->deliver(from, bytes);
    });
  };
  if (dup) {
    ++duplicated_;
    schedule(frame);
  }
  schedule(std::move(frame));
}

bool SimNetwork::step() {
  if (events_.empty()) return false;
  // The queue hands out const refs; move the callback out before popping.
  auto ev = std::move(const_cast<Event&>(events_.top()));
  events_.pop();
  now_ = ev.time;
  ev.fn();
  return true;
}

std::uint64_t SimNetwork::run_until(Micros t) {
  std::uint64_t n = 0;
  while (!events_.empty() && events_.top().time <= t) {
    step();
    ++n;
  }
  now_ = std::max(now_, t);
  return n;
}

// ---------------------------------------------------------------------------
// SimCluster

struct SimCluster::Task {
  enum class Kind { Client, Replicate };
  Kind kind = Kind::Client;
  Request req;
  Done done;
  Lsn lsn = kNoLsn;
  NodeId from = 0;
  AppendEntries msg;
  Micros deadline = 0;

  std::uint64_t weight() const { return kind == Kind::Client ? 1 : msg.records.size(); }
};

struct SimCluster::Replica {
  std::unique_ptr<Partition> part;
  Role role = Role::Follower;
  Epoch epoch = 0;
  std::unique_ptr<LeaderChannel> channel;
  FollowerState follower;
  std::deque<Task> queue;
  bool busy = false;
  std::vector<Task> parked;
  std::uint64_t batches = 0;
  // Last LSN of every non-empty AppendEntries sent and not yet acked.
  std::map<NodeId, std::deque<Lsn>> outstanding;
};

struct SimCluster::Node {
  bool alive = true;
  std::vector<std::unique_ptr<Replica>> replicas;
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

}  // namespace

SimCluster::SimCluster(SimClusterConfig config)
    : cfg_(std::move(config)), net_(cfg_.seed, cfg_.links), rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ull) {
  if (cfg_.nodes == 0 || cfg_.partitions == 0) throw InvalidArgument("cluster needs nodes and partitions");
  leaders_.assign(cfg_.partitions, 1);
  max_depth_.assign(cfg_.partitions, 0);
  for (NodeId n = 1; n <= cfg_.nodes; ++n) {
    auto node = std::make_unique<Node>();
    for (PartitionId p = 0; p < cfg_.partitions; ++p) {
      auto opts = cfg_.partition;
      opts.dir = cfg_.dir / ("n" + std::to_string(n)) / ("p" + std::to_string(p));
      opts.id = p;
      std::filesystem::create_directories(opts.dir);
      auto r = std::make_unique<Replica>();
      r->part = std::make_unique<Partition>(opts);
      r->follower.leader = 1;
      r->follower.lsn.flushed = r->part->flushed_lsn();
      node->replicas.push_back(std::move(r));
    }
    nodes_[n] = std::move(node);
    net_.endpoint(n).set_handler([this, n](NodeId from, Frame f) { on_frame(n, from, f); });
  }
  for (PartitionId p = 0; p < cfg_.partitions; ++p) {
    become_leader(1, p, 1, replica(1, p).part->flushed_lsn());
  }
}

SimCluster::~SimCluster() = default;

void SimCluster::run_until(Micros t) {
  for (auto& [id, node] : nodes_) {
    for (auto& r : node->replicas) r->part->bind_owner();
  }
  net_.run_until(t);
}

SimCluster::Replica& SimCluster::replica(NodeId node, PartitionId p) {
  return *nodes_.at(node)->replicas.at(p);
}

const SimCluster::Replica& SimCluster::replica(NodeId node, PartitionId p) const {
  return *nodes_.at(node)->replicas.at(p);
}

PartitionId SimCluster::route(std::string_view key) const { return route_key(key, cfg_.partitions); }
NodeId SimCluster::leader(PartitionId p) const { return leaders_.at(p); }
bool SimCluster::alive(NodeId node) const { return nodes_.at(node)->alive; }
Role SimCluster::role(NodeId node, PartitionId p) const { return replica(node, p).role; }
Partition& SimCluster::partition(NodeId node, PartitionId p) { return *replica(node, p).part; }
LeaderChannel* SimCluster::channel(NodeId node, PartitionId p) { return replica(node, p).channel.get(); }
std::uint64_t SimCluster::max_pipeline_depth(PartitionId p) const { return max_depth_.at(p); }
std::uint64_t SimCluster::completed_batches(NodeId node, PartitionId p) const { return replica(node, p).batches; }

LsnState SimCluster::lsn_state(NodeId node, PartitionId p) const {
  const auto& r = replica(node, p);
  if (r.role == Role::Leader && r.channel) return r.channel->lsn_state();
  return r.follower.lsn;
}

void SimCluster::become_leader(NodeId node, PartitionId p, Epoch epoch, Lsn commit) {
  auto& r = replica(node, p);
  ChannelOptions o;
  o.partition = p;
  o.self = node;
  for (NodeId n = 1; n <= cfg_.nodes; ++n) {
    if (n != node) o.followers.push_back(n);
  }
  o.epoch = epoch;
  o.last_lsn = r.part->last_lsn();
  o.commit_lsn = commit;
  o.max_batch_records = cfg_.max_batch;
  Partition* part = r.part.get();
  auto backfill = [part](Lsn from, std::size_t max) {
    std::vector<LogRecord> out;
    part->log().scan_from(from, [&](const LogRecord& rec, LogPosition) {
      if (out.size() < max) out.push_back(rec);
    });
    return out;
  };
  r.channel = std::make_unique<LeaderChannel>(o, backfill);
  // A single-node cluster commits on the local flush alone.
  for (auto& fn : r.channel->on_local_flush(r.part->flushed_lsn())) fn(ReplyOutcome::Committed);
  r.role = Role::Leader;
  r.epoch = epoch;
  r.outstanding.clear();
  leaders_[p] = node;
  heartbeat(node, p);
}

void SimCluster::heartbeat(NodeId node, PartitionId p) {
  auto& n = *nodes_.at(node);
  auto& r = *n.replicas.at(p);
  if (!n.alive || r.role != Role::Leader || !r.channel) return;
  for (auto f : r.channel->options().followers) net_.endpoint(node).send(f, encode_append_entries(r.channel->heartbeat(f)));
  pump(node, p);
  net_.after(cfg_.heartbeat, [this, node, p, epoch = r.epoch] {
    if (replica(node, p).epoch == epoch) heartbeat(node, p);
  });
}

void SimCluster::pump(NodeId node, PartitionId p) {
  auto& r = replica(node, p);
  if (!nodes_.at(node)->alive || r.role != Role::Leader || !r.channel) return;
  auto& ch = *r.channel;
  for (auto f : ch.options().followers) {
    auto& out = r.outstanding[f];
    while (ch.in_flight(f) < cfg_.max_in_flight_records) {
      auto msg = ch.next_batch(f);
      if (!msg) break;
      if (!msg->records.empty()) out.push_back(msg->records.back().lsn);
      net_.endpoint(node).send(f, encode_append_entries(*msg));
    }
    max_depth_[p] = std::max<std::uint64_t>(max_depth_[p], out.size());
  }
}

void SimCluster::reply_to_client(const Done& done, Response resp) {
  if (!done) return;
  net_.after(cfg_.client_delay, [done, resp = std::move(resp)] { done(resp); });
}

void SimCluster::submit(PartitionId p, NodeId node, Request req, Done done) {
  net_.after(cfg_.client_delay, [this, p, node, req = std::move(req), done = std::move(done)]() mutable {
    auto& n = *nodes_.at(node);
    if (!n.alive) {
      reply_to_client(done, error_response(req, Status::Error, "node unreachable"));
      return;
    }
    auto& r = *n.replicas.at(p);
    const bool write = req.op == MsgType::Put || req.op == MsgType::Delete;
    if (r.role != Role::Leader && (write || !req.read_view)) {
      reply_to_client(done, error_response(req, Status::NotLeader, "not the leader", r.follower.leader));
      return;
    }
    Task t;
    t.req = std::move(req);
    t.done = std::move(done);
    if (write) t.lsn = r.channel->dispatch();
    enqueue(node, p, std::move(t));
  });
}

void SimCluster::put(std::string key, std::string value, Done done) {
  Request req;
  req.op = MsgType::Put;
  const auto p = route(key);
  req.key = std::move(key);
  req.value = std::move(value);
  submit(p, leaders_[p], std::move(req), std::move(done));
}

void SimCluster::del(std::string key, Done done) {
  Request req;
  req.op = MsgType::Delete;
  const auto p = route(key);
  req.key = std::move(key);
  submit(p, leaders_[p], std::move(req), std::move(done));
}

void SimCluster::get(NodeId node, std::string key, std::optional<Lsn> read_view, Done done) {
  Request req;
  req.op = MsgType::Get;
  const auto p = route(key);
  req.key = std::move(key);
  req.read_view = read_view;
  submit(p, node, std::move(req), std::move(done));
}

void SimCluster::enqueue(NodeId node, PartitionId p, Task task) {
  replica(node, p).queue.push_back(std::move(task));
  maybe_start(node, p);
}

void SimCluster::maybe_start(NodeId node, PartitionId p) {
  auto& r = replica(node, p);
  if (r.busy || r.queue.empty() || !nodes_.at(node)->alive) return;
  std::vector<Task> batch;
  std::uint64_t weight = 0;
  while (!r.queue.empty() && batch.size() < cfg_.max_batch) {
    weight += r.queue.front().weight();
    batch.push_back(std::move(r.queue.front()));
    r.queue.pop_front();
  }
  r.busy = true;
  const Micros cost = cfg_.service.per_batch + cfg_.service.per_op * weight;
  net_.after(cost, [this, node, p, b = std::move(batch)]() mutable { run_batch(node, p, std::move(b)); });
}

void SimCluster::run_batch(NodeId node, PartitionId p, std::vector<Task> batch) {
  auto& n = *nodes_.at(node);
  if (!n.alive) return;
  auto& r = *n.replicas.at(p);
  auto& ep = net_.endpoint(node);
  std::vector<LogRecord> executed;
  std::vector<std::pair<Lsn, std::pair<Response, Done>>> pending;

  for (auto& t : batch) {
    if (t.kind == Task::Kind::Replicate) {
      if (r.role == Role::Leader) {
        if (t.msg.epoch <= r.epoch) {
          ep.send(t.from, encode_ack(AckMessage{p, r.epoch, node, r.part->flushed_lsn()}, true));
          continue;
        }
        const auto pc = std::min(r.channel->commit_lsn(), r.part->flushed_lsn());
        auto abandoned = r.channel->abandon_all();
        r.channel.reset();
        r.role = Role::Follower;
        r.follower.epoch = t.msg.epoch;
        r.follower.lsn = LsnState{r.part->flushed_lsn(), pc, pc};
        for (auto& fn : abandoned) fn(ReplyOutcome::Abandoned);
      }
      auto resp = follower_append_entries(*r.part, r.follower, node, t.from, t.msg);
      r.epoch = r.follower.epoch;
      ep.send(t.from, encode_ack(resp.ack, resp.nack));
      continue;
    }
    const bool write = t.req.op == MsgType::Put || t.req.op == MsgType::Delete;
    if (!write) {
      serve_read(node, r, t);
      continue;
    }
    if (r.role != Role::Leader) {
      reply_to_client(t.done, error_response(t.req, Status::NotLeader, "leadership moved", leaders_[p]));
      continue;
    }
    Response resp;
    resp.id = t.req.id;
    resp.lsn = t.lsn;
    if (t.req.op == MsgType::Put) {
      r.part->exec_put(t.req.key, t.req.value, t.lsn);
      executed.push_back(make_put(t.lsn, t.req.key, std::move(t.req.value)));
    } else {
      resp.existed = r.part->exec_delete(t.req.key, t.lsn);
      executed.push_back(make_delete(t.lsn, t.req.key));
    }
    pending.push_back({t.lsn, {std::move(resp), std::move(t.done)}});
  }

  if (!executed.empty()) {
    r.channel->append_executed(std::move(executed));
    const Lsn flushed = r.part->flush();
    for (auto& [lsn, rd] : pending) {
      r.channel->add_reply(lsn, [this, node, p, lsn = lsn, resp = std::move(rd.first),
                                 done = std::move(rd.second)](ReplyOutcome o) {
        auto out = resp;
        if (o == ReplyOutcome::Abandoned) {
          out.status = Status::NotLeader;
          out.message = "leadership lost before the write reached a quorum";
        } else if (on_reply) {
          on_reply(node, p, lsn);
        }
        reply_to_client(done, std::move(out));
      });
    }
    for (auto& fn : r.channel->on_local_flush(flushed)) fn(ReplyOutcome::Committed);
  }

  r.batches++;
  recheck_parked(node, r);
  r.part->maintain();
  r.busy = false;
  pump(node, p);
  maybe_start(node, p);
}

void SimCluster::serve_read(NodeId node, Replica& r, Task& t) {
  auto execute = [&] {
    Response resp;
    resp.id = t.req.id;
    resp.value = r.part->exec_get(t.req.key);
    if (!resp.value) resp.status = Status::NotFound;
    reply_to_client(t.done, std::move(resp));
  };
  if (r.role == Role::Leader) return execute();
  if (!t.req.read_view) {
    reply_to_client(t.done, error_response(t.req, Status::NotLeader, "follower reads need a read view"));
    return;
  }
  switch (read_gate(*t.req.read_view, r.follower.lsn)) {
    case GateDecision::ServeNow:
      return execute();
    case GateDecision::Block: {
      t.deadline = net_.now() + cfg_.read_block_timeout;
      const auto p = r.part->id();
      net_.at(t.deadline, [this, node, p] {
        if (nodes_.at(node)->alive) recheck_parked(node, replica(node, p));
      });
      r.parked.push_back(std::move(t));
      return;
    }
    case GateDecision::Reject:
      reply_to_client(t.done, error_response(t.req, Status::Rejected, "read view ahead of replica"));
      return;
  }
}

void SimCluster::recheck_parked(NodeId node, Replica& r) {
  if (r.parked.empty()) return;
  auto parked = std::move(r.parked);
  r.parked.clear();
  for (auto& t : parked) {
    if (r.role != Role::Leader && net_.now() >= t.deadline &&
        read_gate(*t.req.read_view, r.follower.lsn) == GateDecision::Block) {
      reply_to_client(t.done, error_response(t.req, Status::Rejected, "timed out waiting for the commit point"));
      continue;
    }
    serve_read(node, r, t);
  }
}

void SimCluster::on_frame(NodeId self, NodeId from, const Frame& frame) {
  auto& n = *nodes_.at(self);
  if (!n.alive) return;
  switch (frame.type) {
    case MsgType::AppendEntries: {
      Task t;
      t.kind = Task::Kind::Replicate;
      t.from = from;
      t.msg = decode_append_entries(frame.payload);
      const auto p = t.msg.partition;
      enqueue(self, p, std::move(t));
      break;
    }
    case MsgType::Ack:
    case MsgType::Nack: {
      const auto ack = decode_ack(frame.payload);
      auto& r = replica(self, ack.partition);
      if (r.role != Role::Leader || !r.channel) break;
      if (frame.type == MsgType::Ack) {
        auto& out = r.outstanding[from];
        while (!out.empty() && out.front() <= ack.last_flushed) out.pop_front();
        for (auto& fn : r.channel->on_ack(ack)) fn(ReplyOutcome::Committed);
      } else {
        r.outstanding[from].clear();
        r.channel->on_nack(ack);
      }
      pump(self, ack.partition);
      break;
    }
    default:
      spdlog::warn("sim node {}: unexpected frame type {}", self, static_cast<int>(frame.type));
  }
}

void SimCluster::crash(NodeId node) {
  nodes_.at(node)->alive = false;
  net_.set_down(node, true);
}

std::optional<Epoch> SimCluster::promote(NodeId node, PartitionId p) {
  auto& r = replica(node, p);
  if (!alive(node)) throw InvalidArgument("cannot promote a crashed node");
  if (r.role == Role::Leader) return r.epoch;
  std::vector<StatusReply> reachable;
  for (NodeId n = 1; n <= cfg_.nodes; ++n) {
    if (n == node || !alive(n)) continue;
    const auto s = lsn_state(n, p);
    reachable.push_back(StatusReply{p, replica(n, p).epoch, s.flushed, s.potential_commit});
  }
  auto epoch = promotion_epoch(r.part->flushed_lsn(), r.follower.epoch, reachable);
  if (!epoch) return std::nullopt;
  become_leader(node, p, *epoch, r.follower.lsn.potential_commit);
  recheck_parked(node, r);
  return epoch;
}

SimCluster::LoadResult SimCluster::closed_loop_puts(std::size_t clients, Micros duration, std::uint64_t key_space,
                                                    std::size_t value_size) {
  struct Loop {
    Micros end = 0;
    std::vector<Micros> latencies;
    std::function<void()> issue;
  };
  auto loop = std::make_shared<Loop>();
  loop->end = net_.now() + duration;
  const std::string value(value_size, 'v');
  std::weak_ptr<Loop> weak = loop;
  loop->issue = [this, weak, key_space, value] {
    auto l = weak.lock();
    if (!l || net_.now() >= l->end) return;
    std::uniform_int_distribution<std::uint64_t> pick(0, key_space - 1);
    const Micros sent = net_.now();
    put("key" + std::to_string(pick(rng_)), value, [this, weak, sent](const Response& r) {
      auto l = weak.lock();
      if (!l || net_.now() > l->end) return;
      if (r.status == Status::Ok) l->latencies.push_back(net_.now() - sent);
      l->issue();
    });
  };
  for (std::size_t i = 0; i < clients; ++i) loop->issue();
  run_until(loop->end);
  loop->issue = nullptr;

  LoadResult out;
  auto& lat = loop->latencies;
  out.completed = lat.size();
  out.ops_per_sec = static_cast<double>(lat.size()) * 1e6 / static_cast<double>(duration);
  if (!lat.empty()) {
    std::sort(lat.begin(), lat.end());
    auto pct = [&](double q) { return static_cast<double>(lat[static_cast<std::size_t>(q * (lat.size() - 1))]) / 1000.0; };
    out.p50_ms = pct(0.50);
    out.p99_ms = pct(0.99);
  }
  return out;
}

}  // namespace logstore

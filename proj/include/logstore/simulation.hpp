#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "logstore/partition.hpp"
#include "logstore/protocol.hpp"
#include "logstore/replication.hpp"
#include "logstore/transport.hpp"

namespace logstore {

/// Virtual time in microseconds.
using Micros = std::uint64_t;

struct LinkFaults {
  Micros min_delay = 500;
  Micros max_delay = 1500;
  double drop = 0.0;       // probability a frame is lost
  double duplicate = 0.0;  // probability a frame is delivered twice
};

/// Deterministic discrete-event network. Everything, including timers,
/// runs from run_until() on the calling thread in (time, sequence) order, so
/// a seed fully determines a run. Delivery on a link is FIFO; a duplicate is
/// re-delivered after the original, which models a resend after reconnect.
class SimNetwork {
 public:
  SimNetwork(std::uint64_t seed, LinkFaults faults);
  ~SimNetwork();
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  Micros now() const noexcept { return now_; }
  void at(Micros when, std::function<void()> fn);
  void after(Micros delay, std::function<void()> fn) { at(now_ + delay, std::move(fn)); }

  Transport& endpoint(NodeId id);
  void set_down(NodeId id, bool down);
  bool is_down(NodeId id) const;
  LinkFaults& faults() noexcept { return faults_; }

  /// Runs events up to and including time t; returns events processed.
  std::uint64_t run_until(Micros t);
  bool step();
  bool idle() const noexcept { return events_.empty(); }

  std::uint64_t frames_sent() const noexcept { return sent_; }
  std::uint64_t frames_dropped() const noexcept { return dropped_; }
  std::uint64_t frames_duplicated() const noexcept { return duplicated_; }

  class Endpoint;

 private:
  friend class Endpoint;
  void transmit(NodeId from, NodeId to, std::string frame);

  struct Event {
    Micros time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::mt19937_64 rng_;
  LinkFaults faults_;
  Micros now_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::map<NodeId, std::unique_ptr<Endpoint>> endpoints_;
  std::map<std::pair<NodeId, NodeId>, Micros> link_tail_;
  std::uint64_t sent_ = 0, dropped_ = 0, duplicated_ = 0;
};

/// Executor cost model: one batch costs per_batch + per_op * size.
struct ServiceModel {
  Micros per_op = 20;
  Micros per_batch = 50;
};

struct SimClusterConfig {
  std::filesystem::path dir;
  std::uint32_t nodes = 3;  // node ids 1..nodes; node 1 leads every partition
  std::uint32_t partitions = 1;
  std::uint64_t seed = 1;
  LinkFaults links;
  ServiceModel service;
  std::size_t max_batch = 256;
  std::size_t max_in_flight_records = 8192;
  Micros heartbeat = 50'000;
  Micros client_delay = 2'000;  // one way, client to node and back
  Micros read_block_timeout = 1'000'000;
  PartitionOptions partition;  // template; dir and id filled per replica
};

/// N nodes x P partitions running the real storage and replication code on
/// virtual time, with full visibility into every replica for assertions.
class SimCluster {
 public:
  explicit SimCluster(SimClusterConfig config);
  ~SimCluster();

  SimNetwork& net() noexcept { return net_; }
  Micros now() const noexcept { return net_.now(); }
  const SimClusterConfig& config() const noexcept { return cfg_; }

  using Done = std::function<void(const Response&)>;

  /// Client operations. The request reaches the current leader of the key's
  /// partition after client_delay; `done` fires when the reply gets back.
  void put(std::string key, std::string value, Done done = {});
  void del(std::string key, Done done = {});
  /// Read on a given node, optionally with a read view (follower read).
  void get(NodeId node, std::string key, std::optional<Lsn> read_view, Done done);

  void run_until(Micros t);
  void run_for(Micros d) { run_until(net_.now() + d); }

  /// Stops a node: no more events, no traffic. Its files stay on disk.
  void crash(NodeId node);
  /// Promotes node for partition p if no reachable peer has a newer log.
  /// Returns the new epoch, or nullopt when refused.
  std::optional<Epoch> promote(NodeId node, PartitionId p);

  PartitionId route(std::string_view key) const;
  NodeId leader(PartitionId p) const;
  bool alive(NodeId node) const;
  Role role(NodeId node, PartitionId p) const;
  LsnState lsn_state(NodeId node, PartitionId p) const;
  Partition& partition(NodeId node, PartitionId p);
  LeaderChannel* channel(NodeId node, PartitionId p);
  /// Deepest pipeline seen: AppendEntries messages with records sent to one
  /// follower and not yet covered by its ack.
  std::uint64_t max_pipeline_depth(PartitionId p) const;
  std::uint64_t completed_batches(NodeId node, PartitionId p) const;

  struct LoadResult {
    std::uint64_t completed = 0;
    double ops_per_sec = 0;
    double p50_ms = 0;  // client-observed latency, virtual time
    double p99_ms = 0;
  };
  /// Closed loop: `clients` each keep one put outstanding, with uniform keys
  /// over key_space. Counts replies that arrive within `duration`.
  LoadResult closed_loop_puts(std::size_t clients, Micros duration, std::uint64_t key_space,
                              std::size_t value_size);

  /// Fires on the leader the moment a write reply is released (before it
  /// travels back to the client).
  std::function<void(NodeId leader, PartitionId p, Lsn lsn)> on_reply;

 private:
  struct Replica;
  struct Node;
  struct Task;

  Replica& replica(NodeId node, PartitionId p);
  const Replica& replica(NodeId node, PartitionId p) const;
  void enqueue(NodeId node, PartitionId p, Task task);
  void maybe_start(NodeId node, PartitionId p);
  void run_batch(NodeId node, PartitionId p, std::vector<Task> batch);
  void pump(NodeId node, PartitionId p);
  void heartbeat(NodeId node, PartitionId p);
  void on_frame(NodeId self, NodeId from, const Frame& frame);
  void serve_read(NodeId node, Replica& r, Task& t);
  void recheck_parked(NodeId node, Replica& r);
  void reply_to_client(const Done& done, Response resp);
  void submit(PartitionId p, NodeId node, Request req, Done done);
  void become_leader(NodeId node, PartitionId p, Epoch epoch, Lsn commit);

  SimClusterConfig cfg_;
  SimNetwork net_;
  std::map<NodeId, std::unique_ptr<Node>> nodes_;
  std::vector<NodeId> leaders_;
  std::vector<std::uint64_t> max_depth_;
  std::mt19937_64 rng_;
};

}  // namespace logstore

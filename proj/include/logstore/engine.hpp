#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string_view>
#include <thread>
#include <vector>

#include "logstore/partition.hpp"
#include "logstore/protocol.hpp"
#include "logstore/replication.hpp"
#include "logstore/transport.hpp"

namespace logstore {

struct EngineConfig {
  NodeId node_id = 1;
  std::vector<NodeId> members{1};  // every node of the cluster, self included
  std::uint32_t partitions = 1;
  std::map<PartitionId, NodeId> leaders;  // missing partitions are led by members.front()
  std::filesystem::path data_dir;
  PartitionOptions partition;  // template; dir and id are filled per partition
  std::size_t queue_capacity = 1 << 14;
  std::size_t max_batch = 256;
  std::size_t max_in_flight_records = 8192;  // per follower, send-stage throttle
  std::chrono::milliseconds heartbeat{50};
  std::chrono::milliseconds read_block_timeout{1000};
  std::chrono::milliseconds status_timeout{300};
  bool pin_threads = true;

  NodeId leader_of(PartitionId p) const;
  /// Throws InvalidArgument for an empty or duplicated member list, a node id
  /// missing from members, or a leader that is not a member.
  void validate() const;
};

/// Stable FNV-1a 64 hash of the key bytes, modulo the partition count.
PartitionId route_key(std::string_view key, std::uint32_t partitions);

using ResponseFn = std::function<void(Response)>;

/// Partitioned execution core of one node. Each partition has one executor
/// thread that owns its log, index and cache, fed by a bounded FIFO queue.
/// Leader partitions also run a send stage and a reply stage; acks are
/// handled on the transport's delivery thread.
class Engine {
 public:
  Engine(EngineConfig config, Transport& transport);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Routes and enqueues a request. `done` runs exactly once, on an engine
  /// thread (or inline for requests rejected up front).
  void submit(Request req, ResponseFn done);
  /// Blocking wrapper around submit.
  Response call(Request req);

  /// Flushes and checkpoints every partition, then joins all threads.
  void stop();

  PartitionId route(std::string_view key) const { return route_key(key, config_.partitions); }
  std::vector<PartitionStats> stats() const;
  PartitionStats stats(PartitionId p) const;
  const EngineConfig& config() const noexcept { return config_; }

  /// Runs fn on the partition's executor thread and waits for it.
  void run_on(PartitionId p, const std::function<void(Partition&)>& fn);

 private:
  struct Runtime;
  struct Task;

  void on_frame(NodeId from, Frame frame);
  void enqueue_client(Runtime& rt, Request req, ResponseFn done);
  bool enqueue(Runtime& rt, Task task, bool bounded);
  void executor_loop(Runtime& rt);
  void sender_loop(Runtime& rt);
  void reply_loop(Runtime& rt);
  void process(Runtime& rt, std::vector<Task>& batch);
  void serve_read(Runtime& rt, Task& task);
  void execute_read(Runtime& rt, Task& task);
  void handle_replicate(Runtime& rt, Task& task);
  std::shared_ptr<LeaderChannel> make_channel(Runtime& rt, Epoch epoch, Lsn commit);
  void recheck_parked(Runtime& rt, bool expire);
  void publish(Runtime& rt);
  void post_reply(Runtime& rt, std::function<void()> fn);
  void step_down(Runtime& rt, Epoch epoch);
  void promote(PartitionId p, ResponseFn done);
  void fan_out(Request req, ResponseFn done);
  std::shared_ptr<LeaderChannel> channel_of(Runtime& rt);
  std::vector<NodeId> peers() const;

  EngineConfig config_;
  Transport& transport_;
  std::vector<std::unique_ptr<Runtime>> runtimes_;
  std::mutex admin_mu_;
  std::vector<std::thread> admin_threads_;
  std::atomic<bool> stopped_{false};
  // Held shared by frame handlers; stop() takes it exclusively to cut them off.
  std::shared_mutex frame_mu_;
  bool accepting_frames_ = true;

  // Replies to StatusQuery, collected by promote().
  std::mutex status_mu_;
  std::condition_variable status_cv_;
  std::map<PartitionId, std::map<NodeId, StatusReply>> status_replies_;
};

}  // namespace logstore

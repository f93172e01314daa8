#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "logstore/wire.hpp"

namespace logstore {

/// Peer-to-peer frame delivery for one node. Sends are best effort: a frame
/// to an unreachable peer is dropped and the replication layer resends.
/// Frames between a pair of nodes arrive in send order.
class Transport {
 public:
  using Handler = std::function<void(NodeId from, Frame frame)>;

  virtual ~Transport() = default;
  virtual NodeId self() const = 0;
  /// frame is a complete encoded frame (see wire.hpp).
  virtual void send(NodeId to, std::string frame) = 0;
  /// Incoming frames are delivered on a transport-owned thread.
  virtual void set_handler(Handler handler) = 0;
};

/// In-process network of threaded endpoints. Each endpoint delivers its
/// inbound frames on its own thread, in arrival order.
class LoopbackNetwork {
 public:
  LoopbackNetwork();
  ~LoopbackNetwork();
  LoopbackNetwork(const LoopbackNetwork&) = delete;
  LoopbackNetwork& operator=(const LoopbackNetwork&) = delete;

  Transport& endpoint(NodeId id);
  /// A down node neither sends nor receives.
  void set_down(NodeId id, bool down);
  void shutdown();

  class Endpoint;

 private:
  friend class Endpoint;
  void route(NodeId from, NodeId to, std::string frame);

  std::mutex mu_;
  std::map<NodeId, std::unique_ptr<Endpoint>> endpoints_;
};

}  // namespace logstore

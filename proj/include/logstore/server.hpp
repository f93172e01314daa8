#pragma once

#include <memory>

#include "logstore/config.hpp"
#include "logstore/engine.hpp"
#include "logstore/tcp.hpp"

namespace logstore {

/// A node: engine plus TCP front end. Client requests cross into the engine
/// only through Engine::submit.
class Server {
 public:
  /// Binds the listening port and opens every partition; throws on failure.
  explicit Server(ServerConfig config);
  ~Server();

  /// Flushes and checkpoints every partition, then closes all connections.
  void stop();

  Engine& engine() noexcept { return *engine_; }
  TcpTransport& transport() noexcept { return *transport_; }
  const ServerConfig& config() const noexcept { return config_; }

 private:
  ServerConfig config_;
  std::unique_ptr<TcpTransport> transport_;
  std::unique_ptr<Engine> engine_;
  bool stopped_ = false;
};

}  // namespace logstore

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "logstore/protocol.hpp"
#include "logstore/transport.hpp"

namespace logstore {

/// One listening port for both peers and clients. A connection whose first
/// frame is Hello belongs to a peer and carries replication traffic from it;
/// any other connection is a client sending requests and reading responses.
/// Outbound peer connections are opened lazily and re-opened after errors.
class TcpTransport final : public Transport {
 public:
  using ClientHandler = std::function<void(Request req, std::function<void(const Response&)> reply)>;

  TcpTransport(NodeId self, std::map<NodeId, std::string> addresses);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  /// Binds and listens on the node's own address; throws IoError on failure.
  void start();
  void stop();
  void set_client_handler(ClientHandler handler);

  NodeId self() const override { return self_; }
  void send(NodeId to, std::string frame) override;
  void set_handler(Handler handler) override;

  /// Peers with an open outbound connection.
  std::size_t connected_peers() const;
  std::uint16_t port() const noexcept { return port_; }

 private:
  struct Conn;
  struct Outbound;

  void accept_loop();
  void serve_connection(std::shared_ptr<Conn> conn);
  int connect_to(NodeId peer);

  NodeId self_;
  std::map<NodeId, std::string> addresses_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  mutable std::mutex mu_;
  Handler handler_;
  ClientHandler client_handler_;
  std::vector<std::shared_ptr<Conn>> conns_;
  std::vector<std::thread> conn_threads_;
  std::map<NodeId, std::shared_ptr<Outbound>> outbound_;
};

/// Blocking request/response client for one server.
class TcpClient {
 public:
  explicit TcpClient(const std::string& address,
                     std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
  ~TcpClient();
  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;

  /// Sends the request and waits for its response. Throws IoError on a
  /// broken connection or timeout.
  Response call(Request req);

 private:
  int fd_ = -1;
  std::uint64_t next_id_ = 1;
  FrameDecoder decoder_;
};

}  // namespace logstore

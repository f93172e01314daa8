#include "logstore/tcp.hpp"

#include <cerrno>
#include <cstring>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

namespace logstore {

using Clock = std::chrono::steady_clock;

namespace {

constexpr auto kReconnectBackoff = std::chrono::milliseconds(200);

bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

// Connects to host:port; returns -1 and fills err on failure.
int dial(const std::string& address, std::string& err) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) {
    err = "bad address " + address;
    return -1;
  }
  const std::string host = address.substr(0, colon), port = address.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    err = gai_strerror(rc);
    return -1;
  }
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    err = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) set_nodelay(fd);
  return fd;
}

}  // namespace

struct TcpTransport::Conn {
  int fd = -1;
  std::mutex write_mu;
  bool open = true;
  std::atomic<bool> finished{false};

  bool write(std::string_view bytes) {
    std::lock_guard lock(write_mu);
    return open && write_all(fd, bytes);
  }
  // Wakes the reader; the reader thread closes the descriptor itself.
  void shut() {
    std::lock_guard lock(write_mu);
    if (!open) return;
    open = false;
    ::shutdown(fd, SHUT_RDWR);
  }
};

struct TcpTransport::Outbound {
  std::mutex mu;
  int fd = -1;
  Clock::time_point retry_after{};
};

TcpTransport::TcpTransport(NodeId self, std::map<NodeId, std::string> addresses)
    : self_(self), addresses_(std::move(addresses)) {
  if (!addresses_.contains(self_)) throw InvalidArgument("no address for node " + std::to_string(self_));
  for (const auto& [id, addr] : addresses_) {
    if (id != self_) outbound_[id] = std::make_shared<Outbound>();
  }
}

TcpTransport::~TcpTransport() { stop(); }

void TcpTransport::start() {
  const auto& addr = addresses_.at(self_);
  const auto colon = addr.rfind(':');
  const std::string host = addr.substr(0, colon), port = addr.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw IoError("cannot resolve listen address " + addr + ": " + gai_strerror(rc));
  }
  std::string err = "no usable address";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 128) == 0) {
      listen_fd_ = fd;
      break;
    }
    err = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) throw IoError("cannot listen on " + addr + ": " + err);
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                            : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpTransport::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    for (auto& c : conns_) c->shut();
    threads = std::move(conn_threads_);
    conns_.clear();
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
  for (auto& [id, out] : outbound_) {
    std::lock_guard lock(out->mu);
    if (out->fd >= 0) ::close(out->fd);
    out->fd = -1;
  }
}

void TcpTransport::set_handler(Handler handler) {
  std::lock_guard lock(mu_);
  handler_ = std::move(handler);
}

void TcpTransport::set_client_handler(ClientHandler handler) {
  std::lock_guard lock(mu_);
  client_handler_ = std::move(handler);
}

std::size_t TcpTransport::connected_peers() const {
  std::size_t n = 0;
  for (const auto& [id, out] : outbound_) {
    std::lock_guard lock(out->mu);
    n += out->fd >= 0;
  }
  return n;
}

int TcpTransport::connect_to(NodeId peer) {
  std::string err;
  int fd = dial(addresses_.at(peer), err);
  if (fd < 0) {
    spdlog::debug("node {}: cannot reach node {}: {}", self_, peer, err);
    return -1;
  }
  if (!write_all(fd, encode_hello(self_))) {
    ::close(fd);
    return -1;
  }
  spdlog::info("node {}: connected to node {} at {}", self_, peer, addresses_.at(peer));
  return fd;
}

void TcpTransport::send(NodeId to, std::string frame) {
  auto it = outbound_.find(to);
  if (it == outbound_.end() || !running_) return;
  auto& out = *it->second;
  std::lock_guard lock(out.mu);
  if (out.fd < 0) {
    if (Clock::now() < out.retry_after) return;
    out.fd = connect_to(to);
    if (out.fd < 0) {
      out.retry_after = Clock::now() + kReconnectBackoff;
      return;
    }
  }
  if (!write_all(out.fd, frame)) {
    spdlog::warn("node {}: connection to node {} lost", self_, to);
    ::close(out.fd);
    out.fd = -1;
  }
}

void TcpTransport::accept_loop() {
  while (running_) {
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR) continue;
      if (!running_) return;
      spdlog::warn("node {}: accept failed: {}", self_, std::strerror(errno));
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      continue;
    }
    set_nodelay(fd);
    auto conn = std::make_shared<Conn>();
    conn->fd = fd;
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      return;
    }
    // Reap connections that already ended.
    for (std::size_t i = 0; i < conns_.size();) {
      if (conns_[i]->finished) {
        conn_threads_[i].join();
        conns_.erase(conns_.begin() + static_cast<std::ptrdiff_t>(i));
        conn_threads_.erase(conn_threads_.begin() + static_cast<std::ptrdiff_t>(i));
      } else {
        ++i;
      }
    }
    conns_.push_back(conn);
    conn_threads_.emplace_back([this, conn] { serve_connection(conn); });
  }
}

void TcpTransport::serve_connection(std::shared_ptr<Conn> conn) {
  FrameDecoder dec;
  std::optional<NodeId> peer;
  bool first = true;
  char buf[64 * 1024];
  try {
    for (;;) {
      const ssize_t n = ::recv(conn->fd, buf, sizeof buf, 0);
      if (n == 0) break;
      if (n < 0) {
        if (errno == EINTR) continue;
        break;
      }
      dec.feed(std::string_view(buf, static_cast<std::size_t>(n)));
      while (auto f = dec.next()) {
        if (first) {
          first = false;
          if (f->type == MsgType::Hello) {
            peer = decode_hello(f->payload);
            continue;
          }
        }
        if (peer) {
          Handler h;
          {
            std::lock_guard lock(mu_);
            h = handler_;
          }
          if (h) h(*peer, std::move(*f));
          continue;
        }
        ClientHandler h;
        {
          std::lock_guard lock(mu_);
          h = client_handler_;
        }
        Request req;
        try {
          req = decode_request(f->type, f->payload);
        } catch (const Error& e) {
          Response r;
          r.status = Status::InvalidArgument;
          r.message = e.what();
          conn->write(encode_response(r));
          continue;
        }
        if (!h) {
          Response r;
          r.id = req.id;
          r.status = Status::Error;
          r.message = "server not ready";
          conn->write(encode_response(r));
          continue;
        }
        h(std::move(req), [conn](const Response& r) { conn->write(encode_response(r)); });
      }
    }
  } catch (const std::exception& e) {
    spdlog::warn("node {}: closing connection: {}", self_, e.what());
  }
  conn->shut();
  ::close(conn->fd);
  conn->finished = true;
}

TcpClient::TcpClient(const std::string& address, std::chrono::milliseconds timeout) {
  std::string err;
  fd_ = dial(address, err);
  if (fd_ < 0) throw IoError("cannot connect to " + address + ": " + err);
  timeval tv{};
  tv.tv_sec = timeout.count() / 1000;
  tv.tv_usec = (timeout.count() % 1000) * 1000;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

TcpClient::~TcpClient() {
  if (fd_ >= 0) ::close(fd_);
}

Response TcpClient::call(Request req) {
  req.id = next_id_++;
  if (!write_all(fd_, encode_request(req))) throw IoError(std::string("send failed: ") + std::strerror(errno));
  char buf[64 * 1024];
  for (;;) {
    while (auto f = decoder_.next()) {
      if (f->type != MsgType::ClientResponse) throw IoError("unexpected frame from server");
      auto resp = decode_response(f->payload);
      if (resp.id == req.id || resp.id == 0) return resp;
    }
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n == 0) throw IoError("server closed the connection");
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw IoError("timed out waiting for the server");
      throw IoError(std::string("receive failed: ") + std::strerror(errno));
    }
    decoder_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
  }
}

}  // namespace logstore

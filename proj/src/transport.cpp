#include "logstore/transport.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <thread>

#include <spdlog/spdlog.h>

namespace logstore {

class LoopbackNetwork::Endpoint final : public Transport {
 public:
  Endpoint(LoopbackNetwork& net, NodeId id) : net_(net), id_(id) {}
  ~Endpoint() override { stop(); }

  NodeId self() const override { return id_; }

  void send(NodeId to, std::string frame) override {
    if (down_) return;
    net_.route(id_, to, std::move(frame));
  }

  void set_handler(Handler handler) override {
    std::lock_guard lock(mu_);
    handler_ = std::move(handler);
    if (!worker_.joinable()) worker_ = std::thread([this] { run(); });
    cv_.notify_all();
  }

  void enqueue(NodeId from, std::string frame) {
    if (down_) return;
    std::lock_guard lock(mu_);
    if (stopping_) return;
    inbox_.emplace_back(from, std::move(frame));
    cv_.notify_one();
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      cv_.notify_all();
    }
    if (worker_.joinable()) worker_.join();
  }

  std::atomic<bool> down_{false};

 private:
  void run() {
    for (;;) {
      std::pair<NodeId, std::string> item;
      Handler handler;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !inbox_.empty(); });
        if (stopping_) return;
        item = std::move(inbox_.front());
        inbox_.pop_front();
        handler = handler_;
      }
      FrameDecoder dec;
      dec.feed(item.second);
      try {
        while (auto f = dec.next()) handler(item.first, std::move(*f));
      } catch (const std::exception& e) {
        spdlog::warn("loopback node {}: dropping frame from {}: {}", id_, item.first, e.what());
      }
    }
  }

  LoopbackNetwork& net_;
  NodeId id_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::pair<NodeId, std::string>> inbox_;
  Handler handler_;
  bool stopping_ = false;
  std::thread worker_;
};

LoopbackNetwork::LoopbackNetwork() = default;

LoopbackNetwork::~LoopbackNetwork() { shutdown(); }

Transport& LoopbackNetwork::endpoint(NodeId id) {
  std::lock_guard lock(mu_);
  auto& ep = endpoints_[id];
  if (!ep) ep = std::make_unique<Endpoint>(*this, id);
  return *ep;
}

void LoopbackNetwork::set_down(NodeId id, bool down) {
  std::lock_guard lock(mu_);
  if (auto it = endpoints_.find(id); it != endpoints_.end()) it->second->down_ = down;
}

void LoopbackNetwork::shutdown() {
  std::lock_guard lock(mu_);
  for (auto& [id, ep] : endpoints_) ep->stop();
}

void LoopbackNetwork::route(NodeId from, NodeId to, std::string frame) {
  Endpoint* target = nullptr;
  {
    std::lock_guard lock(mu_);
    auto it = endpoints_.find(to);
    if (it == endpoints_.end()) return;
    target = it->second.get();
  }
  target->enqueue(from, std::move(frame));
}

}  // namespace logstore

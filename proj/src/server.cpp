#include "logstore/server.hpp"

#include <spdlog/spdlog.h>

namespace logstore {

Server::Server(ServerConfig config) : config_(std::move(config)) {
  transport_ = std::make_unique<TcpTransport>(config_.node_id, config_.nodes);
  transport_->start();
  engine_ = std::make_unique<Engine>(config_.engine, *transport_);
  transport_->set_client_handler([this](Request req, std::function<void(const Response&)> reply) {
    engine_->submit(std::move(req), [reply = std::move(reply)](Response r) { reply(r); });
  });
  spdlog::info("node {} serving {} partition(s) on {} ({} member(s))", config_.node_id, config_.engine.partitions,
               config_.listen_address(), config_.nodes.size());
}

Server::~Server() { stop(); }

void Server::stop() {
  if (stopped_) return;
  stopped_ = true;
  engine_->stop();
  transport_->stop();
  spdlog::info("node {} stopped", config_.node_id);
}

}  // namespace logstore

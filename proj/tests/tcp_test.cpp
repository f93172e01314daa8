#include "logstore/server.hpp"

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace logstore {
namespace {

using namespace std::chrono_literals;
using testing::TempDir;

std::uint16_t free_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

ServerConfig server_config(const TempDir& dir, NodeId self, const std::map<NodeId, std::string>& nodes,
                           std::uint32_t partitions) {
  ServerConfig c;
  c.node_id = self;
  c.nodes = nodes;
  auto& e = c.engine;
  e.node_id = self;
  e.members.clear();
  for (const auto& [id, addr] : nodes) e.members.push_back(id);
  e.partitions = partitions;
  e.data_dir = dir / ("node" + std::to_string(self));
  e.partition.flush_policy = FlushPolicy::OsBuffered;
  e.partition.checkpoint_every = 0;
  e.pin_threads = false;
  e.heartbeat = 20ms;
  e.status_timeout = 200ms;
  return c;
}

Request req(MsgType op, std::string key = {}, std::string value = {}) {
  Request r;
  r.op = op;
  r.key = std::move(key);
  r.value = std::move(value);
  return r;
}

TEST(Tcp, SingleNodeRoundTrip) {
  TempDir dir;
  const std::string addr = "127.0.0.1:" + std::to_string(free_port());
  Server server(server_config(dir, 1, {{1, addr}}, 2));
  TcpClient client(addr);

  auto put = client.call(req(MsgType::Put, "a", "1"));
  ASSERT_EQ(put.status, Status::Ok) << put.message;
  EXPECT_EQ(client.call(req(MsgType::Put, "b", "2")).status, Status::Ok);
  auto get = client.call(req(MsgType::Get, "a"));
  ASSERT_EQ(get.status, Status::Ok);
  EXPECT_EQ(get.value, "1");
  EXPECT_EQ(client.call(req(MsgType::Get, "absent")).status, Status::NotFound);

  auto range = req(MsgType::Range, "a", {});
  range.end = "z";
  range.limit = 10;
  auto r = client.call(range);
  ASSERT_EQ(r.status, Status::Ok);
  EXPECT_EQ(r.pairs, (std::vector<KeyValue>{{"a", "1"}, {"b", "2"}}));

  auto batch = req(MsgType::BatchGet);
  batch.keys = {"b", "nope", "a"};
  auto b = client.call(batch);
  ASSERT_EQ(b.status, Status::Ok);
  EXPECT_EQ(b.batch, (BatchResult{{"a", "1"}, {"b", "2"}, {"nope", std::nullopt}}));

  auto del = client.call(req(MsgType::Delete, "a"));
  EXPECT_EQ(del.status, Status::Ok);
  EXPECT_TRUE(del.existed);
  EXPECT_EQ(client.call(req(MsgType::Get, "a")).status, Status::NotFound);

  auto stats = req(MsgType::Stats);
  stats.partition = kAllPartitions;
  auto s = client.call(stats);
  ASSERT_EQ(s.status, Status::Ok);
  ASSERT_EQ(s.stats.size(), 2u);
  EXPECT_EQ(s.stats[0].role, Role::Leader);

  EXPECT_EQ(client.call(req(MsgType::Put, "", "x")).status, Status::InvalidArgument);

  // A second client on its own connection sees the same data.
  TcpClient other(addr);
  EXPECT_EQ(other.call(req(MsgType::Get, "b")).value, "2");
}

TEST(Tcp, BindFailureAborts) {
  TempDir dir;
  const std::string addr = "127.0.0.1:" + std::to_string(free_port());
  Server first(server_config(dir, 1, {{1, addr}}, 1));
  TempDir other;
  EXPECT_THROW(Server(server_config(other, 1, {{1, addr}}, 1)), IoError);
}

TEST(Tcp, ClientFailsFastWithoutServer) {
  EXPECT_THROW(TcpClient("127.0.0.1:" + std::to_string(free_port())), IoError);
}

TEST(Tcp, ThreeNodeReplicationAndFollowerRead) {
  TempDir dir;
  std::map<NodeId, std::string> nodes;
  for (NodeId n = 1; n <= 3; ++n) nodes[n] = "127.0.0.1:" + std::to_string(free_port());
  std::vector<std::unique_ptr<Server>> servers;
  for (NodeId n = 1; n <= 3; ++n) servers.push_back(std::make_unique<Server>(server_config(dir, n, nodes, 1)));

  TcpClient leader(nodes[1]);
  Lsn last = 0;
  for (int i = 0; i < 50; ++i) {
    auto r = leader.call(req(MsgType::Put, "k" + std::to_string(i), std::to_string(i)));
    ASSERT_EQ(r.status, Status::Ok) << r.message;
    last = r.lsn;
  }
  EXPECT_EQ(last, 50u);

  TcpClient follower(nodes[2]);
  auto refused = follower.call(req(MsgType::Put, "x", "y"));
  EXPECT_EQ(refused.status, Status::NotLeader);
  EXPECT_EQ(refused.leader_hint, 1u);

  auto read = req(MsgType::Get, "k49");
  read.read_view = last;
  Response got;
  for (int attempt = 0; attempt < 50; ++attempt) {
    got = follower.call(read);
    if (got.status == Status::Ok) break;
    std::this_thread::sleep_for(20ms);
  }
  ASSERT_EQ(got.status, Status::Ok) << got.message;
  EXPECT_EQ(got.value, "49");

  for (auto& s : servers) s->stop();
}

}  // namespace
}  // namespace logstore

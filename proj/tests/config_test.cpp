#include "logstore/config.hpp"

#include <cstdlib>

#include <gtest/gtest.h>

namespace logstore {
namespace {

constexpr const char* kThreeNodes = R"(
# cluster
node_id = 2
node.1 = 127.0.0.1:7001
node.2 = 127.0.0.1:7002
node.3 = 127.0.0.1:7003
partitions = 4
leader.3 = 3
data_dir = /tmp/from-file   # trailing comment
cache_bytes = 1048576
flush_policy = os_buffered
heartbeat_ms = 25
pin_threads = false
)";

class EnvGuard {
 public:
  explicit EnvGuard(const char* value) {
    if (const char* old = std::getenv("LOGSTORE_DATA_DIR")) saved_ = old;
    if (value) {
      ::setenv("LOGSTORE_DATA_DIR", value, 1);
    } else {
      ::unsetenv("LOGSTORE_DATA_DIR");
    }
  }
  ~EnvGuard() {
    if (saved_) {
      ::setenv("LOGSTORE_DATA_DIR", saved_->c_str(), 1);
    } else {
      ::unsetenv("LOGSTORE_DATA_DIR");
    }
  }

 private:
  std::optional<std::string> saved_;
};

TEST(Settings, ParsesKeyValueLines) {
  const auto s = Settings::parse("a = 1\n\n# note\nb=two words \nc = 2.5\nd = yes\n");
  EXPECT_EQ(s.get_u64("a", 0), 1u);
  EXPECT_EQ(s.get_or("b", ""), "two words");
  EXPECT_DOUBLE_EQ(s.get_double("c", 0), 2.5);
  EXPECT_TRUE(s.get_bool("d", false));
  EXPECT_EQ(s.get_u64("missing", 9), 9u);
  EXPECT_THROW(s.get_u64("b", 0), InvalidArgument);
}

TEST(Settings, ErrorsNameTheLine) {
  try {
    Settings::parse("a = 1\nnot a setting\n");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(Settings::parse("a = 1\na = 2\n"), InvalidArgument);
}

TEST(Settings, DuplicateNodeIdAborts) {
  try {
    Settings::parse("node.1 = h:1\nnode.2 = h:2\nnode.1 = h:3\n");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate node id 1"), std::string::npos);
  }
  // Same id spelled differently.
  const auto s = Settings::parse("node_id = 1\nnode.1 = h:1\nnode.01 = h:2\ndata_dir = /tmp/x\n");
  try {
    ServerConfig::from_settings(s);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate node id"), std::string::npos);
  }
}

TEST(ServerConfig, BuildsEngineConfig) {
  EnvGuard env(nullptr);
  const auto c = ServerConfig::from_settings(Settings::parse(kThreeNodes));
  EXPECT_EQ(c.node_id, 2u);
  EXPECT_EQ(c.listen_address(), "127.0.0.1:7002");
  EXPECT_EQ(c.engine.members, (std::vector<NodeId>{1, 2, 3}));
  EXPECT_EQ(c.engine.partitions, 4u);
  EXPECT_EQ(c.engine.leader_of(0), 1u);
  EXPECT_EQ(c.engine.leader_of(3), 3u);
  EXPECT_EQ(c.engine.data_dir, "/tmp/from-file");
  EXPECT_EQ(c.engine.partition.cache.capacity_bytes, 1u << 20);
  EXPECT_EQ(c.engine.partition.flush_policy, FlushPolicy::OsBuffered);
  EXPECT_EQ(c.engine.heartbeat.count(), 25);
  EXPECT_FALSE(c.engine.pin_threads);
}

TEST(ServerConfig, DataDirPrecedence) {
  auto s = Settings::parse(kThreeNodes);
  {
    EnvGuard env("/tmp/from-env");
    EXPECT_EQ(ServerConfig::from_settings(s).engine.data_dir, "/tmp/from-env");
    s.set("data_dir", "/tmp/from-flag");
    EXPECT_EQ(ServerConfig::from_settings(s, true).engine.data_dir, "/tmp/from-flag");
  }
  EnvGuard env(nullptr);
  EXPECT_EQ(ServerConfig::from_settings(s).engine.data_dir, "/tmp/from-flag");
}

TEST(ServerConfig, RejectsInvalidConfigs) {
  EnvGuard env(nullptr);
  auto base = Settings::parse(kThreeNodes);
  auto with = [&](const std::string& k, const std::string& v) {
    auto s = base;
    s.set(k, v);
    return s;
  };
  EXPECT_THROW(ServerConfig::from_settings(with("node_id", "9")), InvalidArgument);
  EXPECT_THROW(ServerConfig::from_settings(with("leader.0", "7")), InvalidArgument);
  EXPECT_THROW(ServerConfig::from_settings(with("flush_policy", "sometimes")), InvalidArgument);
  EXPECT_THROW(ServerConfig::from_settings(with("node.4", "no-port")), InvalidArgument);
  EXPECT_THROW(ServerConfig::from_settings(with("partitions", "0")), InvalidArgument);
  EXPECT_THROW(ServerConfig::from_settings(Settings::parse("node.1 = h:1\ndata_dir = x\n")), InvalidArgument);
  EXPECT_THROW(ServerConfig::from_settings(with("data_dir", "")), InvalidArgument);
}

TEST(Address, Parses) {
  EXPECT_EQ(parse_address("localhost:80"), (std::pair<std::string, std::uint16_t>{"localhost", 80}));
  EXPECT_THROW(parse_address("localhost"), InvalidArgument);
  EXPECT_THROW(parse_address("h:0"), InvalidArgument);
  EXPECT_THROW(parse_address("h:70000"), InvalidArgument);
  EXPECT_THROW(parse_address(":80"), InvalidArgument);
}

}  // namespace
}  // namespace logstore

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logstore/engine.hpp"

namespace logstore {

/// Line-oriented `key = value` settings. '#' starts a comment line; blank
/// lines are skipped; a repeated key is an error.
class Settings {
 public:
  static Settings parse(std::string_view text);
  static Settings load(const std::filesystem::path& file);

  /// Replaces (or adds) a value; used for command-line overrides.
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, std::string fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Entries whose key starts with prefix, with the prefix stripped.
  std::map<std::string, std::string> with_prefix(std::string_view prefix) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Splits "host:port"; throws InvalidArgument when malformed.
std::pair<std::string, std::uint16_t> parse_address(std::string_view addr);
FlushPolicy parse_flush_policy(std::string_view s);

/// One node's server settings.
///
///   node_id = 1
///   node.1 = 127.0.0.1:7001      # every member, self included
///   node.2 = 127.0.0.1:7002
///   partitions = 4
///   leader.0 = 1                 # default leader: lowest node id
///   data_dir = /var/lib/logstore
///   cache_bytes = 67108864       # per partition
///   flush_policy = group         # group | per_record | os_buffered
///   segment_bytes, checkpoint_every, queue_capacity, max_batch,
///   max_in_flight, heartbeat_ms, read_block_timeout_ms, status_timeout_ms,
///   pin_threads
struct ServerConfig {
  NodeId node_id = 1;
  std::map<NodeId, std::string> nodes;
  EngineConfig engine;

  /// Builds and validates. The LOGSTORE_DATA_DIR environment variable
  /// replaces data_dir unless data_dir was given as an override.
  static ServerConfig from_settings(const Settings& s, bool data_dir_overridden = false);
  const std::string& listen_address() const { return nodes.at(node_id); }
};

}  // namespace logstore

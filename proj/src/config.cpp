#include "logstore/config.hpp"

#include <charconv>
#include <cstdlib>

#include "logstore/file.hpp"

namespace logstore {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T out{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw InvalidArgument("setting " + std::string(key) + ": not a number: '" + std::string(text) + "'");
  }
  return out;
}

}  // namespace

Settings Settings::parse(std::string_view text) {
  Settings s;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = std::string(trim(line.substr(0, eq)));
    auto value = line.substr(eq + 1);
    if (auto hash = value.find(" #"); hash != std::string_view::npos) value = value.substr(0, hash);
    if (key.empty()) throw InvalidArgument("line " + std::to_string(line_no) + ": empty key");
    if (!s.values_.emplace(key, std::string(trim(value))).second) {
      if (key.starts_with("node.")) throw InvalidArgument("duplicate node id " + key.substr(5));
      throw InvalidArgument("line " + std::to_string(line_no) + ": duplicate key " + key);
    }
  }
  return s;
}

Settings Settings::load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw InvalidArgument("config file not found: " + file.string());
  return parse(read_file(file));
}

std::optional<std::string> Settings::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  return std::nullopt;
}

std::string Settings::get_or(const std::string& key, std::string fallback) const {
  return get(key).value_or(std::move(fallback));
}

std::uint64_t Settings::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

double Settings::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) throw InvalidArgument("setting " + key + ": not a number");
  return d;
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw InvalidArgument("setting " + key + ": expected a boolean");
}

std::map<std::string, std::string> Settings::with_prefix(std::string_view prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.starts_with(prefix)) out.emplace(k.substr(prefix.size()), v);
  }
  return out;
}

std::pair<std::string, std::uint16_t> parse_address(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw InvalidArgument("address must be host:port, got '" + std::string(addr) + "'");
  }
  const auto port = parse_number<std::uint32_t>("port", addr.substr(colon + 1));
  if (port == 0 || port > 65535) throw InvalidArgument("port out of range in '" + std::string(addr) + "'");
  return {std::string(addr.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

FlushPolicy parse_flush_policy(std::string_view s) {
  if (s == "group") return FlushPolicy::Group;
  if (s == "per_record") return FlushPolicy::PerRecord;
  if (s == "os_buffered") return FlushPolicy::OsBuffered;
  throw InvalidArgument("unknown flush_policy '" + std::string(s) + "'");
}

ServerConfig ServerConfig::from_settings(const Settings& s, bool data_dir_overridden) {
  ServerConfig c;
  if (!s.has("node_id")) throw InvalidArgument("node_id is required");
  c.node_id = static_cast<NodeId>(s.get_u64("node_id", 0));
  for (const auto& [id, addr] : s.with_prefix("node.")) {
    const auto n = parse_number<NodeId>("node." + id, id);
    parse_address(addr);
    if (!c.nodes.emplace(n, addr).second) throw InvalidArgument("duplicate node id " + std::to_string(n));
  }
  if (c.nodes.empty()) throw InvalidArgument("no node.<id> = host:port entries");
  if (!c.nodes.contains(c.node_id)) {
    throw InvalidArgument("node_id " + std::to_string(c.node_id) + " has no node." + std::to_string(c.node_id) +
                          " address");
  }

  auto& e = c.engine;
  e.node_id = c.node_id;
  e.members.clear();
  for (const auto& [id, addr] : c.nodes) e.members.push_back(id);
  e.partitions = static_cast<std::uint32_t>(s.get_u64("partitions", 1));
  for (const auto& [p, n] : s.with_prefix("leader.")) {
    e.leaders[parse_number<PartitionId>("leader." + p, p)] = parse_number<NodeId>("leader." + p, n);
  }
  std::string dir = s.get_or("data_dir", "");
  if (!data_dir_overridden) {
    if (const char* env = std::getenv("LOGSTORE_DATA_DIR"); env && *env) dir = env;
  }
  if (dir.empty()) throw InvalidArgument("data_dir is required (or set LOGSTORE_DATA_DIR)");
  e.data_dir = dir;
  e.partition.cache.capacity_bytes = s.get_u64("cache_bytes", e.partition.cache.capacity_bytes);
  e.partition.flush_policy = parse_flush_policy(s.get_or("flush_policy", "group"));
  e.partition.segment_bytes = s.get_u64("segment_bytes", e.partition.segment_bytes);
  e.partition.checkpoint_every = s.get_u64("checkpoint_every", e.partition.checkpoint_every);
  e.queue_capacity = s.get_u64("queue_capacity", e.queue_capacity);
  e.max_batch = s.get_u64("max_batch", e.max_batch);
  e.max_in_flight_records = s.get_u64("max_in_flight", e.max_in_flight_records);
  e.heartbeat = std::chrono::milliseconds(s.get_u64("heartbeat_ms", e.heartbeat.count()));
  e.read_block_timeout = std::chrono::milliseconds(s.get_u64("read_block_timeout_ms", e.read_block_timeout.count()));
  e.status_timeout = std::chrono::milliseconds(s.get_u64("status_timeout_ms", e.status_timeout.count()));
  e.pin_threads = s.get_bool("pin_threads", e.pin_threads);
  e.validate();
  return c;
}

}  // namespace logstore

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "logstore/partition.hpp"
#include "logstore/wire.hpp"

namespace logstore {

/// Client request. The frame type carries the operation; keys and values are
/// u32-length-prefixed byte strings.
///
///   common  [request_id u64 | has_view u8 | read_view u64 if has_view]
///   Get     [key]
///   Put     [key | value]
///   Delete  [key]
///   Range   [start | end | limit u32]
///   BatchGet[count u32 | key...]
///   Stats   [partition u32]   (kAllPartitions for every partition)
///   Promote [partition u32]
struct Request {
  std::uint64_t id = 0;
  MsgType op = MsgType::Get;
  std::string key;    // Get/Put/Delete key, Range start
  std::string value;  // Put value
  std::string end;    // Range end (exclusive)
  std::uint32_t limit = 0;
  std::vector<std::string> keys;  // BatchGet
  PartitionId partition = 0;      // Stats/Promote
  std::optional<Lsn> read_view;   // follower reads

  friend bool operator==(const Request&, const Request&) = default;
};

inline constexpr PartitionId kAllPartitions = 0xFFFFFFFFu;

enum class Status : std::uint8_t {
  Ok = 0,
  NotFound = 1,
  NotLeader = 2,
  Backpressure = 3,
  Rejected = 4,  // read view ahead of the replica, or block timeout; retry later
  Error = 5,
  InvalidArgument = 6,
};

std::string_view to_string(Status s);

enum class Role : std::uint8_t { Leader = 0, Follower = 1 };

std::string_view to_string(Role r);

struct PartitionStats {
  PartitionId partition = 0;
  Role role = Role::Leader;
  Epoch epoch = 0;
  NodeId leader = 0;
  Lsn flushed = kNoLsn;
  Lsn potential_commit = kNoLsn;
  Lsn replayed = kNoLsn;
  Lsn last_lsn = kNoLsn;
  std::uint64_t live_keys = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t log_reads = 0;
  std::uint64_t replay_reads = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t queue_depth = 0;

  friend bool operator==(const PartitionStats&, const PartitionStats&) = default;
};

struct Response {
  std::uint64_t id = 0;
  Status status = Status::Ok;
  std::string message;
  NodeId leader_hint = 0;
  Lsn lsn = kNoLsn;  // LSN assigned to a Put/Delete
  bool existed = false;
  std::optional<std::string> value;
  std::vector<KeyValue> pairs;
  BatchResult batch;
  std::vector<PartitionStats> stats;

  friend bool operator==(const Response&, const Response&) = default;
};

std::string encode_request(const Request& req);  // full frame
/// Throws InvalidArgument on malformed payloads or non-request types.
Request decode_request(MsgType type, std::string_view payload);
std::string encode_response(const Response& resp);  // full frame
Response decode_response(std::string_view payload);

}  // namespace logstore

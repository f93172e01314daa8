#pragma once

#include <cstdint>
#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>

namespace logstore {

/// Per-partition log sequence number. Strictly increasing from 1; 0 means "none".
using Lsn = std::uint64_t;
inline constexpr Lsn kNoLsn = 0;

using PartitionId = std::uint32_t;
using NodeId = std::uint32_t;
using SegmentId = std::uint32_t;
using Epoch = std::uint64_t;

enum class RecordKind : std::uint8_t { Put = 1, Delete = 2 };

/// Location of a record header inside a partition's log.
struct LogPosition {
  SegmentId segment_id = 0;
  std::uint64_t offset = 0;

  friend constexpr auto operator<=>(const LogPosition&, const LogPosition&) = default;
};

// Error hierarchy. Callers that care about a specific failure catch the
// concrete type; everything else is a logstore::Error.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CorruptRecord : public Error {
 public:
  using Error::Error;
};

class InvalidPosition : public Error {
 public:
  using Error::Error;
};

class CorruptSnapshot : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// The partition hit an IO failure earlier and only serves reads now.
class PartitionFaulted : public Error {
 public:
  using Error::Error;
};

class NotLeader : public Error {
 public:
  NotLeader(std::string what, NodeId leader_hint)
      : Error(std::move(what)), leader_hint_(leader_hint) {}
  NodeId leader_hint() const noexcept { return leader_hint_; }

 private:
  NodeId leader_hint_;
};

/// Bounded queue is full; the client should retry.
class Backpressure : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace logstore

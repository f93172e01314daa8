#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logstore/log_record.hpp"
#include "logstore/types.hpp"

namespace logstore {

/// Frame: [u32 payload_length | u8 type | payload]. The length counts payload
/// bytes only, not the five header bytes.
inline constexpr std::size_t kFrameHeaderSize = 5;
inline constexpr std::uint32_t kMaxFramePayload = 256u << 20;

enum class MsgType : std::uint8_t {
  AppendEntries = 1,
  Ack = 2,
  Nack = 3,
  Hello = 4,        // first frame on a peer connection: [node_id u32]
  StatusQuery = 5,  // [partition u32]
  StatusReply = 6,  // [partition u32 | epoch u64 | flushed u64 | potential_commit u64]

  // Client requests; the response type is ClientResponse.
  Get = 16,
  Put = 17,
  Delete = 18,
  Range = 19,
  BatchGet = 20,
  Stats = 21,
  Promote = 22,
  ClientResponse = 0x80,
};

bool is_known_type(std::uint8_t t);

struct Frame {
  MsgType type;
  std::string payload;
};

std::string encode_frame(MsgType type, std::string_view payload);

/// Incremental frame splitter for a byte stream.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }
  /// Next complete frame, if buffered. Throws InvalidArgument on an unknown
  /// type or an oversized length; the stream is unusable afterwards.
  std::optional<Frame> next();
  std::size_t buffered() const noexcept { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

struct AppendEntries {
  PartitionId partition = 0;
  Epoch epoch = 0;
  Lsn leader_commit = kNoLsn;
  std::vector<LogRecord> records;  // contiguous LSNs; empty for a heartbeat

  friend bool operator==(const AppendEntries&, const AppendEntries&) = default;
};

/// Ack and Nack share this payload; a Nack carries the follower's flushed LSN
/// so the leader can resend from the gap.
struct AckMessage {
  PartitionId partition = 0;
  Epoch epoch = 0;
  NodeId node = 0;
  Lsn last_flushed = kNoLsn;

  friend bool operator==(const AckMessage&, const AckMessage&) = default;
};

struct StatusReply {
  PartitionId partition = 0;
  Epoch epoch = 0;
  Lsn flushed = kNoLsn;
  Lsn potential_commit = kNoLsn;

  friend bool operator==(const StatusReply&, const StatusReply&) = default;
};

std::string encode_append_entries(const AppendEntries& msg);  // full frame
AppendEntries decode_append_entries(std::string_view payload);
std::string encode_ack(const AckMessage& ack, bool nack = false);  // full frame
AckMessage decode_ack(std::string_view payload);
std::string encode_hello(NodeId node);
NodeId decode_hello(std::string_view payload);
std::string encode_status_query(PartitionId p);
PartitionId decode_status_query(std::string_view payload);
std::string encode_status_reply(const StatusReply& s);
StatusReply decode_status_reply(std::string_view payload);

}  // namespace logstore

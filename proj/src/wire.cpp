#include "logstore/wire.hpp"

#include "logstore/bytes.hpp"

namespace logstore {

bool is_known_type(std::uint8_t t) {
  return (t >= 1 && t <= 6) || (t >= 16 && t <= 22) || t == 0x80;
}

std::string encode_frame(MsgType type, std::string_view payload) {
  if (payload.size() > kMaxFramePayload) throw InvalidArgument("frame payload too large");
  std::string out;
  out.reserve(kFrameHeaderSize + payload.size());
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  put_u8(out, static_cast<std::uint8_t>(type));
  out.append(payload);
  return out;
}

std::optional<Frame> FrameDecoder::next() {
  if (buffered() < kFrameHeaderSize) return std::nullopt;
  const char* p = buf_.data() + pos_;
  const auto len = load_u32(p);
  const auto type = static_cast<std::uint8_t>(p[4]);
  if (len > kMaxFramePayload) throw InvalidArgument("frame length " + std::to_string(len) + " too large");
  if (!is_known_type(type)) throw InvalidArgument("unknown frame type " + std::to_string(type));
  if (buffered() < kFrameHeaderSize + len) return std::nullopt;
  Frame f{static_cast<MsgType>(type), buf_.substr(pos_ + kFrameHeaderSize, len)};
  pos_ += kFrameHeaderSize + len;
  if (pos_ > (1u << 20) && pos_ * 2 > buf_.size()) {
    buf_.erase(0, pos_);
    pos_ = 0;
  }
  return f;
}

std::string encode_append_entries(const AppendEntries& msg) {
  std::size_t size = 4 + 8 + 8 + 4;
  for (const auto& r : msg.records) size += r.encoded_size();
  std::string payload;
  payload.reserve(size);
  put_u32(payload, msg.partition);
  put_u64(payload, msg.epoch);
  put_u64(payload, msg.leader_commit);
  put_u32(payload, static_cast<std::uint32_t>(msg.records.size()));
  for (const auto& r : msg.records) encode_record(r, payload);
  return encode_frame(MsgType::AppendEntries, payload);
}

AppendEntries decode_append_entries(std::string_view payload) {
  ByteReader in(payload);
  AppendEntries msg;
  msg.partition = in.u32();
  msg.epoch = in.u64();
  msg.leader_commit = in.u64();
  const auto count = in.u32();
  auto rest = payload.substr(in.position());
  // Each record needs at least a header, which bounds the reservation.
  if (count > rest.size() / LogRecord::kHeaderSize) throw InvalidArgument("record count exceeds payload");
  msg.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto r = decode_record(rest);
    if (r.status != DecodeStatus::Ok) throw InvalidArgument("bad record in AppendEntries");
    if (!msg.records.empty() && r.record.lsn != msg.records.back().lsn + 1) {
      throw InvalidArgument("AppendEntries records are not contiguous");
    }
    msg.records.push_back(std::move(r.record));
    rest.remove_prefix(r.consumed);
  }
  if (!rest.empty()) throw InvalidArgument("trailing bytes after AppendEntries");
  return msg;
}

std::string encode_ack(const AckMessage& ack, bool nack) {
  std::string payload;
  put_u32(payload, ack.partition);
  put_u64(payload, ack.epoch);
  put_u32(payload, ack.node);
  put_u64(payload, ack.last_flushed);
  return encode_frame(nack ? MsgType::Nack : MsgType::Ack, payload);
}

AckMessage decode_ack(std::string_view payload) {
  ByteReader in(payload);
  AckMessage a;
  a.partition = in.u32();
  a.epoch = in.u64();
  a.node = in.u32();
  a.last_flushed = in.u64();
  if (!in.done()) throw InvalidArgument("trailing bytes after Ack");
  return a;
}

std::string encode_hello(NodeId node) {
  std::string payload;
  put_u32(payload, node);
  return encode_frame(MsgType::Hello, payload);
}

NodeId decode_hello(std::string_view payload) {
  ByteReader in(payload);
  auto id = in.u32();
  if (!in.done()) throw InvalidArgument("trailing bytes after Hello");
  return id;
}

std::string encode_status_query(PartitionId p) {
  std::string payload;
  put_u32(payload, p);
  return encode_frame(MsgType::StatusQuery, payload);
}

PartitionId decode_status_query(std::string_view payload) {
  ByteReader in(payload);
  auto p = in.u32();
  if (!in.done()) throw InvalidArgument("trailing bytes after StatusQuery");
  return p;
}

std::string encode_status_reply(const StatusReply& s) {
  std::string payload;
  put_u32(payload, s.partition);
  put_u64(payload, s.epoch);
  put_u64(payload, s.flushed);
  put_u64(payload, s.potential_commit);
  return encode_frame(MsgType::StatusReply, payload);
}

StatusReply decode_status_reply(std::string_view payload) {
  ByteReader in(payload);
  StatusReply s;
  s.partition = in.u32();
  s.epoch = in.u64();
  s.flushed = in.u64();
  s.potential_commit = in.u64();
  if (!in.done()) throw InvalidArgument("trailing bytes after StatusReply");
  return s;
}

}  // namespace logstore

#include "logstore/protocol.hpp"

#include "logstore/bytes.hpp"

namespace logstore {

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Ok: return "Ok";
    case Status::NotFound: return "NotFound";
    case Status::NotLeader: return "NotLeader";
    case Status::Backpressure: return "Backpressure";
    case Status::Rejected: return "Rejected";
    case Status::Error: return "Error";
    case Status::InvalidArgument: return "InvalidArgument";
  }
  return "?";
}

std::string_view to_string(Role r) { return r == Role::Leader ? "leader" : "follower"; }

std::string encode_request(const Request& req) {
  std::string p;
  put_u64(p, req.id);
  put_u8(p, req.read_view ? 1 : 0);
  if (req.read_view) put_u64(p, *req.read_view);
  switch (req.op) {
    case MsgType::Get:
    case MsgType::Delete:
      put_bytes(p, req.key);
      break;
    case MsgType::Put:
      put_bytes(p, req.key);
      put_bytes(p, req.value);
      break;
    case MsgType::Range:
      put_bytes(p, req.key);
      put_bytes(p, req.end);
      put_u32(p, req.limit);
      break;
    case MsgType::BatchGet:
      put_u32(p, static_cast<std::uint32_t>(req.keys.size()));
      for (const auto& k : req.keys) put_bytes(p, k);
      break;
    case MsgType::Stats:
    case MsgType::Promote:
      put_u32(p, req.partition);
      break;
    default:
      throw InvalidArgument("not a client request type");
  }
  return encode_frame(req.op, p);
}

Request decode_request(MsgType type, std::string_view payload) {
  ByteReader in(payload);
  Request req;
  req.op = type;
  req.id = in.u64();
  switch (in.u8()) {
    case 0: break;
    case 1: req.read_view = in.u64(); break;
    default: throw InvalidArgument("bad read-view flag");
  }
  switch (type) {
    case MsgType::Get:
    case MsgType::Delete:
      req.key = in.bytes();
      break;
    case MsgType::Put:
      req.key = in.bytes();
      req.value = in.bytes();
      break;
    case MsgType::Range:
      req.key = in.bytes();
      req.end = in.bytes();
      req.limit = in.u32();
      break;
    case MsgType::BatchGet: {
      const auto n = in.u32();
      if (n > in.remaining() / 4) throw InvalidArgument("batch count exceeds payload");
      req.keys.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) req.keys.push_back(in.bytes());
      break;
    }
    case MsgType::Stats:
    case MsgType::Promote:
      req.partition = in.u32();
      break;
    default:
      throw InvalidArgument("not a client request type");
  }
  if (!in.done()) throw InvalidArgument("trailing bytes after request");
  return req;
}

namespace {

void put_stats(std::string& p, const PartitionStats& s) {
  put_u32(p, s.partition);
  put_u8(p, static_cast<std::uint8_t>(s.role));
  put_u64(p, s.epoch);
  put_u32(p, s.leader);
  for (auto v : {s.flushed, s.potential_commit, s.replayed, s.last_lsn, s.live_keys, s.cache_hits,
                 s.cache_misses, s.log_reads, s.replay_reads, s.bytes_written, s.queue_depth}) {
    put_u64(p, v);
  }
}

PartitionStats read_stats(ByteReader& in) {
  PartitionStats s;
  s.partition = in.u32();
  const auto role = in.u8();
  if (role > 1) throw InvalidArgument("bad role");
  s.role = static_cast<Role>(role);
  s.epoch = in.u64();
  s.leader = in.u32();
  for (auto* v : {&s.flushed, &s.potential_commit, &s.replayed, &s.last_lsn, &s.live_keys,
                  &s.cache_hits, &s.cache_misses, &s.log_reads, &s.replay_reads, &s.bytes_written,
                  &s.queue_depth}) {
    *v = in.u64();
  }
  return s;
}

}  // namespace

std::string encode_response(const Response& r) {
  std::string p;
  put_u64(p, r.id);
  put_u8(p, static_cast<std::uint8_t>(r.status));
  put_bytes(p, r.message);
  put_u32(p, r.leader_hint);
  put_u64(p, r.lsn);
  put_u8(p, r.existed ? 1 : 0);
  put_u8(p, r.value ? 1 : 0);
  if (r.value) put_bytes(p, *r.value);
  put_u32(p, static_cast<std::uint32_t>(r.pairs.size()));
  for (const auto& [k, v] : r.pairs) {
    put_bytes(p, k);
    put_bytes(p, v);
  }
  put_u32(p, static_cast<std::uint32_t>(r.batch.size()));
  for (const auto& [k, v] : r.batch) {
    put_bytes(p, k);
    put_u8(p, v ? 1 : 0);
    if (v) put_bytes(p, *v);
  }
  put_u32(p, static_cast<std::uint32_t>(r.stats.size()));
  for (const auto& s : r.stats) put_stats(p, s);
  return encode_frame(MsgType::ClientResponse, p);
}

Response decode_response(std::string_view payload) {
  ByteReader in(payload);
  Response r;
  r.id = in.u64();
  const auto status = in.u8();
  if (status > static_cast<std::uint8_t>(Status::InvalidArgument)) throw InvalidArgument("bad status");
  r.status = static_cast<Status>(status);
  r.message = in.bytes();
  r.leader_hint = in.u32();
  r.lsn = in.u64();
  r.existed = in.u8() != 0;
  if (in.u8() != 0) r.value = in.bytes();
  auto count = [&](std::size_t min_entry) {
    const auto n = in.u32();
    if (n > in.remaining() / min_entry) throw InvalidArgument("count exceeds payload");
    return n;
  };
  for (auto n = count(8); n > 0; --n) {
    auto k = in.bytes();
    r.pairs.emplace_back(std::move(k), in.bytes());
  }
  for (auto n = count(5); n > 0; --n) {
    auto k = in.bytes();
    std::optional<std::string> v;
    if (in.u8() != 0) v = in.bytes();
    r.batch.emplace_back(std::move(k), std::move(v));
  }
  for (auto n = count(4 + 1 + 8 + 4 + 11 * 8); n > 0; --n) r.stats.push_back(read_stats(in));
  if (!in.done()) throw InvalidArgument("trailing bytes after response");
  return r;
}

}  // namespace logstore

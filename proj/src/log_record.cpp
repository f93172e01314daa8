#include "logstore/log_record.hpp"

#include <zlib.h>

#include <algorithm>

#include "logstore/bytes.hpp"

namespace logstore {

std::uint32_t crc32(std::string_view data, std::uint32_t seed) {
  // zlib takes uInt lengths; chunk to stay portable for >4 GiB inputs.
  uLong crc = seed;
  const auto* p = reinterpret_cast<const Bytef*>(data.data());
  std::size_t left = data.size();
  while (left > 0) {
    auto n = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, n);
    p += n;
    left -= n;
  }
  return static_cast<std::uint32_t>(crc);
}

LogRecord make_put(Lsn lsn, std::string key, std::string value) {
  return LogRecord{lsn, RecordKind::Put, std::move(key), std::move(value)};
}

LogRecord make_delete(Lsn lsn, std::string key) {
  return LogRecord{lsn, RecordKind::Delete, std::move(key), {}};
}

namespace {

std::uint32_t record_crc(std::string_view header_prefix, std::string_view key,
                         std::string_view value) {
  auto crc = crc32(header_prefix);
  crc = crc32(key, crc);
  return crc32(value, crc);
}

bool valid_kind(std::uint8_t k) {
  return k == static_cast<std::uint8_t>(RecordKind::Put) ||
         k == static_cast<std::uint8_t>(RecordKind::Delete);
}

}  // namespace

void encode_record(const LogRecord& rec, std::string& out) {
  const auto start = out.size();
  put_u64(out, rec.lsn);
  put_u8(out, static_cast<std::uint8_t>(rec.kind));
  put_u32(out, static_cast<std::uint32_t>(rec.key.size()));
  put_u32(out, static_cast<std::uint32_t>(rec.value.size()));
  auto crc = record_crc(std::string_view(out).substr(start, 17), rec.key, rec.value);
  put_u32(out, crc);
  out.append(rec.key);
  out.append(rec.value);
}

std::string encode_record(const LogRecord& rec) {
  std::string out;
  out.reserve(rec.encoded_size());
  encode_record(rec, out);
  return out;
}

std::optional<RecordHeader> decode_header(std::string_view buf) {
  if (buf.size() < LogRecord::kHeaderSize) return std::nullopt;
  const char* p = buf.data();
  auto kind = static_cast<std::uint8_t>(p[8]);
  if (!valid_kind(kind)) return std::nullopt;
  RecordHeader h{load_u64(p), static_cast<RecordKind>(kind), load_u32(p + 9), load_u32(p + 13),
                 load_u32(p + 17)};
  if (h.key_len > kMaxFieldSize || h.value_len > kMaxFieldSize) return std::nullopt;
  return h;
}

DecodeResult decode_record(std::string_view buf) {
  if (buf.size() < LogRecord::kHeaderSize) return {DecodeStatus::Truncated, {}, 0};
  auto h = decode_header(buf);
  if (!h) return {DecodeStatus::Corrupt, {}, 0};
  if (buf.size() < h->total_size()) return {DecodeStatus::Truncated, {}, 0};

  auto key = buf.substr(LogRecord::kHeaderSize, h->key_len);
  auto value = buf.substr(LogRecord::kHeaderSize + h->key_len, h->value_len);
  if (record_crc(buf.substr(0, 17), key, value) != h->crc) {
    return {DecodeStatus::Corrupt, {}, 0};
  }
  if (h->kind == RecordKind::Delete && !value.empty()) return {DecodeStatus::Corrupt, {}, 0};
  return {DecodeStatus::Ok, LogRecord{h->lsn, h->kind, std::string(key), std::string(value)},
          h->total_size()};
}

}  // namespace logstore

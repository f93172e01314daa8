#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "logstore/types.hpp"

namespace logstore {

/// One durable unit of the log. The log is the only persistent copy of data.
///
/// On disk (little-endian):
///   [lsn u64 | kind u8 | key_len u32 | val_len u32 | crc32 u32] key value
/// The CRC covers the first four header fields, the key and the value.
struct LogRecord {
  Lsn lsn = kNoLsn;
  RecordKind kind = RecordKind::Put;
  std::string key;
  std::string value;

  static constexpr std::size_t kHeaderSize = 8 + 1 + 4 + 4 + 4;

  std::size_t encoded_size() const noexcept { return kHeaderSize + key.size() + value.size(); }

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

LogRecord make_put(Lsn lsn, std::string key, std::string value);
LogRecord make_delete(Lsn lsn, std::string key);

void encode_record(const LogRecord& rec, std::string& out);
std::string encode_record(const LogRecord& rec);

struct RecordHeader {
  Lsn lsn;
  RecordKind kind;
  std::uint32_t key_len;
  std::uint32_t value_len;
  std::uint32_t crc;

  std::size_t total_size() const noexcept {
    return LogRecord::kHeaderSize + key_len + value_len;
  }
};

/// Parses a header. Returns nullopt when fewer than kHeaderSize bytes are
/// available or the kind byte is invalid.
std::optional<RecordHeader> decode_header(std::string_view buf);

enum class DecodeStatus { Ok, Truncated, Corrupt };

struct DecodeResult {
  DecodeStatus status;
  LogRecord record;
  std::size_t consumed = 0;
};

/// Decodes one record from the front of buf, verifying the checksum.
DecodeResult decode_record(std::string_view buf);

/// Size of the maximum key or value accepted by append (sanity bound on
/// header fields read back from disk).
inline constexpr std::uint32_t kMaxFieldSize = 64u << 20;

}  // namespace logstore

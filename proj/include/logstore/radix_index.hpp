#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logstore/types.hpp"

namespace logstore {

/// Leaf payload of the index: where the newest record of a key lives.
struct IndexEntry {
  std::string key;
  LogPosition position;
  Lsn version_lsn = kNoLsn;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

enum class NodeKind : std::uint8_t { Node4, Node16, Node48, Node256, Leaf };

std::string_view to_string(NodeKind k);

namespace detail {
struct ArtNode;
struct ArtNodeDeleter {
  void operator()(ArtNode* n) const noexcept;
};
using ArtNodePtr = std::unique_ptr<ArtNode, ArtNodeDeleter>;
}  // namespace detail

/// Adaptive radix tree from raw key bytes to log positions.
///
/// Keys compare as unsigned byte strings. Inner nodes store their full
/// compressed prefix (pessimistic path compression); a key that ends inside
/// the tree is held in the inner node's terminal slot, so keys may be
/// prefixes of one another.
///
/// Single-writer: mutations and reads happen on the owning partition's
/// executor thread. Snapshots are taken on that thread too (the partition
/// pauses for the duration), which is how the frozen-view requirement of
/// snapshot writing is met.
class RadixIndex {
 public:
  RadixIndex();
  ~RadixIndex();
  RadixIndex(RadixIndex&&) noexcept;
  RadixIndex& operator=(RadixIndex&&) noexcept;

  struct PutResult {
    std::optional<IndexEntry> previous;  // displaced entry, or the kept one when stale
    bool applied = false;
  };

  /// Inserts or replaces; a version_lsn not newer than the stored one is a
  /// no-op that returns the stored entry.
  PutResult put(std::string_view key, LogPosition position, Lsn version_lsn);
  std::optional<IndexEntry> get(std::string_view key) const;
  std::optional<IndexEntry> remove(std::string_view key);

  /// Moves key to a new position only if its version is exactly version_lsn.
  bool relocate(std::string_view key, LogPosition position, Lsn version_lsn);

  /// Entries with start <= key < end in ascending order, at most limit.
  std::vector<IndexEntry> range(std::string_view start, std::string_view end,
                                std::size_t limit = SIZE_MAX) const;

  /// Ordered visit of entries with key >= start (and < end when given).
  /// Returning false from the visitor stops the walk.
  void visit(std::string_view start, std::optional<std::string_view> end,
             const std::function<bool(const IndexEntry&)>& fn) const;
  void for_each(const std::function<bool(const IndexEntry&)>& fn) const { visit({}, std::nullopt, fn); }

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  Lsn max_version() const;
  void clear();

  /// Debug introspection: kind of the inner node whose children branch right
  /// after key_prefix, if such a node exists.
  std::optional<NodeKind> node_kind_at(std::string_view key_prefix) const;

 private:
  detail::ArtNodePtr root_;
  std::size_t size_ = 0;
};

struct SnapshotInfo {
  std::uint64_t entry_count = 0;
  Lsn last_included_lsn = kNoLsn;

  friend bool operator==(const SnapshotInfo&, const SnapshotInfo&) = default;
};

/// Serializes the index as ascending (key, segment_id, offset, version_lsn)
/// records followed by the trailer {entry_count u64, last_included_lsn u64,
/// crc32 u32}. last_included_lsn is the largest version in the snapshot.
SnapshotInfo write_snapshot(const RadixIndex& index, std::string& out);

struct LoadedSnapshot {
  RadixIndex index;
  SnapshotInfo info;
};

/// Throws CorruptSnapshot on checksum, framing or ordering errors.
LoadedSnapshot load_snapshot(std::string_view data);

}  // namespace logstore

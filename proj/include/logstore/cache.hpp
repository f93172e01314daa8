#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "logstore/types.hpp"

namespace logstore {

struct CachedValue {
  std::string value;
  Lsn version_lsn = kNoLsn;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  double hit_ratio = 0.0;
  std::uint64_t resident_bytes = 0;
  std::uint64_t hot_count = 0;
  std::uint64_t cooling_count = 0;
};

/// Fixed per-entry cost added to key + value bytes when accounting capacity.
inline constexpr std::uint64_t kCacheEntryOverhead = 64;

inline std::uint64_t cache_entry_bytes(std::string_view key, std::string_view value) {
  return key.size() + value.size() + kCacheEntryOverhead;
}

/// Record-granularity read cache. Implementations are single-threaded
/// (owned by one partition executor); stats() may be called from any thread.
class ReadCache {
 public:
  virtual ~ReadCache() = default;

  virtual std::optional<CachedValue> get(std::string_view key) = 0;
  /// Inserts or refreshes key if version_lsn is not older than the cached
  /// one. Returns the keys evicted to make room.
  virtual std::vector<std::string> admit(std::string_view key, std::string_view value,
                                         Lsn version_lsn) = 0;
  virtual bool invalidate(std::string_view key) = 0;
  virtual bool contains(std::string_view key) const = 0;
  virtual CacheStats stats() const = 0;
  virtual std::string_view name() const = 0;
};

struct CacheConfig {
  std::uint64_t capacity_bytes = 64ull << 20;
  double cooling_fraction = 0.10;
  std::uint64_t seed = 0x5EEDC0DE;
};

enum class CacheRegion { Hot, Cooling };

/// Second-chance cache with a hot region and a FIFO cooling region.
///
/// Reads of hot entries touch nothing but the hit counter. When an admit
/// pushes the cache over capacity, a uniformly random hot entry is demoted to
/// the tail of the cooling FIFO; the head of the FIFO is evicted once cooling
/// holds more than cooling_fraction of the capacity. A cooling entry that is
/// read goes back to the hot region.
class TwoStageCache final : public ReadCache {
 public:
  explicit TwoStageCache(CacheConfig config);

  std::optional<CachedValue> get(std::string_view key) override;
  std::vector<std::string> admit(std::string_view key, std::string_view value,
                                 Lsn version_lsn) override;
  bool invalidate(std::string_view key) override;
  bool contains(std::string_view key) const override { return where_.contains(std::string(key)); }
  CacheStats stats() const override;
  std::string_view name() const override { return "TwoStage"; }

  std::optional<CacheRegion> region_of(std::string_view key) const;
  /// Moves a hot entry to the cooling tail (test hook for the promotion path).
  bool demote(std::string_view key);

  // Structural views for tests.
  std::vector<std::string> hot_keys() const;
  std::vector<std::string> cooling_keys() const;
  std::uint64_t cooling_bytes() const noexcept { return cooling_bytes_; }
  const CacheConfig& config() const noexcept { return config_; }

 private:
  struct Entry {
    std::string key;
    std::string value;
    Lsn version = kNoLsn;
    std::uint64_t bytes = 0;
  };
  struct Location {
    CacheRegion region;
    std::size_t hot_index = 0;
    std::list<Entry>::iterator cooling_it;
  };

  Entry take(const std::string& key);
  void push_hot(Entry e);
  void push_cooling(Entry e);
  void demote_random();
  std::string evict_head();

  CacheConfig config_;
  std::uint64_t cooling_capacity_;
  std::vector<Entry> hot_;
  std::list<Entry> cooling_;
  std::unordered_map<std::string, Location> where_;
  std::uint64_t cooling_bytes_ = 0;
  std::mt19937_64 rng_;

  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> resident_bytes_{0};
  std::atomic<std::uint64_t> hot_count_{0};
  std::atomic<std::uint64_t> cooling_count_{0};
};

/// Baseline policies for the hit-ratio comparison. Not used on the serving path.
class LruCache final : public ReadCache {
 public:
  explicit LruCache(std::uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

  std::optional<CachedValue> get(std::string_view key) override;
  std::vector<std::string> admit(std::string_view key, std::string_view value,
                                 Lsn version_lsn) override;
  bool invalidate(std::string_view key) override;
  bool contains(std::string_view key) const override { return map_.contains(std::string(key)); }
  CacheStats stats() const override;
  std::string_view name() const override { return "LRU"; }

 private:
  struct Entry {
    std::string key;
    std::string value;
    Lsn version;
    std::uint64_t bytes;
  };
  std::uint64_t capacity_;
  std::uint64_t resident_ = 0;
  std::list<Entry> order_;  // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> map_;
  std::uint64_t hits_ = 0, misses_ = 0;
};

class FifoCache final : public ReadCache {
 public:
  explicit FifoCache(std::uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

  std::optional<CachedValue> get(std::string_view key) override;
  std::vector<std::string> admit(std::string_view key, std::string_view value,
                                 Lsn version_lsn) override;
  bool invalidate(std::string_view key) override;
  bool contains(std::string_view key) const override { return map_.contains(std::string(key)); }
  CacheStats stats() const override;
  std::string_view name() const override { return "FIFO"; }

 private:
  struct Entry {
    std::string key;
    std::string value;
    Lsn version;
    std::uint64_t bytes;
  };
  std::uint64_t capacity_;
  std::uint64_t resident_ = 0;
  std::list<Entry> queue_;  // front = oldest
  std::unordered_map<std::string, std::list<Entry>::iterator> map_;
  std::uint64_t hits_ = 0, misses_ = 0;
};

}  // namespace logstore

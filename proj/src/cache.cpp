#include "logstore/cache.hpp"

#include <algorithm>
#include <stdexcept>

namespace logstore {

namespace {

double ratio(std::uint64_t hits, std::uint64_t misses) {
  const auto total = hits + misses;
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

// ---------------------------------------------------------------------------
// TwoStageCache

TwoStageCache::TwoStageCache(CacheConfig config)
    : config_(config),
      cooling_capacity_(static_cast<std::uint64_t>(static_cast<double>(config.capacity_bytes) *
                                                   config.cooling_fraction)),
      rng_(config.seed) {
  if (!(config.cooling_fraction > 0.0 && config.cooling_fraction < 1.0)) {
    throw InvalidArgument("cooling_fraction must be in (0, 1)");
  }
}

std::optional<CachedValue> TwoStageCache::get(std::string_view key) {
  auto it = where_.find(std::string(key));
  if (it == where_.end()) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return std::nullopt;
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  if (it->second.region == CacheRegion::Hot) {
    const auto& e = hot_[it->second.hot_index];
    return CachedValue{e.value, e.version};
  }
  // Second chance: touching a cooling entry makes it hot again.
  auto e = take(it->first);
  CachedValue out{e.value, e.version};
  push_hot(std::move(e));
  return out;
}

std::vector<std::string> TwoStageCache::admit(std::string_view key, std::string_view value,
                                              Lsn version_lsn) {
  std::vector<std::string> evicted;
  const std::string k(key);
  if (auto it = where_.find(k); it != where_.end()) {
    const auto existing = it->second.region == CacheRegion::Hot
                              ? hot_[it->second.hot_index].version
                              : it->second.cooling_it->version;
    if (version_lsn < existing) return evicted;
    take(k);
  }
  const auto bytes = cache_entry_bytes(key, value);
  if (bytes > config_.capacity_bytes) {
    evicted.push_back(k);
    return evicted;
  }
  push_hot(Entry{k, std::string(value), version_lsn, bytes});

  while (resident_bytes_ > config_.capacity_bytes) {
    if (!hot_.empty()) demote_random();
    if (cooling_bytes_ > cooling_capacity_ || hot_.empty()) evicted.push_back(evict_head());
  }
  return evicted;
}

bool TwoStageCache::invalidate(std::string_view key) {
  const std::string k(key);
  if (!where_.contains(k)) return false;
  take(k);
  return true;
}

CacheStats TwoStageCache::stats() const {
  CacheStats s;
  s.hits = hits_.load(std::memory_order_relaxed);
  s.misses = misses_.load(std::memory_order_relaxed);
  s.hit_ratio = ratio(s.hits, s.misses);
  s.resident_bytes = resident_bytes_.load(std::memory_order_relaxed);
  s.hot_count = hot_count_.load(std::memory_order_relaxed);
  s.cooling_count = cooling_count_.load(std::memory_order_relaxed);
  return s;
}

std::optional<CacheRegion> TwoStageCache::region_of(std::string_view key) const {
  auto it = where_.find(std::string(key));
  if (it == where_.end()) return std::nullopt;
  return it->second.region;
}

bool TwoStageCache::demote(std::string_view key) {
  auto it = where_.find(std::string(key));
  if (it == where_.end() || it->second.region != CacheRegion::Hot) return false;
  push_cooling(take(it->first));
  return true;
}

std::vector<std::string> TwoStageCache::hot_keys() const {
  std::vector<std::string> out;
  for (const auto& e : hot_) out.push_back(e.key);
  return out;
}

std::vector<std::string> TwoStageCache::cooling_keys() const {
  std::vector<std::string> out;
  for (const auto& e : cooling_) out.push_back(e.key);
  return out;
}

TwoStageCache::Entry TwoStageCache::take(const std::string& key) {
  auto node = where_.extract(key);
  auto loc = node.mapped();
  Entry e;
  if (loc.region == CacheRegion::Hot) {
    e = std::move(hot_[loc.hot_index]);
    if (loc.hot_index + 1 != hot_.size()) {
      hot_[loc.hot_index] = std::move(hot_.back());
      where_.at(hot_[loc.hot_index].key).hot_index = loc.hot_index;
    }
    hot_.pop_back();
    hot_count_.store(hot_.size(), std::memory_order_relaxed);
  } else {
    e = std::move(*loc.cooling_it);
    cooling_.erase(loc.cooling_it);
    cooling_bytes_ -= e.bytes;
    cooling_count_.store(cooling_.size(), std::memory_order_relaxed);
  }
  resident_bytes_.fetch_sub(e.bytes, std::memory_order_relaxed);
  return e;
}

void TwoStageCache::push_hot(Entry e) {
  resident_bytes_.fetch_add(e.bytes, std::memory_order_relaxed);
  Location loc{CacheRegion::Hot, hot_.size(), {}};
  where_.emplace(e.key, loc);
  hot_.push_back(std::move(e));
  hot_count_.store(hot_.size(), std::memory_order_relaxed);
}

void TwoStageCache::push_cooling(Entry e) {
  resident_bytes_.fetch_add(e.bytes, std::memory_order_relaxed);
  cooling_bytes_ += e.bytes;
  auto key = e.key;
  cooling_.push_back(std::move(e));
  where_.emplace(std::move(key), Location{CacheRegion::Cooling, 0, std::prev(cooling_.end())});
  cooling_count_.store(cooling_.size(), std::memory_order_relaxed);
}

void TwoStageCache::demote_random() {
  std::uniform_int_distribution<std::size_t> pick(0, hot_.size() - 1);
  const auto key = hot_[pick(rng_)].key;
  push_cooling(take(key));
}

std::string TwoStageCache::evict_head() {
  auto key = cooling_.front().key;
  take(key);
  return key;
}

// ---------------------------------------------------------------------------
// LruCache

std::optional<CachedValue> LruCache::get(std::string_view key) {
  auto it = map_.find(std::string(key));
  if (it == map_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  order_.splice(order_.begin(), order_, it->second);
  return CachedValue{it->second->value, it->second->version};
}

std::vector<std::string> LruCache::admit(std::string_view key, std::string_view value,
                                         Lsn version_lsn) {
  std::vector<std::string> evicted;
  const std::string k(key);
  if (auto it = map_.find(k); it != map_.end()) {
    if (version_lsn < it->second->version) return evicted;
    resident_ -= it->second->bytes;
    order_.erase(it->second);
    map_.erase(it);
  }
  const auto bytes = cache_entry_bytes(key, value);
  if (bytes > capacity_) {
    evicted.push_back(k);
    return evicted;
  }
  order_.push_front(Entry{k, std::string(value), version_lsn, bytes});
  map_.emplace(k, order_.begin());
  resident_ += bytes;
  while (resident_ > capacity_) {
    auto& victim = order_.back();
    evicted.push_back(victim.key);
    resident_ -= victim.bytes;
    map_.erase(victim.key);
    order_.pop_back();
  }
  return evicted;
}

bool LruCache::invalidate(std::string_view key) {
  auto it = map_.find(std::string(key));
  if (it == map_.end()) return false;
  resident_ -= it->second->bytes;
  order_.erase(it->second);
  map_.erase(it);
  return true;
}

CacheStats LruCache::stats() const {
  return CacheStats{hits_, misses_, ratio(hits_, misses_), resident_, map_.size(), 0};
}

// ---------------------------------------------------------------------------
// FifoCache

std::optional<CachedValue> FifoCache::get(std::string_view key) {
  auto it = map_.find(std::string(key));
  if (it == map_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return CachedValue{it->second->value, it->second->version};
}

std::vector<std::string> FifoCache::admit(std::string_view key, std::string_view value,
                                          Lsn version_lsn) {
  std::vector<std::string> evicted;
  const std::string k(key);
  if (auto it = map_.find(k); it != map_.end()) {
    if (version_lsn < it->second->version) return evicted;
    resident_ -= it->second->bytes;
    queue_.erase(it->second);
    map_.erase(it);
  }
  const auto bytes = cache_entry_bytes(key, value);
  if (bytes > capacity_) {
    evicted.push_back(k);
    return evicted;
  }
  queue_.push_back(Entry{k, std::string(value), version_lsn, bytes});
  map_.emplace(k, std::prev(queue_.end()));
  resident_ += bytes;
  while (resident_ > capacity_) {
    auto& victim = queue_.front();
    evicted.push_back(victim.key);
    resident_ -= victim.bytes;
    map_.erase(victim.key);
    queue_.pop_front();
  }
  return evicted;
}

bool FifoCache::invalidate(std::string_view key) {
  auto it = map_.find(std::string(key));
  if (it == map_.end()) return false;
  resident_ -= it->second->bytes;
  queue_.erase(it->second);
  map_.erase(it);
  return true;
}

CacheStats FifoCache::stats() const {
  return CacheStats{hits_, misses_, ratio(hits_, misses_), resident_, map_.size(), 0};
}

}  // namespace logstore

#include "logstore/radix_index.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cstring>

#include "logstore/bytes.hpp"

namespace logstore {

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Node4: return "Node4";
    case NodeKind::Node16: return "Node16";
    case NodeKind::Node48: return "Node48";
    case NodeKind::Node256: return "Node256";
    case NodeKind::Leaf: return "Leaf";
  }
  return "?";
}

namespace detail {

struct ArtNode {
  explicit ArtNode(NodeKind k) : kind(k) {}
  NodeKind kind;
};

struct ArtLeaf : ArtNode {
  explicit ArtLeaf(IndexEntry e) : ArtNode(NodeKind::Leaf), entry(std::move(e)) {}
  IndexEntry entry;
};

struct ArtInner : ArtNode {
  using ArtNode::ArtNode;
  std::string prefix;
  ArtNodePtr terminal;  // leaf for the key ending exactly at this node
  std::uint16_t count = 0;
};

// Node4 and Node16 keep their key bytes sorted.
template <std::size_t Cap, NodeKind K>
struct ArtSmall : ArtInner {
  ArtSmall() : ArtInner(K) {}
  std::array<std::uint8_t, Cap> keys{};
  std::array<ArtNodePtr, Cap> children;
};

using ArtNode4 = ArtSmall<4, NodeKind::Node4>;
using ArtNode16 = ArtSmall<16, NodeKind::Node16>;

struct ArtNode48 : ArtInner {
  ArtNode48() : ArtInner(NodeKind::Node48) {}
  std::array<std::uint8_t, 256> slot{};  // 0 = empty, else child index + 1
  std::array<ArtNodePtr, 48> children;
};

struct ArtNode256 : ArtInner {
  ArtNode256() : ArtInner(NodeKind::Node256) {}
  std::array<ArtNodePtr, 256> children;
};

void ArtNodeDeleter::operator()(ArtNode* n) const noexcept {
  switch (n->kind) {
    case NodeKind::Leaf: delete static_cast<ArtLeaf*>(n); break;
    case NodeKind::Node4: delete static_cast<ArtNode4*>(n); break;
    case NodeKind::Node16: delete static_cast<ArtNode16*>(n); break;
    case NodeKind::Node48: delete static_cast<ArtNode48*>(n); break;
    case NodeKind::Node256: delete static_cast<ArtNode256*>(n); break;
  }
}

}  // namespace detail

namespace {

using detail::ArtInner;
using detail::ArtLeaf;
using detail::ArtNode;
using detail::ArtNode16;
using detail::ArtNode256;
using detail::ArtNode4;
using detail::ArtNode48;
using detail::ArtNodePtr;

constexpr std::uint16_t kShrink16 = 3;
constexpr std::uint16_t kShrink48 = 12;
constexpr std::uint16_t kShrink256 = 37;

template <class T>
ArtNodePtr make_node() {
  return ArtNodePtr(new T());
}

ArtNodePtr make_leaf(std::string_view key, LogPosition pos, Lsn version) {
  return ArtNodePtr(new ArtLeaf(IndexEntry{std::string(key), pos, version}));
}

ArtLeaf* as_leaf(ArtNode* n) { return static_cast<ArtLeaf*>(n); }
const ArtLeaf* as_leaf(const ArtNode* n) { return static_cast<const ArtLeaf*>(n); }
ArtInner* as_inner(ArtNode* n) { return static_cast<ArtInner*>(n); }
const ArtInner* as_inner(const ArtNode* n) { return static_cast<const ArtInner*>(n); }

std::uint8_t byte_at(std::string_view s, std::size_t i) { return static_cast<std::uint8_t>(s[i]); }

template <class Small>
ArtNodePtr* small_find(Small* n, std::uint8_t b) {
  for (std::uint16_t i = 0; i < n->count; ++i) {
    if (n->keys[i] == b) return &n->children[i];
  }
  return nullptr;
}

ArtNodePtr* find_child(ArtInner* in, std::uint8_t b) {
  switch (in->kind) {
    case NodeKind::Node4: return small_find(static_cast<ArtNode4*>(in), b);
    case NodeKind::Node16: return small_find(static_cast<ArtNode16*>(in), b);
    case NodeKind::Node48: {
      auto* n = static_cast<ArtNode48*>(in);
      return n->slot[b] ? &n->children[n->slot[b] - 1] : nullptr;
    }
    case NodeKind::Node256: {
      auto* n = static_cast<ArtNode256*>(in);
      return n->children[b] ? &n->children[b] : nullptr;
    }
    case NodeKind::Leaf: break;
  }
  return nullptr;
}

const ArtNode* find_child(const ArtInner* in, std::uint8_t b) {
  auto* p = find_child(const_cast<ArtInner*>(in), b);
  return p ? p->get() : nullptr;
}

/// Calls fn(byte, child_ref) for each child in ascending byte order; stops
/// when fn returns false.
template <class Fn>
bool for_each_child(ArtInner* in, Fn&& fn) {
  switch (in->kind) {
    case NodeKind::Node4: {
      auto* n = static_cast<ArtNode4*>(in);
      for (std::uint16_t i = 0; i < n->count; ++i)
        if (!fn(n->keys[i], n->children[i])) return false;
      return true;
    }
    case NodeKind::Node16: {
      auto* n = static_cast<ArtNode16*>(in);
      for (std::uint16_t i = 0; i < n->count; ++i)
        if (!fn(n->keys[i], n->children[i])) return false;
      return true;
    }
    case NodeKind::Node48: {
      auto* n = static_cast<ArtNode48*>(in);
      for (int b = 0; b < 256; ++b)
        if (n->slot[b] && !fn(static_cast<std::uint8_t>(b), n->children[n->slot[b] - 1]))
          return false;
      return true;
    }
    case NodeKind::Node256: {
      auto* n = static_cast<ArtNode256*>(in);
      for (int b = 0; b < 256; ++b)
        if (n->children[b] && !fn(static_cast<std::uint8_t>(b), n->children[b])) return false;
      return true;
    }
    case NodeKind::Leaf: break;
  }
  return true;
}

void move_header(ArtInner* from, ArtInner* to) {
  to->prefix = std::move(from->prefix);
  to->terminal = std::move(from->terminal);
}

/// Rebuilds the node behind ref as kind K, keeping prefix, terminal and children.
template <class To>
void convert(ArtNodePtr& ref) {
  auto fresh = make_node<To>();
  auto* dst = static_cast<To*>(fresh.get());
  auto* src = as_inner(ref.get());
  move_header(src, dst);
  for_each_child(src, [&](std::uint8_t b, ArtNodePtr& child) {
    if constexpr (std::is_same_v<To, ArtNode4> || std::is_same_v<To, ArtNode16>) {
      dst->keys[dst->count] = b;
      dst->children[dst->count] = std::move(child);
    } else if constexpr (std::is_same_v<To, ArtNode48>) {
      dst->children[dst->count] = std::move(child);
      dst->slot[b] = static_cast<std::uint8_t>(dst->count + 1);
    } else {
      dst->children[b] = std::move(child);
    }
    ++dst->count;
    return true;
  });
  ref = std::move(fresh);
}

template <class Small>
void small_insert(Small* n, std::uint8_t b, ArtNodePtr child) {
  std::uint16_t pos = 0;
  while (pos < n->count && n->keys[pos] < b) ++pos;
  for (std::uint16_t i = n->count; i > pos; --i) {
    n->keys[i] = n->keys[i - 1];
    n->children[i] = std::move(n->children[i - 1]);
  }
  n->keys[pos] = b;
  n->children[pos] = std::move(child);
  ++n->count;
}

void add_child(ArtNodePtr& ref, std::uint8_t b, ArtNodePtr child) {
  auto* in = as_inner(ref.get());
  switch (in->kind) {
    case NodeKind::Node4:
      if (in->count < 4) return small_insert(static_cast<ArtNode4*>(in), b, std::move(child));
      convert<ArtNode16>(ref);
      return add_child(ref, b, std::move(child));
    case NodeKind::Node16:
      if (in->count < 16) return small_insert(static_cast<ArtNode16*>(in), b, std::move(child));
      convert<ArtNode48>(ref);
      return add_child(ref, b, std::move(child));
    case NodeKind::Node48: {
      auto* n = static_cast<ArtNode48*>(in);
      if (n->count < 48) {
        // Slots are compact: remove_child keeps children[0..count) dense.
        n->children[n->count] = std::move(child);
        n->slot[b] = static_cast<std::uint8_t>(n->count + 1);
        ++n->count;
        return;
      }
      convert<ArtNode256>(ref);
      return add_child(ref, b, std::move(child));
    }
    case NodeKind::Node256: {
      auto* n = static_cast<ArtNode256*>(in);
      n->children[b] = std::move(child);
      ++n->count;
      return;
    }
    case NodeKind::Leaf: break;
  }
  assert(false && "add_child on a leaf");
}

template <class Small>
void small_remove(Small* n, std::uint8_t b) {
  std::uint16_t pos = 0;
  while (pos < n->count && n->keys[pos] != b) ++pos;
  assert(pos < n->count);
  for (std::uint16_t i = pos; i + 1 < n->count; ++i) {
    n->keys[i] = n->keys[i + 1];
    n->children[i] = std::move(n->children[i + 1]);
  }
  n->children[n->count - 1].reset();
  --n->count;
}

void remove_child(ArtInner* in, std::uint8_t b) {
  switch (in->kind) {
    case NodeKind::Node4: return small_remove(static_cast<ArtNode4*>(in), b);
    case NodeKind::Node16: return small_remove(static_cast<ArtNode16*>(in), b);
    case NodeKind::Node48: {
      auto* n = static_cast<ArtNode48*>(in);
      const auto idx = n->slot[b] - 1;
      const auto last = n->count - 1;
      if (idx != last) {
        // Move the last child into the hole to keep the child array dense.
        n->children[idx] = std::move(n->children[last]);
        for (auto& s : n->slot) {
          if (s == last + 1) {
            s = static_cast<std::uint8_t>(idx + 1);
            break;
          }
        }
      }
      n->children[last].reset();
      n->slot[b] = 0;
      --n->count;
      return;
    }
    case NodeKind::Node256: {
      auto* n = static_cast<ArtNode256*>(in);
      n->children[b].reset();
      --n->count;
      return;
    }
    case NodeKind::Leaf: break;
  }
}

/// Restores the structural rules after a removal under ref: collapse empty
/// or single-child nodes and shrink oversized node kinds.
void normalize(ArtNodePtr& ref) {
  auto* in = as_inner(ref.get());
  if (in->count == 0) {
    ArtNodePtr keep = std::move(in->terminal);
    ref = std::move(keep);
    return;
  }
  if (in->count == 1 && !in->terminal) {
    ArtNodePtr only;
    std::uint8_t byte = 0;
    for_each_child(in, [&](std::uint8_t b, ArtNodePtr& child) {
      byte = b;
      only = std::move(child);
      return false;
    });
    if (only->kind != NodeKind::Leaf) {
      auto* ci = as_inner(only.get());
      std::string merged = std::move(in->prefix);
      merged.push_back(static_cast<char>(byte));
      merged += ci->prefix;
      ci->prefix = std::move(merged);
    }
    ref = std::move(only);
    return;
  }
  switch (in->kind) {
    case NodeKind::Node16:
      if (in->count <= kShrink16) convert<ArtNode4>(ref);
      break;
    case NodeKind::Node48:
      if (in->count <= kShrink48) convert<ArtNode16>(ref);
      break;
    case NodeKind::Node256:
      if (in->count <= kShrink256) convert<ArtNode48>(ref);
      break;
    default: break;
  }
}

RadixIndex::PutResult update_leaf(ArtLeaf* leaf, LogPosition pos, Lsn version) {
  if (version <= leaf->entry.version_lsn) return {leaf->entry, false};
  RadixIndex::PutResult r{leaf->entry, true};
  leaf->entry.position = pos;
  leaf->entry.version_lsn = version;
  return r;
}

/// Places a fresh leaf (or moved subtree owning `key`) into a node that was
/// just created for a split at depth nd.
void place(ArtNodePtr& node, std::string_view key, std::size_t nd, ArtNodePtr item) {
  auto* in = as_inner(node.get());
  if (key.size() == nd) {
    in->terminal = std::move(item);
  } else {
    add_child(node, byte_at(key, nd), std::move(item));
  }
}

RadixIndex::PutResult insert(ArtNodePtr& ref, std::string_view key, std::size_t depth,
                             LogPosition pos, Lsn version, std::size_t& size) {
  if (!ref) {
    ref = make_leaf(key, pos, version);
    ++size;
    return {std::nullopt, true};
  }
  if (ref->kind == NodeKind::Leaf) {
    auto* leaf = as_leaf(ref.get());
    std::string_view lk = leaf->entry.key;
    if (lk == key) return update_leaf(leaf, pos, version);
    std::size_t lcp = 0;
    while (depth + lcp < lk.size() && depth + lcp < key.size() &&
           lk[depth + lcp] == key[depth + lcp]) {
      ++lcp;
    }
    auto split = make_node<ArtNode4>();
    as_inner(split.get())->prefix = std::string(key.substr(depth, lcp));
    const auto nd = depth + lcp;
    ArtNodePtr old = std::move(ref);
    place(split, lk, nd, std::move(old));
    place(split, key, nd, make_leaf(key, pos, version));
    ref = std::move(split);
    ++size;
    return {std::nullopt, true};
  }

  auto* in = as_inner(ref.get());
  const auto& prefix = in->prefix;
  std::size_t m = 0;
  while (m < prefix.size() && depth + m < key.size() && prefix[m] == key[depth + m]) ++m;
  if (m < prefix.size()) {
    auto split = make_node<ArtNode4>();
    as_inner(split.get())->prefix = prefix.substr(0, m);
    const auto b = static_cast<std::uint8_t>(prefix[m]);
    in->prefix.erase(0, m + 1);
    ArtNodePtr old = std::move(ref);
    add_child(split, b, std::move(old));
    place(split, key, depth + m, make_leaf(key, pos, version));
    ref = std::move(split);
    ++size;
    return {std::nullopt, true};
  }

  const auto nd = depth + prefix.size();
  if (key.size() == nd) {
    if (in->terminal) return update_leaf(as_leaf(in->terminal.get()), pos, version);
    in->terminal = make_leaf(key, pos, version);
    ++size;
    return {std::nullopt, true};
  }
  if (auto* child = find_child(in, byte_at(key, nd))) {
    return insert(*child, key, nd + 1, pos, version, size);
  }
  add_child(ref, byte_at(key, nd), make_leaf(key, pos, version));
  ++size;
  return {std::nullopt, true};
}

std::optional<IndexEntry> erase(ArtNodePtr& ref, std::string_view key, std::size_t depth) {
  if (!ref) return std::nullopt;
  if (ref->kind == NodeKind::Leaf) {
    auto* leaf = as_leaf(ref.get());
    if (leaf->entry.key != key) return std::nullopt;
    auto e = std::move(leaf->entry);
    ref.reset();
    return e;
  }
  auto* in = as_inner(ref.get());
  const auto plen = in->prefix.size();
  if (key.size() < depth + plen || key.substr(depth, plen) != in->prefix) return std::nullopt;
  const auto nd = depth + plen;
  std::optional<IndexEntry> removed;
  if (key.size() == nd) {
    if (!in->terminal) return std::nullopt;
    removed = std::move(as_leaf(in->terminal.get())->entry);
    in->terminal.reset();
  } else {
    const auto b = byte_at(key, nd);
    auto* child = find_child(in, b);
    if (!child) return std::nullopt;
    removed = erase(*child, key, nd + 1);
    if (!removed) return std::nullopt;
    if (!*child) remove_child(in, b);
  }
  normalize(ref);
  return removed;
}

const ArtLeaf* find_leaf(const ArtNode* node, std::string_view key) {
  std::size_t depth = 0;
  while (node) {
    if (node->kind == NodeKind::Leaf) {
      auto* leaf = as_leaf(node);
      return leaf->entry.key == key ? leaf : nullptr;
    }
    auto* in = as_inner(node);
    const auto plen = in->prefix.size();
    if (key.size() < depth + plen || key.substr(depth, plen) != in->prefix) return nullptr;
    const auto nd = depth + plen;
    if (key.size() == nd) return in->terminal ? as_leaf(in->terminal.get()) : nullptr;
    node = find_child(in, byte_at(key, nd));
    depth = nd + 1;
  }
  return nullptr;
}

struct RangeWalk {
  std::string_view start;
  std::optional<std::string_view> end;
  const std::function<bool(const IndexEntry&)>& fn;
  std::string path;

  bool leaf(const ArtLeaf* l) {
    const auto& k = l->entry.key;
    if (std::string_view(k) < start) return true;
    if (end && std::string_view(k) >= *end) return false;
    return fn(l->entry);
  }

  // Returns false once the walk must stop.
  bool node(ArtNode* n) {
    if (n->kind == NodeKind::Leaf) return leaf(as_leaf(n));
    auto* in = as_inner(n);
    const auto base = path.size();
    path += in->prefix;
    std::string_view p(path);
    // Every key below starts with p. Skip the subtree when it lies wholly
    // before start; stop when it lies at or after end.
    if (!start.starts_with(p) && p < start) {
      path.resize(base);
      return true;
    }
    if (end && p >= *end) {
      path.resize(base);
      return false;
    }
    bool go = true;
    if (in->terminal) go = leaf(as_leaf(in->terminal.get()));
    if (go) {
      go = for_each_child(in, [&](std::uint8_t b, ArtNodePtr& child) {
        path.push_back(static_cast<char>(b));
        bool r = node(child.get());
        path.pop_back();
        return r;
      });
    }
    path.resize(base);
    return go;
  }
};

}  // namespace

RadixIndex::RadixIndex() = default;
RadixIndex::~RadixIndex() = default;
RadixIndex::RadixIndex(RadixIndex&&) noexcept = default;
RadixIndex& RadixIndex::operator=(RadixIndex&&) noexcept = default;

RadixIndex::PutResult RadixIndex::put(std::string_view key, LogPosition position, Lsn version_lsn) {
  if (key.empty()) throw InvalidArgument("empty key");
  return insert(root_, key, 0, position, version_lsn, size_);
}

std::optional<IndexEntry> RadixIndex::get(std::string_view key) const {
  if (auto* leaf = find_leaf(root_.get(), key)) return leaf->entry;
  return std::nullopt;
}

std::optional<IndexEntry> RadixIndex::remove(std::string_view key) {
  auto r = erase(root_, key, 0);
  if (r) --size_;
  return r;
}

bool RadixIndex::relocate(std::string_view key, LogPosition position, Lsn version_lsn) {
  auto* leaf = const_cast<ArtLeaf*>(find_leaf(root_.get(), key));
  if (!leaf || leaf->entry.version_lsn != version_lsn) return false;
  leaf->entry.position = position;
  return true;
}

void RadixIndex::visit(std::string_view start, std::optional<std::string_view> end,
                       const std::function<bool(const IndexEntry&)>& fn) const {
  if (!root_) return;
  RangeWalk walk{start, end, fn, {}};
  walk.node(root_.get());
}

std::vector<IndexEntry> RadixIndex::range(std::string_view start, std::string_view end,
                                          std::size_t limit) const {
  std::vector<IndexEntry> out;
  if (limit == 0 || !(start < end)) return out;
  visit(start, end, [&](const IndexEntry& e) {
    out.push_back(e);
    return out.size() < limit;
  });
  return out;
}

Lsn RadixIndex::max_version() const {
  Lsn m = kNoLsn;
  for_each([&](const IndexEntry& e) {
    m = std::max(m, e.version_lsn);
    return true;
  });
  return m;
}

void RadixIndex::clear() {
  root_.reset();
  size_ = 0;
}

std::optional<NodeKind> RadixIndex::node_kind_at(std::string_view key_prefix) const {
  const ArtNode* node = root_.get();
  std::size_t depth = 0;
  while (node && node->kind != NodeKind::Leaf) {
    auto* in = as_inner(node);
    const auto plen = in->prefix.size();
    if (key_prefix.size() < depth + plen || key_prefix.substr(depth, plen) != in->prefix) {
      return std::nullopt;
    }
    const auto nd = depth + plen;
    if (nd == key_prefix.size()) return in->kind;
    node = find_child(in, byte_at(key_prefix, nd));
    depth = nd + 1;
  }
  return std::nullopt;
}

SnapshotInfo write_snapshot(const RadixIndex& index, std::string& out) {
  const auto start = out.size();
  SnapshotInfo info;
  index.for_each([&](const IndexEntry& e) {
    put_bytes(out, e.key);
    put_u32(out, e.position.segment_id);
    put_u64(out, e.position.offset);
    put_u64(out, e.version_lsn);
    info.entry_count++;
    info.last_included_lsn = std::max(info.last_included_lsn, e.version_lsn);
    return true;
  });
  put_u64(out, info.entry_count);
  put_u64(out, info.last_included_lsn);
  put_u32(out, crc32(std::string_view(out).substr(start)));
  return info;
}

LoadedSnapshot load_snapshot(std::string_view data) {
  constexpr std::size_t kTrailer = 8 + 8 + 4;
  if (data.size() < kTrailer) throw CorruptSnapshot("snapshot shorter than its trailer");
  const auto body = data.substr(0, data.size() - 4);
  if (crc32(body) != load_u32(data.data() + data.size() - 4)) {
    throw CorruptSnapshot("snapshot checksum mismatch");
  }
  LoadedSnapshot out;
  out.info.entry_count = load_u64(data.data() + data.size() - kTrailer);
  out.info.last_included_lsn = load_u64(data.data() + data.size() - kTrailer + 8);

  ByteReader r(data.substr(0, data.size() - kTrailer));
  std::string prev;
  Lsn max_version = kNoLsn;
  std::uint64_t n = 0;
  try {
    while (!r.done()) {
      auto key = r.bytes();
      LogPosition pos;
      pos.segment_id = r.u32();
      pos.offset = r.u64();
      const auto version = r.u64();
      if (key.empty() || (n > 0 && !(prev < key))) {
        throw CorruptSnapshot("snapshot keys not strictly ascending");
      }
      out.index.put(key, pos, version);
      max_version = std::max(max_version, version);
      prev = std::move(key);
      ++n;
    }
  } catch (const InvalidArgument&) {
    throw CorruptSnapshot("snapshot entry truncated");
  }
  if (n != out.info.entry_count || max_version != out.info.last_included_lsn) {
    throw CorruptSnapshot("snapshot trailer disagrees with its entries");
  }
  return out;
}

}  // namespace logstore

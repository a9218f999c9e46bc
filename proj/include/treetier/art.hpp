#pragma once

#include <array>
#include <cassert>
#include <cstring>

#include "treetier/adapter.hpp"
#include "treetier/epoch.hpp"
#include "treetier/hooks.hpp"
#include "treetier/node_meta.hpp"
#include "treetier/tiered_heap.hpp"

namespace treetier {

// Adaptive radix tree over fixed 8-byte keys (big-endian byte order), with
// Node4/16/48/256 variants, path compression and single-value leaves.
// Readers are optimistic with version validation; writers lock the affected
// node pair. The root is a permanent Node256 (it never grows, shrinks or
// collapses), so stored byte positions are stable for the life of the tree.
template <typename Value>
class AdaptiveRadixTree {
 public:
  using Key = u64;
  static constexpr u8 kLeafLevel = 8;  // one past the last key byte

  enum class NodeType : u8 { N4, N16, N48, N256, Leaf };

  struct NodeBase {
    VersionLatch latch;
    NodeMeta meta;  // level = discriminated key byte position; 8 for leaves
    NodeType type;
    u8 prefix_len = 0;
    u16 count = 0;
    u8 prefix[8] = {};

    bool is_leaf() const { return type == NodeType::Leaf; }
  };

  struct Leaf : NodeBase {
    AccessCounter freq;
    Key key = 0;
    Value value{};
  };
  struct Node4 : NodeBase {
    u8 keys[4] = {};
    NodeBase* children[4] = {};
  };
  struct Node16 : NodeBase {
    u8 keys[16] = {};
    NodeBase* children[16] = {};
  };
  struct Node48 : NodeBase {
    u8 child_index[256];
    NodeBase* children[48] = {};
  };
  struct Node256 : NodeBase {
    NodeBase* children[256] = {};
  };

  struct AccessStats {
    std::atomic<u64> leaf_fast{0};
    std::atomic<u64> leaf_slow{0};
  };

  AdaptiveRadixTree(TieredHeap& heap, EpochManager& ebr, PlacementHooks& hooks)
      : heap_(heap), ebr_(ebr), hooks_(hooks) {
    root_.store(static_cast<Node256*>(alloc_node(NodeType::N256, 0, TierId::Fast, /*root=*/true)),
                std::memory_order_release);
  }

  ~AdaptiveRadixTree() { destroy_subtree(root_.load()); }

  AdaptiveRadixTree(const AdaptiveRadixTree&) = delete;

  static u8 key_byte(Key k, u32 pos) { return u8(k >> (56 - 8 * pos)); }

  // ---- point operations -------------------------------------------------------

  bool get(Key k, Value& out) {
    EpochManager::Guard g(ebr_);
    for (;;) {
      bool found = false;
      Value val{};
      if (try_get(k, val, found)) {
        if (found) out = val;
        return found;
      }
    }
  }

  void insert(Key k, const Value& v) {
    EpochManager::Guard g(ebr_);
    while (!try_insert(k, v)) {
    }
  }

  bool remove(Key k) {
    EpochManager::Guard g(ebr_);
    for (;;) {
      bool removed = false;
      if (try_remove(k, removed)) return removed;
    }
  }

  // ---- adapter support -----------------------------------------------------------

  u32 height() const { return kLeafLevel; }
  NodeBase* root() const { return root_.load(std::memory_order_acquire); }
  AccessStats& access_stats() { return access_stats_; }

  u64 footprint_at_depth(u32 depth) const {
    return depth <= kLeafLevel ? level_bytes_[depth].load(std::memory_order_relaxed) : 0;
  }

  static u32 node_bytes(NodeType t) {
    switch (t) {
      case NodeType::N4: return sizeof(Node4);
      case NodeType::N16: return sizeof(Node16);
      case NodeType::N48: return sizeof(Node48);
      case NodeType::N256: return sizeof(Node256);
      case NodeType::Leaf: return sizeof(Leaf);
    }
    return 0;
  }

  void for_each_leaf(const std::function<bool(const LeafView&)>& visit) {
    EpochManager::Guard g(ebr_);
    Key cursor = 0;
    for (;;) {
      Leaf* leaf = nullptr;
      for (;;) {
        bool rs = false;
        leaf = seek_leaf_ge(cursor, rs);
        if (!rs) break;
      }
      if (!leaf) return;
      bool rs = false;
      u64 v = leaf->latch.read_lock_or_restart(rs);
      if (rs) continue;
      Key k = leaf->key;
      u16 f = leaf->freq.load();
      TierId t = leaf->meta.tier();
      leaf->latch.check_or_restart(v, rs);
      if (rs) continue;
      if (k < cursor) continue;  // raced with a relocation; already visited
      if (!visit(LeafView{leaf, k, f, t})) return;
      if (k == ~0ull) return;
      cursor = k + 1;
    }
  }

  NodeBase* parent_of(NodeBase* x, Key key) {
    EpochManager::Guard g(ebr_);
    for (int i = 0; i < 8; i++) {
      bool rs = false;
      ParentFind f = find_parent_raw(x, key, rs);
      if (!rs) return f.parent;
    }
    return nullptr;
  }

  PathProbe first_slow_on_path(Key key) {
    EpochManager::Guard g(ebr_);
    for (int attempt = 0; attempt < 8; attempt++) {
      bool rs = false;
      NodeBase* node = root();
      u64 v = node->latch.read_lock_or_restart(rs);
      if (rs) continue;
      u32 depth = 0;
      for (;;) {
        if (node->meta.tier() == TierId::Slow) return PathProbe{node, node->is_leaf()};
        if (node->is_leaf()) return PathProbe{};
        u32 pos = depth + node->prefix_len;
        if (pos > 7) return PathProbe{};
        NodeBase* child = find_child(node, key_byte(key, pos));
        node->latch.check_or_restart(v, rs);
        if (rs) break;
        if (!child) return PathProbe{};
        u64 cv = child->latch.read_lock_or_restart(rs);
        if (rs) break;
        node->latch.check_or_restart(v, rs);
        if (rs) break;
        node = child;
        v = cv;
        depth = pos + 1;
      }
    }
    return PathProbe{};
  }

  bool has_fast_child(NodeBase* n) const {
    bool any = false;
    visit_children(n, [&](NodeBase* c) {
      if (c->meta.tier() == TierId::Fast) any = true;
    });
    return any;
  }

  RelocateResult relocate(NodeBase* x, Key key, TierId target, bool require_children_slow) {
    EpochManager::Guard g(ebr_);
    for (int attempt = 0; attempt < 6; attempt++) {
      RelocateResult r = relocate_once(x, key, target, require_children_slow);
      if (r.status != RelocateStatus::Busy) return r;
    }
    return {RelocateStatus::Busy, nullptr};
  }

  // ---- testing helpers --------------------------------------------------------------

  void check_structure(bool check_single_boundary = true) const {
    u8 path[8] = {};
    check_node(root_.load(), 0, path, check_single_boundary, TierId::Fast, true);
  }

  u64 count_keys() {
    u64 n = 0;
    for_each_leaf([&](const LeafView&) {
      n++;
      return true;
    });
    return n;
  }

 private:
  // ---- allocation -------------------------------------------------------------------

  NodeBase* construct(void* p, NodeType type) {
    switch (type) {
      case NodeType::N4: return new (p) Node4();
      case NodeType::N16: return new (p) Node16();
      case NodeType::N48: {
        auto* n48 = new (p) Node48();
        std::memset(n48->child_index, 0xff, sizeof(n48->child_index));
        return n48;
      }
      case NodeType::N256: return new (p) Node256();
      case NodeType::Leaf: return new (p) Leaf();
    }
    return nullptr;
  }

  NodeBase* alloc_node(NodeType type, u8 level, TierId want, bool root = false) {
    u32 size = node_bytes(type);
    auto prio = root ? TieredHeap::Priority::Structural : TieredHeap::Priority::Normal;
    TierHandle h = heap_.alloc(size, want, prio);
    if (!h && want == TierId::Fast) h = heap_.alloc(size, TierId::Slow, prio);
    if (!h) throw std::bad_alloc();
    NodeBase* n = construct(h.ptr, type);
    n->type = type;
    n->meta.init(level, h.tier);
    level_bytes_[level].fetch_add(size, std::memory_order_relaxed);
    return n;
  }

  // Placement for replacement/interposed inner nodes created by growth,
  // shrink and prefix splits. A fast original keeps fast placement (through
  // the structural reserve if needed) so its fast descendants never end up
  // under a slow parent; otherwise the layer rule decides.
  NodeBase* alloc_replacement(NodeType type, u8 level, const NodeBase* original,
                              TierId parent_tier) {
    if (original->meta.tier() == TierId::Fast) {
      TierHandle h =
          heap_.alloc(node_bytes(type), TierId::Fast, TieredHeap::Priority::Structural);
      if (h) {
        NodeBase* n = construct(h.ptr, type);
        n->type = type;
        n->meta.init(level, h.tier);
        level_bytes_[level].fetch_add(node_bytes(type), std::memory_order_relaxed);
        return n;
      }
    }
    TierId want = hooks_.choose(level, false, parent_tier, node_bytes(type));
    return alloc_node(type, level, want);
  }

  Leaf* alloc_leaf(Key k, const Value& v, TierId parent_tier) {
    TierId want = hooks_.choose(kLeafLevel, true, parent_tier, sizeof(Leaf));
    auto* l = static_cast<Leaf*>(alloc_node(NodeType::Leaf, kLeafLevel, want));
    l->key = k;
    l->value = v;
    return l;
  }

  void retire_node(NodeBase* n) {
    u32 size = node_bytes(n->type);
    level_bytes_[n->meta.level()].fetch_sub(size, std::memory_order_relaxed);
    TierHandle h{n, size, n->meta.tier()};
    heap_.retire(h);
    TieredHeap* heap = &heap_;
    ebr_.retire([heap, h] { heap->recycle(h); });
  }

  void destroy_subtree(NodeBase* n) {
    visit_children(n, [&](NodeBase* c) { destroy_subtree(c); });
    u32 size = node_bytes(n->type);
    level_bytes_[n->meta.level()].fetch_sub(size, std::memory_order_relaxed);
    heap_.free(TierHandle{n, size, n->meta.tier()});
  }

  // ---- variant plumbing ----------------------------------------------------------------

  static NodeBase* find_child(const NodeBase* n, u8 b) {
    switch (n->type) {
      case NodeType::N4: {
        auto* v = static_cast<const Node4*>(n);
        for (int i = 0; i < n->count; i++)
          if (v->keys[i] == b) return v->children[i];
        return nullptr;
      }
      case NodeType::N16: {
        auto* v = static_cast<const Node16*>(n);
        for (int i = 0; i < n->count; i++)
          if (v->keys[i] == b) return v->children[i];
        return nullptr;
      }
      case NodeType::N48: {
        auto* v = static_cast<const Node48*>(n);
        u8 idx = v->child_index[b];
        return idx == 0xff ? nullptr : v->children[idx];
      }
      case NodeType::N256:
        return static_cast<const Node256*>(n)->children[b];
      case NodeType::Leaf:
        return nullptr;
    }
    return nullptr;
  }

  template <typename F>
  static void visit_children(const NodeBase* n, F&& f) {
    switch (n->type) {
      case NodeType::N4: {
        auto* v = static_cast<const Node4*>(n);
        for (int i = 0; i < n->count; i++) f(v->children[i]);
        break;
      }
      case NodeType::N16: {
        auto* v = static_cast<const Node16*>(n);
        for (int i = 0; i < n->count; i++) f(v->children[i]);
        break;
      }
      case NodeType::N48: {
        auto* v = static_cast<const Node48*>(n);
        for (int b = 0; b < 256; b++)
          if (v->child_index[b] != 0xff) f(v->children[v->child_index[b]]);
        break;
      }
      case NodeType::N256: {
        auto* v = static_cast<const Node256*>(n);
        for (int b = 0; b < 256; b++)
          if (v->children[b]) f(v->children[b]);
        break;
      }
      case NodeType::Leaf:
        break;
    }
  }

  static bool node_full(const NodeBase* n) {
    switch (n->type) {
      case NodeType::N4: return n->count >= 4;
      case NodeType::N16: return n->count >= 16;
      case NodeType::N48: return n->count >= 48;
      default: return false;
    }
  }

  // Mutators below require the node write-locked.
  static void add_child(NodeBase* n, u8 b, NodeBase* child) {
    switch (n->type) {
      case NodeType::N4: {
        auto* v = static_cast<Node4*>(n);
        v->keys[n->count] = b;
        v->children[n->count] = child;
        break;
      }
      case NodeType::N16: {
        auto* v = static_cast<Node16*>(n);
        v->keys[n->count] = b;
        v->children[n->count] = child;
        break;
      }
      case NodeType::N48: {
        auto* v = static_cast<Node48*>(n);
        for (u8 slot = 0; slot < 48; slot++)
          if (v->children[slot] == nullptr) {
            v->children[slot] = child;
            v->child_index[b] = slot;
            break;
          }
        break;
      }
      case NodeType::N256:
        static_cast<Node256*>(n)->children[b] = child;
        break;
      case NodeType::Leaf:
        assert(false);
    }
    n->count++;
  }

  static void remove_child(NodeBase* n, u8 b) {
    switch (n->type) {
      case NodeType::N4: {
        auto* v = static_cast<Node4*>(n);
        for (int i = 0; i < n->count; i++)
          if (v->keys[i] == b) {
            v->keys[i] = v->keys[n->count - 1];
            v->children[i] = v->children[n->count - 1];
            break;
          }
        break;
      }
      case NodeType::N16: {
        auto* v = static_cast<Node16*>(n);
        for (int i = 0; i < n->count; i++)
          if (v->keys[i] == b) {
            v->keys[i] = v->keys[n->count - 1];
            v->children[i] = v->children[n->count - 1];
            break;
          }
        break;
      }
      case NodeType::N48: {
        auto* v = static_cast<Node48*>(n);
        u8 slot = v->child_index[b];
        v->child_index[b] = 0xff;
        if (slot != 0xff) v->children[slot] = nullptr;
        break;
      }
      case NodeType::N256:
        static_cast<Node256*>(n)->children[b] = nullptr;
        break;
      case NodeType::Leaf:
        assert(false);
    }
    n->count--;
  }

  static void replace_child(NodeBase* parent, u8 b, NodeBase* child) {
    switch (parent->type) {
      case NodeType::N4: {
        auto* v = static_cast<Node4*>(parent);
        for (int i = 0; i < parent->count; i++)
          if (v->keys[i] == b) {
            v->children[i] = child;
            return;
          }
        break;
      }
      case NodeType::N16: {
        auto* v = static_cast<Node16*>(parent);
        for (int i = 0; i < parent->count; i++)
          if (v->keys[i] == b) {
            v->children[i] = child;
            return;
          }
        break;
      }
      case NodeType::N48: {
        auto* v = static_cast<Node48*>(parent);
        if (v->child_index[b] != 0xff) {
          v->children[v->child_index[b]] = child;
          return;
        }
        break;
      }
      case NodeType::N256:
        static_cast<Node256*>(parent)->children[b] = child;
        return;
      case NodeType::Leaf:
        break;
    }
    assert(false && "replace_child: byte not present");
  }

  // Copies the full logical content of src into a same-type dst block.
  static void copy_payload(NodeBase* dst, const NodeBase* src) {
    dst->prefix_len = src->prefix_len;
    std::memcpy(dst->prefix, src->prefix, sizeof(src->prefix));
    switch (src->type) {
      case NodeType::N4:
      case NodeType::N16: {
        auto key_at = [](const NodeBase* n, int i) {
          return n->type == NodeType::N4 ? static_cast<const Node4*>(n)->keys[i]
                                         : static_cast<const Node16*>(n)->keys[i];
        };
        auto child_at = [](const NodeBase* n, int i) {
          return n->type == NodeType::N4 ? static_cast<const Node4*>(n)->children[i]
                                         : static_cast<const Node16*>(n)->children[i];
        };
        for (int i = 0; i < src->count; i++) {
          if (dst->type == NodeType::N4) {
            static_cast<Node4*>(dst)->keys[i] = key_at(src, i);
            static_cast<Node4*>(dst)->children[i] = child_at(src, i);
          } else {
            static_cast<Node16*>(dst)->keys[i] = key_at(src, i);
            static_cast<Node16*>(dst)->children[i] = child_at(src, i);
          }
        }
        break;
      }
      case NodeType::N48: {
        auto* s = static_cast<const Node48*>(src);
        auto* d = static_cast<Node48*>(dst);
        std::memcpy(d->child_index, s->child_index, 256);
        std::memcpy(d->children, s->children, sizeof(s->children));
        break;
      }
      case NodeType::N256: {
        auto* s = static_cast<const Node256*>(src);
        auto* d = static_cast<Node256*>(dst);
        std::memcpy(d->children, s->children, sizeof(s->children));
        break;
      }
      case NodeType::Leaf: {
        auto* s = static_cast<const Leaf*>(src);
        auto* d = static_cast<Leaf*>(dst);
        d->key = s->key;
        d->value = s->value;
        d->freq.store(s->freq.load());
        break;
      }
    }
    dst->count = src->count;
  }

  // Re-inserts all entries of src into a different-capacity dst variant.
  static void migrate_entries(NodeBase* dst, const NodeBase* src) {
    dst->prefix_len = src->prefix_len;
    std::memcpy(dst->prefix, src->prefix, sizeof(src->prefix));
    switch (src->type) {
      case NodeType::N4: {
        auto* s = static_cast<const Node4*>(src);
        for (int i = 0; i < src->count; i++) add_child(dst, s->keys[i], s->children[i]);
        break;
      }
      case NodeType::N16: {
        auto* s = static_cast<const Node16*>(src);
        for (int i = 0; i < src->count; i++) add_child(dst, s->keys[i], s->children[i]);
        break;
      }
      case NodeType::N48: {
        auto* s = static_cast<const Node48*>(src);
        for (int b = 0; b < 256; b++)
          if (s->child_index[b] != 0xff) add_child(dst, u8(b), s->children[s->child_index[b]]);
        break;
      }
      case NodeType::N256: {
        auto* s = static_cast<const Node256*>(src);
        for (int b = 0; b < 256; b++)
          if (s->children[b]) add_child(dst, u8(b), s->children[b]);
        break;
      }
      case NodeType::Leaf:
        assert(false);
    }
  }

  // ---- traversal ------------------------------------------------------------------------

  void charge(const NodeBase* n) { heap_.record_access(n->meta.tier()); }

  void touch_leaf(Leaf* leaf) {
    TierId t = leaf->meta.tier();
    (t == TierId::Fast ? access_stats_.leaf_fast : access_stats_.leaf_slow)
        .fetch_add(1, std::memory_order_relaxed);
    if (hooks_.track_accesses()) leaf->freq.increment();
  }

  static u32 prefix_match(const NodeBase* n, Key k, u32 depth) {
    u32 i = 0;
    for (; i < n->prefix_len; i++)
      if (n->prefix[i] != key_byte(k, depth + i)) break;
    return i;
  }

  bool try_get(Key k, Value& out, bool& found) {
    bool rs = false;
    NodeBase* node = root();
    charge(node);
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return false;
    u32 depth = 0;
    for (;;) {
      if (node->is_leaf()) {
        auto* leaf = static_cast<Leaf*>(node);
        Key lk = leaf->key;
        Value val = leaf->value;
        leaf->latch.check_or_restart(v, rs);
        if (rs) return false;
        touch_leaf(leaf);
        found = lk == k;
        if (found) out = val;
        return true;
      }
      u32 match = prefix_match(node, k, depth);
      bool miss = match < node->prefix_len;
      u32 pos = depth + node->prefix_len;
      NodeBase* child = (miss || pos > 7) ? nullptr : find_child(node, key_byte(k, pos));
      node->latch.check_or_restart(v, rs);
      if (rs) return false;
      if (miss || !child) {
        found = false;
        return true;
      }
      charge(child);
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return false;
      node->latch.check_or_restart(v, rs);
      if (rs) return false;
      node = child;
      v = cv;
      depth = pos + 1;
    }
  }

  // ---- insert -------------------------------------------------------------------------------

  bool try_insert(Key k, const Value& val) {
    bool rs = false;
    NodeBase* parent = nullptr;
    u64 parent_ver = 0;
    u8 parent_byte = 0;
    NodeBase* node = root();
    charge(node);
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return false;
    u32 depth = 0;

    for (;;) {
      if (node->is_leaf()) {
        auto* leaf = static_cast<Leaf*>(node);
        Key lk = leaf->key;
        leaf->latch.check_or_restart(v, rs);
        if (rs) return false;
        if (lk == k) {
          leaf->latch.upgrade_to_write_or_restart(v, rs);
          if (rs) return false;
          leaf->value = val;
          touch_leaf(leaf);
          leaf->latch.write_unlock();
          return true;
        }
        assert(parent != nullptr);  // the root is never a leaf
        u32 diff = depth;
        while (diff < 8 && key_byte(lk, diff) == key_byte(k, diff)) diff++;
        assert(diff < 8);
        return leaf_split(parent, parent_ver, parent_byte, leaf, v, k, val, depth, diff);
      }

      u32 match = prefix_match(node, k, depth);
      if (match < node->prefix_len) {
        assert(parent != nullptr);  // the root has no prefix
        return prefix_split(parent, parent_ver, parent_byte, node, v, k, val, depth, match);
      }

      u32 pos = depth + node->prefix_len;
      u8 b = key_byte(k, pos);
      NodeBase* child = find_child(node, b);
      node->latch.check_or_restart(v, rs);
      if (rs) return false;

      if (!child) {
        if (node_full(node)) {
          assert(parent != nullptr);  // the Node256 root is never full
          return grow_and_add(parent, parent_ver, parent_byte, node, v, k, val, b);
        }
        node->latch.upgrade_to_write_or_restart(v, rs);
        if (rs) return false;
        Leaf* leaf = alloc_leaf(k, val, node->meta.tier());
        touch_leaf(leaf);
        add_child(node, b, leaf);
        node->latch.write_unlock();
        return true;
      }

      charge(child);
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return false;
      node->latch.check_or_restart(v, rs);
      if (rs) return false;
      parent = node;
      parent_ver = v;
      parent_byte = b;
      node = child;
      v = cv;
      depth = pos + 1;
    }
  }

  bool leaf_split(NodeBase* parent, u64 parent_ver, u8 parent_byte, Leaf* leaf, u64 leaf_ver,
                  Key k, const Value& val, u32 depth, u32 diff) {
    bool rs = false;
    parent->latch.upgrade_to_write_or_restart(parent_ver, rs);
    if (rs) return false;
    leaf->latch.upgrade_to_write_or_restart(leaf_ver, rs);
    if (rs) {
      parent->latch.write_unlock();
      return false;
    }

    auto* split =
        static_cast<Node4*>(alloc_replacement(NodeType::N4, u8(diff), leaf, parent->meta.tier()));
    split->prefix_len = u8(diff - depth);
    for (u32 i = 0; i < split->prefix_len; i++) split->prefix[i] = key_byte(k, depth + i);
    Leaf* fresh = alloc_leaf(k, val, split->meta.tier());
    touch_leaf(fresh);
    add_child(split, key_byte(leaf->key, diff), leaf);
    add_child(split, key_byte(k, diff), fresh);

    replace_child(parent, parent_byte, split);
    leaf->latch.write_unlock();
    parent->latch.write_unlock();
    return true;
  }

  bool prefix_split(NodeBase* parent, u64 parent_ver, u8 parent_byte, NodeBase* node, u64 node_ver,
                    Key k, const Value& val, u32 depth, u32 match) {
    bool rs = false;
    parent->latch.upgrade_to_write_or_restart(parent_ver, rs);
    if (rs) return false;
    node->latch.upgrade_to_write_or_restart(node_ver, rs);
    if (rs) {
      parent->latch.write_unlock();
      return false;
    }

    u32 split_pos = depth + match;
    auto* split = static_cast<Node4*>(
        alloc_replacement(NodeType::N4, u8(split_pos), node, parent->meta.tier()));
    split->prefix_len = u8(match);
    std::memcpy(split->prefix, node->prefix, match);

    u8 node_byte = node->prefix[match];
    Leaf* fresh = alloc_leaf(k, val, split->meta.tier());
    touch_leaf(fresh);
    add_child(split, node_byte, node);
    add_child(split, key_byte(k, split_pos), fresh);

    // Shorten the surviving node's prefix past the split byte.
    u8 rest = u8(node->prefix_len - match - 1);
    std::memmove(node->prefix, node->prefix + match + 1, rest);
    node->prefix_len = rest;

    replace_child(parent, parent_byte, split);
    node->latch.write_unlock();
    parent->latch.write_unlock();
    return true;
  }

  bool grow_and_add(NodeBase* parent, u64 parent_ver, u8 parent_byte, NodeBase* node, u64 node_ver,
                    Key k, const Value& val, u8 b) {
    bool rs = false;
    parent->latch.upgrade_to_write_or_restart(parent_ver, rs);
    if (rs) return false;
    node->latch.upgrade_to_write_or_restart(node_ver, rs);
    if (rs) {
      parent->latch.write_unlock();
      return false;
    }

    NodeType next = node->type == NodeType::N4    ? NodeType::N16
                    : node->type == NodeType::N16 ? NodeType::N48
                                                  : NodeType::N256;
    NodeBase* grown = alloc_replacement(next, node->meta.level(), node, parent->meta.tier());
    migrate_entries(grown, node);
    Leaf* fresh = alloc_leaf(k, val, grown->meta.tier());
    touch_leaf(fresh);
    add_child(grown, b, fresh);

    replace_child(parent, parent_byte, grown);
    node->latch.write_unlock_obsolete();
    parent->latch.write_unlock();
    retire_node(node);
    return true;
  }

  // ---- remove -----------------------------------------------------------------------------------

  bool try_remove(Key k, bool& removed) {
    bool rs = false;
    removed = false;
    NodeBase* gp = nullptr;
    u64 gp_ver = 0;
    u8 gp_byte = 0;
    NodeBase* node = root();
    charge(node);
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return false;
    u32 depth = 0;

    for (;;) {
      u32 match = prefix_match(node, k, depth);
      bool miss = match < node->prefix_len;
      u32 pos = depth + node->prefix_len;
      u8 b = (miss || pos > 7) ? 0 : key_byte(k, pos);
      NodeBase* child = (miss || pos > 7) ? nullptr : find_child(node, b);
      node->latch.check_or_restart(v, rs);
      if (rs) return false;
      if (!child) return true;  // absent

      if (child->is_leaf()) {
        auto* leaf = static_cast<Leaf*>(child);
        charge(leaf);
        u64 lv = leaf->latch.read_lock_or_restart(rs);
        if (rs) return false;
        Key lk = leaf->key;
        node->latch.check_or_restart(v, rs);
        if (rs) return false;
        if (lk != k) {
          leaf->latch.check_or_restart(lv, rs);
          if (rs) return false;
          touch_leaf(leaf);
          return true;  // absent
        }
        return remove_leaf(gp, gp_ver, gp_byte, node, v, leaf, lv, b, removed);
      }

      charge(child);
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return false;
      node->latch.check_or_restart(v, rs);
      if (rs) return false;
      gp = node;
      gp_ver = v;
      gp_byte = b;
      node = child;
      v = cv;
      depth = pos + 1;
    }
  }

  static bool needs_shrink(NodeType t, u16 count_after) {
    switch (t) {
      case NodeType::N16: return count_after <= 3;
      case NodeType::N48: return count_after <= 12;
      case NodeType::N256: return count_after <= 40;
      default: return false;
    }
  }

  bool remove_leaf(NodeBase* gp, u64 gp_ver, u8 gp_byte, NodeBase* node, u64 node_ver, Leaf* leaf,
                   u64 leaf_ver, u8 leaf_byte, bool& removed) {
    bool rs = false;
    const bool is_root = node == root();
    u16 after = u16(node->count - 1);
    bool collapse = !is_root && node->type == NodeType::N4 && after == 1;
    bool shrink = !is_root && !collapse && needs_shrink(node->type, after);

    if (!collapse && !shrink) {
      node->latch.upgrade_to_write_or_restart(node_ver, rs);
      if (rs) return false;
      leaf->latch.upgrade_to_write_or_restart(leaf_ver, rs);
      if (rs) {
        node->latch.write_unlock();
        return false;
      }
      touch_leaf(leaf);
      remove_child(node, leaf_byte);
      leaf->latch.write_unlock_obsolete();
      node->latch.write_unlock();
      retire_node(leaf);
      removed = true;
      return true;
    }

    // Structural change rewires the grandparent's child slot.
    assert(gp != nullptr);  // node != root implies a tracked grandparent
    gp->latch.upgrade_to_write_or_restart(gp_ver, rs);
    if (rs) return false;
    node->latch.upgrade_to_write_or_restart(node_ver, rs);
    if (rs) {
      gp->latch.write_unlock();
      return false;
    }
    leaf->latch.upgrade_to_write_or_restart(leaf_ver, rs);
    if (rs) {
      node->latch.write_unlock();
      gp->latch.write_unlock();
      return false;
    }
    touch_leaf(leaf);

    if (collapse) {
      auto* n4 = static_cast<Node4*>(node);
      int keep = n4->children[0] == static_cast<NodeBase*>(leaf) ? 1 : 0;
      NodeBase* sibling = n4->children[keep];
      u8 sibling_byte = n4->keys[keep];
      if (sibling->is_leaf()) {
        // A leaf carries its full key; the compressed path vanishes with node.
        replace_child(gp, gp_byte, sibling);
      } else {
        if (!sibling->latch.try_write_lock()) {
          leaf->latch.write_unlock();
          node->latch.write_unlock();
          gp->latch.write_unlock();
          return false;
        }
        // sibling.prefix = node.prefix ++ sibling_byte ++ sibling.prefix
        u8 merged[8];
        u8 len = 0;
        for (u8 i = 0; i < node->prefix_len; i++) merged[len++] = node->prefix[i];
        merged[len++] = sibling_byte;
        for (u8 i = 0; i < sibling->prefix_len; i++) merged[len++] = sibling->prefix[i];
        std::memcpy(sibling->prefix, merged, len);
        sibling->prefix_len = len;
        replace_child(gp, gp_byte, sibling);
        sibling->latch.write_unlock();
      }
      leaf->latch.write_unlock_obsolete();
      node->latch.write_unlock_obsolete();
      gp->latch.write_unlock();
      retire_node(leaf);
      retire_node(node);
      removed = true;
      return true;
    }

    // Shrink to the next smaller variant (a fresh block, re-placed).
    NodeType smaller = node->type == NodeType::N256  ? NodeType::N48
                       : node->type == NodeType::N48 ? NodeType::N16
                                                     : NodeType::N4;
    NodeBase* fresh = alloc_replacement(smaller, node->meta.level(), node, gp->meta.tier());
    remove_child(node, leaf_byte);
    migrate_entries(fresh, node);
    replace_child(gp, gp_byte, fresh);
    leaf->latch.write_unlock_obsolete();
    node->latch.write_unlock_obsolete();
    gp->latch.write_unlock();
    retire_node(leaf);
    retire_node(node);
    removed = true;
    return true;
  }

  // ---- ordered seek (leaf iteration) ----------------------------------------------------------

  // Smallest child byte >= b; -1 when none.
  static int min_child_byte_ge(const NodeBase* n, int b) {
    int best = -1;
    switch (n->type) {
      case NodeType::N4: {
        auto* v = static_cast<const Node4*>(n);
        for (int i = 0; i < n->count; i++)
          if (v->keys[i] >= b && (best < 0 || v->keys[i] < best)) best = v->keys[i];
        break;
      }
      case NodeType::N16: {
        auto* v = static_cast<const Node16*>(n);
        for (int i = 0; i < n->count; i++)
          if (v->keys[i] >= b && (best < 0 || v->keys[i] < best)) best = v->keys[i];
        break;
      }
      case NodeType::N48: {
        auto* v = static_cast<const Node48*>(n);
        for (int i = std::max(b, 0); i < 256; i++)
          if (v->child_index[i] != 0xff) return i;
        break;
      }
      case NodeType::N256: {
        auto* v = static_cast<const Node256*>(n);
        for (int i = std::max(b, 0); i < 256; i++)
          if (v->children[i]) return i;
        break;
      }
      case NodeType::Leaf:
        break;
    }
    return best;
  }

  // Leftmost leaf of the subtree under node; null for an empty subtree.
  Leaf* min_leaf(NodeBase* node, bool& rs) {
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return nullptr;
    for (;;) {
      if (node->is_leaf()) return static_cast<Leaf*>(node);
      int b = min_child_byte_ge(node, 0);
      NodeBase* child = b < 0 ? nullptr : find_child(node, u8(b));
      node->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      if (!child) return nullptr;
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return nullptr;
      node->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      node = child;
      v = cv;
    }
  }

  // Leftmost leaf with key >= bound, or null when the tree has none. Sets rs
  // on any version conflict; the caller restarts.
  Leaf* seek_leaf_ge(Key bound, bool& rs) {
    rs = false;
    struct Pending {
      NodeBase* node;
      int from_byte;  // resume scanning children at this byte (untight)
    };
    Pending stack[12];
    int top = 0;

    NodeBase* node = root();
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return nullptr;
    u32 depth = 0;
    bool tight = true;

    while (tight) {
      if (node->is_leaf()) {
        auto* leaf = static_cast<Leaf*>(node);
        Key lk = leaf->key;
        leaf->latch.check_or_restart(v, rs);
        if (rs) return nullptr;
        if (lk >= bound) return leaf;
        break;  // below bound: backtrack
      }
      int cmp = 0;
      for (u32 i = 0; i < node->prefix_len; i++) {
        u8 pb = node->prefix[i];
        u8 kb = key_byte(bound, depth + i);
        if (pb != kb) {
          cmp = pb < kb ? -1 : 1;
          break;
        }
      }
      node->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      if (cmp > 0) {
        // Whole subtree sits above the bound.
        if (top < 12) stack[top++] = {node, 0};
        break;
      }
      if (cmp < 0) break;  // whole subtree below the bound

      u32 pos = depth + node->prefix_len;
      u8 kb = pos > 7 ? 0 : key_byte(bound, pos);
      int b = min_child_byte_ge(node, kb);
      if (b < 0) break;  // exhausted here
      if (b > kb) {
        if (top < 12) stack[top++] = {node, b};
        break;
      }
      NodeBase* child = find_child(node, u8(b));
      node->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      if (!child) {
        rs = true;  // inconsistent read
        return nullptr;
      }
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return nullptr;
      node->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      if (top < 12) stack[top++] = {node, b + 1};
      node = child;
      v = cv;
      depth = pos + 1;
    }

    // Untight phase: pop resumption points; any leaf found is >= bound.
    while (top > 0) {
      Pending p = stack[--top];
      bool prs = false;
      u64 pv = p.node->latch.read_lock_or_restart(prs);
      if (prs) {
        rs = true;
        return nullptr;
      }
      int b = p.from_byte > 255 ? -1 : min_child_byte_ge(p.node, p.from_byte);
      NodeBase* child = b < 0 ? nullptr : find_child(p.node, u8(b));
      p.node->latch.check_or_restart(pv, prs);
      if (prs) {
        rs = true;
        return nullptr;
      }
      if (!child) continue;
      if (top < 12) stack[top++] = {p.node, b + 1};
      Leaf* l = min_leaf(child, rs);
      if (rs) return nullptr;
      if (l) return l;
    }
    return nullptr;
  }

  // ---- relocation --------------------------------------------------------------------------------

  struct ParentFind {
    NodeBase* parent = nullptr;
    bool root_match = false;
    u8 byte = 0;
  };

  ParentFind find_parent_raw(NodeBase* x, Key key, bool& rs) {
    ParentFind out;
    rs = false;
    NodeBase* node = root();
    if (node == x) {
      out.root_match = true;
      return out;
    }
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return out;
    u32 depth = 0;
    while (!node->is_leaf()) {
      u32 match = prefix_match(node, key, depth);
      if (match < node->prefix_len) return out;  // stale
      u32 pos = depth + node->prefix_len;
      if (pos > 7) return out;
      u8 b = key_byte(key, pos);
      NodeBase* child = find_child(node, b);
      node->latch.check_or_restart(v, rs);
      if (rs) return out;
      if (!child) return out;  // stale
      if (child == x) {
        out.parent = node;
        out.byte = b;
        return out;
      }
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return out;
      node->latch.check_or_restart(v, rs);
      if (rs) return out;
      node = child;
      v = cv;
      depth = pos + 1;
    }
    return out;
  }

  RelocateResult relocate_once(NodeBase* x, Key key, TierId target, bool require_children_slow) {
    bool rs = false;
    if (x->latch.is_obsolete()) return {RelocateStatus::Stale, nullptr};
    if (x->meta.tier() == target) return {RelocateStatus::Stale, nullptr};

    ParentFind f = find_parent_raw(x, key, rs);
    if (rs) return {RelocateStatus::Busy, nullptr};
    if (!f.parent && !f.root_match) return {RelocateStatus::Stale, nullptr};

    if (f.parent) {
      if (!f.parent->latch.try_write_lock()) return {RelocateStatus::Busy, nullptr};
      if (find_child(f.parent, f.byte) != x) {
        f.parent->latch.write_unlock();
        return {RelocateStatus::Busy, nullptr};
      }
    }
    if (!x->latch.try_write_lock()) {
      if (f.parent) f.parent->latch.write_unlock();
      return {RelocateStatus::Busy, nullptr};
    }
    if (f.root_match && root() != x) {  // lost a root-swap race
      x->latch.write_unlock();
      return {RelocateStatus::Stale, nullptr};
    }
    auto unlock_all = [&] {
      x->latch.write_unlock();
      if (f.parent) f.parent->latch.write_unlock();
    };

    if (require_children_slow && !x->is_leaf() && has_fast_child(x)) {
      unlock_all();
      return {RelocateStatus::GuardFailed, nullptr};
    }

    u32 size = node_bytes(x->type);
    auto prio = f.root_match ? TieredHeap::Priority::Structural : TieredHeap::Priority::Normal;
    TierHandle h = heap_.alloc(size, target, prio);
    if (!h) {
      unlock_all();
      return {target == TierId::Fast ? RelocateStatus::FastExhausted : RelocateStatus::Busy,
              nullptr};
    }

    NodeBase* fresh = construct(h.ptr, x->type);
    fresh->type = x->type;
    fresh->meta.init(x->meta.level(), h.tier);
    copy_payload(fresh, x);
    level_bytes_[x->meta.level()].fetch_add(size, std::memory_order_relaxed);

    x->latch.set_migrating();
    if (f.root_match)
      root_.store(static_cast<Node256*>(fresh), std::memory_order_release);
    else
      replace_child(f.parent, f.byte, fresh);

    x->latch.write_unlock_obsolete();
    if (f.parent) f.parent->latch.write_unlock();
    retire_node(x);
    return {RelocateStatus::Done, f.parent};
  }

  // ---- structural checking --------------------------------------------------------------------------

  void check_node(const NodeBase* n, u32 depth, u8 path[8], bool check_sb, TierId parent_tier,
                  bool is_root) const {
    if (check_sb && n->meta.tier() == TierId::Fast && parent_tier != TierId::Fast)
      throw std::logic_error("single-boundary violation");
    if (n->latch.is_obsolete()) throw std::logic_error("reachable node is obsolete");
    if (n->latch.is_migrating()) throw std::logic_error("reachable node marked migrating");
    if (n->is_leaf()) {
      auto* l = static_cast<const Leaf*>(n);
      if (n->meta.level() != kLeafLevel) throw std::logic_error("leaf level byte wrong");
      for (u32 i = 0; i < depth; i++)
        if (key_byte(l->key, i) != path[i]) throw std::logic_error("leaf key off its path");
      return;
    }
    u32 pos = depth + n->prefix_len;
    if (pos > 7) throw std::logic_error("inner node too deep");
    if (n->meta.level() != pos) throw std::logic_error("inner level byte wrong");
    switch (n->type) {
      case NodeType::N4:
        if (!is_root && (n->count < 2 || n->count > 4)) throw std::logic_error("Node4 occupancy");
        break;
      case NodeType::N16:
        if (n->count < 4 || n->count > 16) throw std::logic_error("Node16 occupancy");
        break;
      case NodeType::N48:
        if (n->count < 13 || n->count > 48) throw std::logic_error("Node48 occupancy");
        break;
      case NodeType::N256:
        if (!is_root && n->count < 41) throw std::logic_error("Node256 occupancy");
        break;
      default:
        throw std::logic_error("bad node type");
    }
    for (u32 i = 0; i < n->prefix_len; i++) path[depth + i] = n->prefix[i];
    for (int b = 0; b < 256; b++) {
      NodeBase* c = find_child(n, u8(b));
      if (!c) continue;
      path[pos] = u8(b);
      check_node(c, pos + 1, path, check_sb, n->meta.tier(), false);
    }
  }

  TieredHeap& heap_;
  EpochManager& ebr_;
  PlacementHooks& hooks_;
  AccessStats access_stats_;

  std::atomic<Node256*> root_{nullptr};
  std::array<std::atomic<u64>, 16> level_bytes_{};
};

template <typename Value>
class ArtAdapter final : public TreeAdapter {
 public:
  using Tree = AdaptiveRadixTree<Value>;
  using NB = typename Tree::NodeBase;

  explicit ArtAdapter(Tree& tree) : tree_(tree) {}

  void for_each_leaf(const std::function<bool(const LeafView&)>& visit) override {
    tree_.for_each_leaf(visit);
  }
  bool is_leaf(NodeRef n) const override { return node(n)->is_leaf(); }
  TierId tier_of(NodeRef n) const override { return node(n)->meta.tier(); }
  u16 freq_of(NodeRef n) const override {
    return static_cast<typename Tree::Leaf*>(n)->freq.load();
  }
  void halve_freq(NodeRef n) override { static_cast<typename Tree::Leaf*>(n)->freq.halve(); }
  u32 depth_of(NodeRef n) const override { return node(n)->meta.level(); }
  u32 height() const override { return tree_.height(); }
  NodeRef parent_of(NodeRef n, u64 repr_key) override {
    return tree_.parent_of(node(n), repr_key);
  }
  PathProbe first_slow_on_path(u64 key) override { return tree_.first_slow_on_path(key); }
  RelocateResult relocate(NodeRef n, u64 repr_key, TierId target,
                          bool require_children_slow) override {
    return tree_.relocate(node(n), repr_key, target, require_children_slow);
  }
  u64 footprint_at_depth(u32 depth) const override { return tree_.footprint_at_depth(depth); }
  u64 leaf_node_bytes() const override { return sizeof(typename Tree::Leaf); }

 private:
  static NB* node(NodeRef n) { return static_cast<NB*>(n); }

  Tree& tree_;
};

}  // namespace treetier

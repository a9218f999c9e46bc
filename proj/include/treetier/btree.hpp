#pragma once

#include <array>
#include <cassert>
#include <cstring>
#include <optional>
#include <vector>

#include "treetier/adapter.hpp"
#include "treetier/epoch.hpp"
#include "treetier/hooks.hpp"
#include "treetier/node_meta.hpp"
#include "treetier/tiered_heap.hpp"

namespace treetier {

// Concurrent order-16 B+tree (values in leaves, singly linked leaves).
// Readers are optimistic with version validation; writers restart on
// conflicts. Node metadata stores height-above-leaf (stable across root
// splits); depth = root height - node height.
template <typename Value>
class BPlusTree {
 public:
  using Key = u64;
  static constexpr int kMaxKeys = 16;
  // Leaf split is an even copy-up (8/8); inner splits push the middle key up,
  // so one side of a fresh inner split holds 7 keys.
  static constexpr int kMinLeafKeys = 8;
  static constexpr int kMinInnerKeys = 7;

  struct NodeBase {
    VersionLatch latch;
    NodeMeta meta;  // level = height above leaf; 0 = leaf
    u16 count = 0;

    bool is_leaf() const { return meta.level() == 0; }
  };

  static int min_keys(const NodeBase* n) { return n->is_leaf() ? kMinLeafKeys : kMinInnerKeys; }

  struct Inner : NodeBase {
    Key keys[kMaxKeys];
    NodeBase* children[kMaxKeys + 1];

    // Index of the child covering k: first separator strictly greater than k.
    int child_index(Key k) const {
      int lo = 0, hi = this->count;
      while (lo < hi) {
        int mid = (lo + hi) / 2;
        if (k < keys[mid])
          hi = mid;
        else
          lo = mid + 1;
      }
      return lo;
    }
  };

  struct Leaf : NodeBase {
    AccessCounter freq;
    Leaf* next = nullptr;
    Key keys[kMaxKeys];
    Value values[kMaxKeys];
  };

  struct AccessStats {
    std::atomic<u64> leaf_fast{0};
    std::atomic<u64> leaf_slow{0};
  };

  BPlusTree(TieredHeap& heap, EpochManager& ebr, PlacementHooks& hooks)
      : heap_(heap), ebr_(ebr), hooks_(hooks) {
    Leaf* l = alloc_leaf(0, TierId::Fast, /*root=*/true);
    root_.store(l, std::memory_order_release);
    root_height_.store(0, std::memory_order_release);
  }

  ~BPlusTree() { destroy_subtree(root_.load(), root_height_.load()); }

  BPlusTree(const BPlusTree&) = delete;

  // ---- point operations -------------------------------------------------

  bool get(Key k, Value& out) {
    EpochManager::Guard g(ebr_);
    for (;;) {
      bool rs = false;
      auto [leaf, v] = descend_to_leaf(k, rs, /*charge=*/true);
      if (rs) continue;
      int pos = leaf_lower_bound(leaf, k);
      bool found = pos < leaf->count && leaf->keys[pos] == k;
      Value val;
      if (found) val = leaf->values[pos];
      leaf->latch.check_or_restart(v, rs);
      if (rs) continue;
      touch_leaf(leaf);
      if (found) out = val;
      return found;
    }
  }

  void insert(Key k, const Value& v) { upsert(k, v, /*only_update=*/false); }

  bool update(Key k, const Value& v) {
    EpochManager::Guard g(ebr_);
    for (;;) {
      bool rs = false;
      auto [leaf, ver] = descend_to_leaf(k, rs, /*charge=*/true);
      if (rs) continue;
      int pos = leaf_lower_bound(leaf, k);
      bool found = pos < leaf->count && leaf->keys[pos] == k;
      if (!found) {
        leaf->latch.check_or_restart(ver, rs);
        if (rs) continue;
        touch_leaf(leaf);
        return false;
      }
      leaf->latch.upgrade_to_write_or_restart(ver, rs);
      if (rs) continue;
      leaf->values[pos] = v;
      touch_leaf(leaf);
      leaf->latch.write_unlock();
      return true;
    }
  }

  bool remove(Key k) {
    bool removed = false;
    {
      EpochManager::Guard g(ebr_);
      for (;;) {
        bool rs = false;
        auto [leaf, ver] = descend_to_leaf(k, rs, /*charge=*/true);
        if (rs) continue;
        int pos = leaf_lower_bound(leaf, k);
        bool found = pos < leaf->count && leaf->keys[pos] == k;
        if (!found) {
          leaf->latch.check_or_restart(ver, rs);
          if (rs) continue;
          touch_leaf(leaf);
          return false;
        }
        leaf->latch.upgrade_to_write_or_restart(ver, rs);
        if (rs) continue;
        for (int i = pos; i < leaf->count - 1; i++) {
          leaf->keys[i] = leaf->keys[i + 1];
          leaf->values[i] = leaf->values[i + 1];
        }
        leaf->count--;
        touch_leaf(leaf);
        leaf->latch.write_unlock();
        removed = true;
        break;
      }
    }
    if (removed) repair(k);
    return removed;
  }

  // Walks leaf links from the leaf containing `start`, collecting up to
  // `count` pairs. Each touched leaf is charged and frequency-incremented
  // once.
  std::vector<std::pair<Key, Value>> scan(Key start, int count) {
    EpochManager::Guard g(ebr_);
    std::vector<std::pair<Key, Value>> out;
    Key cursor = start;
    bool done = false;
    while (!done && int(out.size()) < count) {
      bool rs = false;
      auto [leaf, ver] = descend_to_leaf(cursor, rs, /*charge=*/true);
      if (rs) continue;
      for (;;) {
        int n = leaf->count;
        Key keys[kMaxKeys];
        Value vals[kMaxKeys];
        int taken = 0;
        for (int i = 0; i < n && int(out.size()) + taken < count; i++) {
          if (leaf->keys[i] >= cursor) {
            keys[taken] = leaf->keys[i];
            vals[taken] = leaf->values[i];
            taken++;
          }
        }
        Key maxk = n ? leaf->keys[n - 1] : cursor;
        Leaf* next = leaf->next;
        leaf->latch.check_or_restart(ver, rs);
        if (rs) break;  // re-descend at cursor
        touch_leaf(leaf);
        for (int i = 0; i < taken; i++) out.emplace_back(keys[i], vals[i]);
        if (int(out.size()) >= count || next == nullptr || maxk == ~0ull) {
          done = true;
          break;
        }
        cursor = maxk + 1;
        leaf = next;
        charge(leaf);
        ver = leaf->latch.read_lock_or_restart(rs);
        if (rs) break;
      }
    }
    return out;
  }

  // ---- adapter support ----------------------------------------------------

  u32 height() const { return root_height_.load(std::memory_order_acquire); }
  NodeBase* root() const { return root_.load(std::memory_order_acquire); }
  AccessStats& access_stats() { return access_stats_; }
  TieredHeap& heap() { return heap_; }
  EpochManager& ebr() { return ebr_; }

  u32 depth_of(const NodeBase* n) const {
    u32 h = height();
    u8 lvl = n->meta.level();
    return lvl >= h ? 0 : h - lvl;
  }

  u64 footprint_at_depth(u32 depth) const {
    u32 h = height();
    if (depth > h) return 0;
    return level_bytes_[h - depth].load(std::memory_order_relaxed);
  }

  static u32 node_bytes(const NodeBase* n) { return n->is_leaf() ? sizeof(Leaf) : sizeof(Inner); }

  // Leaf-order iteration; see TreeAdapter::for_each_leaf for the contract.
  void for_each_leaf(const std::function<bool(const LeafView&)>& visit) {
    EpochManager::Guard g(ebr_);
    Key cursor = 0;
    bool at_start = true;
    for (;;) {
      bool rs = false;
      auto [leaf, ver] = descend_to_leaf(cursor, rs, /*charge=*/false);
      if (rs) continue;
      for (;;) {
        int n = leaf->count;
        Key maxk = n ? leaf->keys[n - 1] : 0;
        Key repr = n ? leaf->keys[0] : 0;
        u16 freq = leaf->freq.load();
        TierId tier = leaf->meta.tier();
        Leaf* next = leaf->next;
        leaf->latch.check_or_restart(ver, rs);
        if (rs) break;
        bool fresh = at_start || n == 0 || maxk >= cursor;
        if (fresh && !visit(LeafView{leaf, repr, freq, tier})) return;
        at_start = false;
        if (next == nullptr || (n && maxk == ~0ull)) return;
        cursor = n ? maxk + 1 : cursor;
        leaf = next;
        ver = leaf->latch.read_lock_or_restart(rs);
        if (rs) break;
      }
    }
  }

  NodeBase* parent_of(NodeBase* x, Key key) {
    EpochManager::Guard g(ebr_);
    for (int attempt = 0; attempt < 8; attempt++) {
      bool rs = false;
      NodeBase* parent = find_parent_optimistic(x, key, rs);
      if (!rs) return parent;
    }
    return nullptr;
  }

  PathProbe first_slow_on_path(Key key) {
    EpochManager::Guard g(ebr_);
    for (int attempt = 0; attempt < 8; attempt++) {
      bool rs = false;
      u64 rv = root_latch_.read_lock_or_restart(rs);
      if (rs) continue;
      NodeBase* node = root_.load(std::memory_order_acquire);
      u64 v = node->latch.read_lock_or_restart(rs);
      if (rs) continue;
      root_latch_.check_or_restart(rv, rs);
      if (rs) continue;
      for (;;) {
        if (node->meta.tier() == TierId::Slow) return PathProbe{node, node->is_leaf()};
        if (node->is_leaf()) return PathProbe{};
        auto* in = static_cast<Inner*>(node);
        NodeBase* child = in->children[in->child_index(key)];
        in->latch.check_or_restart(v, rs);
        if (rs) break;
        u64 cv = child->latch.read_lock_or_restart(rs);
        if (rs) break;
        in->latch.check_or_restart(v, rs);
        if (rs) break;
        node = child;
        v = cv;
      }
    }
    return PathProbe{};
  }

  bool has_fast_child(NodeBase* n) const {
    if (n->is_leaf()) return false;
    auto* in = static_cast<const Inner*>(n);
    int c = in->count;
    for (int i = 0; i <= c && i <= kMaxKeys; i++)
      if (in->children[i] && in->children[i]->meta.tier() == TierId::Fast) return true;
    return false;
  }

  RelocateResult relocate(NodeBase* x, Key key, TierId target, bool require_children_slow) {
    EpochManager::Guard g(ebr_);
    for (int attempt = 0; attempt < 6; attempt++) {
      RelocateResult r = relocate_once(x, key, target, require_children_slow);
      if (r.status != RelocateStatus::Busy) return r;
    }
    return RelocateResult{RelocateStatus::Busy, nullptr};
  }

  // ---- testing helpers ----------------------------------------------------

  // Single-threaded structural check; call at quiescent points only.
  void check_structure(bool check_single_boundary = true) const {
    const NodeBase* r = root_.load();
    u32 h = root_height_.load();
    check_node(r, h, nullptr, nullptr, true, check_single_boundary, r->meta.tier());
    check_leaf_chain();
  }

  u64 count_keys() {
    u64 n = 0;
    for_each_leaf([&](const LeafView& lv) {
      auto* l = static_cast<Leaf*>(lv.node);
      n += l->count;
      return true;
    });
    return n;
  }

 private:
  // ---- allocation ---------------------------------------------------------

  Leaf* alloc_leaf(u32 depth, TierId parent_tier, bool root = false) {
    TierId want = hooks_.choose(depth, /*leaf=*/true, parent_tier, sizeof(Leaf));
    TierHandle h = raw_alloc(sizeof(Leaf), want, root);
    Leaf* l = new (h.ptr) Leaf();
    l->meta.init(0, h.tier);
    level_bytes_[0].fetch_add(sizeof(Leaf), std::memory_order_relaxed);
    return l;
  }

  Inner* alloc_inner(u8 height, u32 depth, TierId parent_tier, bool root = false) {
    TierId want = hooks_.choose(depth, /*leaf=*/false, parent_tier, sizeof(Inner));
    TierHandle h = raw_alloc(sizeof(Inner), want, root);
    Inner* in = new (h.ptr) Inner();
    in->meta.init(height, h.tier);
    level_bytes_[height].fetch_add(sizeof(Inner), std::memory_order_relaxed);
    return in;
  }

  TierHandle raw_alloc(u32 size, TierId want, bool root) {
    auto prio = root ? TieredHeap::Priority::Structural : TieredHeap::Priority::Normal;
    TierHandle h = heap_.alloc(size, want, prio);
    if (!h && want == TierId::Fast) h = heap_.alloc(size, TierId::Slow, prio);
    if (!h) throw std::bad_alloc();
    return h;
  }

  void retire_node(NodeBase* n) {
    u32 size = node_bytes(n);
    level_bytes_[n->meta.level()].fetch_sub(size, std::memory_order_relaxed);
    TierHandle h{n, size, n->meta.tier()};
    heap_.retire(h);
    TieredHeap* heap = &heap_;
    ebr_.retire([heap, h] { heap->recycle(h); });
  }

  void destroy_subtree(NodeBase* n, u32 h) {
    if (h > 0) {
      auto* in = static_cast<Inner*>(n);
      for (int i = 0; i <= in->count; i++) destroy_subtree(in->children[i], h - 1);
    }
    u32 size = node_bytes(n);
    level_bytes_[n->meta.level()].fetch_sub(size, std::memory_order_relaxed);
    heap_.free(TierHandle{n, size, n->meta.tier()});
  }

  // ---- traversal ----------------------------------------------------------

  void charge(const NodeBase* n) {
    heap_.record_access(n->meta.tier());
  }

  void touch_leaf(Leaf* leaf) {
    TierId t = leaf->meta.tier();
    (t == TierId::Fast ? access_stats_.leaf_fast : access_stats_.leaf_slow)
        .fetch_add(1, std::memory_order_relaxed);
    if (hooks_.track_accesses()) leaf->freq.increment();
  }

  static int leaf_lower_bound(const Leaf* leaf, Key k) {
    int lo = 0, hi = leaf->count;
    while (lo < hi) {
      int mid = (lo + hi) / 2;
      if (leaf->keys[mid] < k)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  // Optimistic descent; on success returns the read-validated leaf and its
  // version. Sets rs on any conflict.
  std::pair<Leaf*, u64> descend_to_leaf(Key k, bool& rs, bool charge_path) {
    rs = false;
    u64 rv = root_latch_.read_lock_or_restart(rs);
    if (rs) return {nullptr, 0};
    NodeBase* node = root_.load(std::memory_order_acquire);
    if (charge_path) charge(node);
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return {nullptr, 0};
    root_latch_.check_or_restart(rv, rs);
    if (rs) return {nullptr, 0};
    while (!node->is_leaf()) {
      auto* in = static_cast<Inner*>(node);
      NodeBase* child = in->children[in->child_index(k)];
      in->latch.check_or_restart(v, rs);
      if (rs) return {nullptr, 0};
      if (charge_path) charge(child);
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return {nullptr, 0};
      in->latch.check_or_restart(v, rs);
      if (rs) return {nullptr, 0};
      node = child;
      v = cv;
    }
    return {static_cast<Leaf*>(node), v};
  }

  // ---- insert -------------------------------------------------------------

  void upsert(Key k, const Value& v, bool only_update) {
    EpochManager::Guard g(ebr_);
    for (;;) {
      bool rs = false;
      u64 rv = root_latch_.read_lock_or_restart(rs);
      if (rs) continue;
      NodeBase* node = root_.load(std::memory_order_acquire);
      charge(node);
      u64 ver = node->latch.read_lock_or_restart(rs);
      if (rs) continue;
      root_latch_.check_or_restart(rv, rs);
      if (rs) continue;

      // Full root: split under the root latch and retry.
      if (node->count == kMaxKeys) {
        split_root(node, ver, rv);
        continue;
      }

      Inner* parent = nullptr;
      u64 parent_ver = 0;
      bool restart = false;
      while (!node->is_leaf()) {
        auto* in = static_cast<Inner*>(node);
        NodeBase* child = in->children[in->child_index(k)];
        in->latch.check_or_restart(ver, rs);
        if (rs) {
          restart = true;
          break;
        }
        charge(child);
        u64 cver = child->latch.read_lock_or_restart(rs);
        if (rs) {
          restart = true;
          break;
        }
        in->latch.check_or_restart(ver, rs);
        if (rs) {
          restart = true;
          break;
        }
        if (child->count == kMaxKeys) {
          // Eager split keeps a one-pair lock footprint; restart afterwards.
          if (split_child(in, ver, child, cver, k)) {
          }
          restart = true;
          break;
        }
        parent = in;
        parent_ver = ver;
        node = child;
        ver = cver;
      }
      if (restart) continue;

      auto* leaf = static_cast<Leaf*>(node);
      int pos = leaf_lower_bound(leaf, k);
      bool exists = pos < leaf->count && leaf->keys[pos] == k;
      if (only_update && !exists) {
        leaf->latch.check_or_restart(ver, rs);
        if (rs) continue;
        touch_leaf(leaf);
        return;
      }
      leaf->latch.upgrade_to_write_or_restart(ver, rs);
      if (rs) continue;
      (void)parent;
      (void)parent_ver;
      if (exists) {
        leaf->values[pos] = v;
      } else {
        for (int i = leaf->count; i > pos; i--) {
          leaf->keys[i] = leaf->keys[i - 1];
          leaf->values[i] = leaf->values[i - 1];
        }
        leaf->keys[pos] = k;
        leaf->values[pos] = v;
        leaf->count++;
      }
      touch_leaf(leaf);
      leaf->latch.write_unlock();
      return;
    }
  }

  // Splits a full child of `in`. Returns true if the split happened.
  bool split_child(Inner* in, u64 in_ver, NodeBase* child, u64 child_ver, Key) {
    bool rs = false;
    in->latch.upgrade_to_write_or_restart(in_ver, rs);
    if (rs) return false;
    child->latch.upgrade_to_write_or_restart(child_ver, rs);
    if (rs) {
      in->latch.write_unlock();
      return false;
    }
    assert(in->count < kMaxKeys);
    Key sep;
    NodeBase* right = split_node(child, depth_of(child), in->meta.tier(), sep);
    int pos = in->child_index(sep);
    for (int i = in->count; i > pos; i--) {
      in->keys[i] = in->keys[i - 1];
      in->children[i + 1] = in->children[i];
    }
    in->keys[pos] = sep;
    in->children[pos + 1] = right;
    in->count++;
    child->latch.write_unlock();
    in->latch.write_unlock();
    return true;
  }

  bool split_root(NodeBase* old_root, u64 ver, u64 root_ver) {
    bool rs = false;
    root_latch_.upgrade_to_write_or_restart(root_ver, rs);
    if (rs) return false;
    old_root->latch.upgrade_to_write_or_restart(ver, rs);
    if (rs) {
      root_latch_.write_unlock();
      return false;
    }
    u8 new_height = u8(old_root->meta.level() + 1);
    Inner* new_root = alloc_inner(new_height, 0, TierId::Fast, /*root=*/true);
    Key sep;
    NodeBase* right = split_node(old_root, 1, new_root->meta.tier(), sep);
    new_root->keys[0] = sep;
    new_root->children[0] = old_root;
    new_root->children[1] = right;
    new_root->count = 1;
    root_.store(new_root, std::memory_order_release);
    root_height_.store(new_height, std::memory_order_release);
    old_root->latch.write_unlock();
    root_latch_.write_unlock();
    return true;
  }

  // Moves the upper half of `node` into a fresh right sibling placed by the
  // layer rule; returns the separator for the parent.
  NodeBase* split_node(NodeBase* node, u32 depth, TierId parent_tier, Key& sep) {
    if (node->is_leaf()) {
      auto* l = static_cast<Leaf*>(node);
      Leaf* r = alloc_leaf(depth, parent_tier);
      int half = l->count / 2;
      r->count = u16(l->count - half);
      for (int i = 0; i < r->count; i++) {
        r->keys[i] = l->keys[half + i];
        r->values[i] = l->values[half + i];
      }
      l->count = u16(half);
      r->next = l->next;
      l->next = r;
      sep = r->keys[0];
      return r;
    }
    auto* in = static_cast<Inner*>(node);
    Inner* r = alloc_inner(in->meta.level(), depth, parent_tier);
    int mid = in->count / 2;
    sep = in->keys[mid];  // pushed up
    r->count = u16(in->count - mid - 1);
    for (int i = 0; i < r->count; i++) r->keys[i] = in->keys[mid + 1 + i];
    for (int i = 0; i <= r->count; i++) r->children[i] = in->children[mid + 1 + i];
    in->count = u16(mid);
    return r;
  }

  // ---- remove rebalancing ---------------------------------------------------

  // Top-down repair: each pass fixes the deepest underfull node on the search
  // path of k (or shrinks the root); loops until the path is clean.
  void repair(Key k) {
    EpochManager::Guard g(ebr_);
    for (int rounds = 0; rounds < 256; rounds++) {
      bool rs = false;
      if (!repair_pass(k, rs)) {
        if (!rs) return;  // clean path
      }
    }
  }

  // Returns true if it changed something; rs signals a retry.
  bool repair_pass(Key k, bool& rs) {
    rs = false;
    u64 rv = root_latch_.read_lock_or_restart(rs);
    if (rs) return false;
    NodeBase* node = root_.load(std::memory_order_acquire);
    u64 ver = node->latch.read_lock_or_restart(rs);
    if (rs) return false;
    root_latch_.check_or_restart(rv, rs);
    if (rs) return false;

    // Root shrink: an inner root with a single child.
    if (!node->is_leaf() && node->count == 0) {
      root_latch_.upgrade_to_write_or_restart(rv, rs);
      if (rs) return false;
      node->latch.upgrade_to_write_or_restart(ver, rs);
      if (rs) {
        root_latch_.write_unlock();
        return false;
      }
      auto* in = static_cast<Inner*>(node);
      NodeBase* child = in->children[0];
      root_.store(child, std::memory_order_release);
      root_height_.store(child->meta.level(), std::memory_order_release);
      in->latch.write_unlock_obsolete();
      root_latch_.write_unlock();
      retire_node(in);
      rs = true;  // re-examine the new root
      return true;
    }

    // Find the deepest underfull node on the path, remembering its parent.
    Inner* parent = nullptr;
    u64 parent_ver = 0;
    int child_pos = -1;
    NodeBase* victim = nullptr;
    Inner* victim_parent = nullptr;
    u64 victim_parent_ver = 0;
    int victim_pos = -1;

    while (!node->is_leaf()) {
      auto* in = static_cast<Inner*>(node);
      int pos = in->child_index(k);
      NodeBase* child = in->children[pos];
      in->latch.check_or_restart(ver, rs);
      if (rs) return false;
      u64 cver = child->latch.read_lock_or_restart(rs);
      if (rs) return false;
      in->latch.check_or_restart(ver, rs);
      if (rs) return false;
      if (child->count < min_keys(child)) {
        victim = child;
        victim_parent = in;
        victim_parent_ver = ver;
        victim_pos = pos;
      }
      parent = in;
      parent_ver = ver;
      child_pos = pos;
      node = child;
      ver = cver;
    }
    (void)parent;
    (void)parent_ver;
    (void)child_pos;
    if (!victim) return false;

    return fix_underfull(victim_parent, victim_parent_ver, victim, victim_pos, rs);
  }

  bool fix_underfull(Inner* parent, u64 parent_ver, NodeBase* child, int pos, bool& rs) {
    parent->latch.upgrade_to_write_or_restart(parent_ver, rs);
    if (rs) return false;
    if (parent->count < 1 || pos > parent->count || parent->children[pos] != child ||
        child->count >= min_keys(child)) {
      parent->latch.write_unlock();
      rs = true;
      return false;
    }
    // Lock the pair left-to-right.
    int left_pos = pos > 0 ? pos - 1 : pos;
    NodeBase* left = parent->children[left_pos];
    NodeBase* right = parent->children[left_pos + 1];
    if (!left->latch.try_write_lock()) {
      parent->latch.write_unlock();
      rs = true;
      return false;
    }
    if (!right->latch.try_write_lock()) {
      left->latch.write_unlock();
      parent->latch.write_unlock();
      rs = true;
      return false;
    }

    NodeBase* sib = (pos > 0) ? left : right;
    bool changed;
    if (sib->count > min_keys(sib))
      changed = borrow(parent, left_pos, left, right, pos > 0);
    else
      changed = merge(parent, left_pos, left, right);

    if (!changed) {
      right->latch.write_unlock();
      left->latch.write_unlock();
    }
    parent->latch.write_unlock();
    return changed;
  }

  // Moves one entry between siblings through the parent separator.
  bool borrow(Inner* parent, int left_pos, NodeBase* left, NodeBase* right, bool from_left) {
    if (left->is_leaf()) {
      auto* l = static_cast<Leaf*>(left);
      auto* r = static_cast<Leaf*>(right);
      if (from_left) {
        for (int i = r->count; i > 0; i--) {
          r->keys[i] = r->keys[i - 1];
          r->values[i] = r->values[i - 1];
        }
        r->keys[0] = l->keys[l->count - 1];
        r->values[0] = l->values[l->count - 1];
        r->count++;
        l->count--;
        parent->keys[left_pos] = r->keys[0];
      } else {
        l->keys[l->count] = r->keys[0];
        l->values[l->count] = r->values[0];
        l->count++;
        for (int i = 0; i < r->count - 1; i++) {
          r->keys[i] = r->keys[i + 1];
          r->values[i] = r->values[i + 1];
        }
        r->count--;
        parent->keys[left_pos] = r->keys[0];
      }
      l->latch.write_unlock();
      r->latch.write_unlock();
      return true;
    }
    auto* l = static_cast<Inner*>(left);
    auto* r = static_cast<Inner*>(right);
    if (from_left) {
      for (int i = r->count; i > 0; i--) r->keys[i] = r->keys[i - 1];
      for (int i = r->count + 1; i > 0; i--) r->children[i] = r->children[i - 1];
      r->keys[0] = parent->keys[left_pos];
      r->children[0] = l->children[l->count];
      parent->keys[left_pos] = l->keys[l->count - 1];
      r->count++;
      l->count--;
    } else {
      l->keys[l->count] = parent->keys[left_pos];
      l->children[l->count + 1] = r->children[0];
      parent->keys[left_pos] = r->keys[0];
      l->count++;
      for (int i = 0; i < r->count - 1; i++) r->keys[i] = r->keys[i + 1];
      for (int i = 0; i < r->count; i++) r->children[i] = r->children[i + 1];
      r->count--;
    }
    l->latch.write_unlock();
    r->latch.write_unlock();
    return true;
  }

  // Merges `right` into `left` and drops the separator at left_pos.
  bool merge(Inner* parent, int left_pos, NodeBase* left, NodeBase* right) {
    if (left->is_leaf()) {
      auto* l = static_cast<Leaf*>(left);
      auto* r = static_cast<Leaf*>(right);
      if (l->count + r->count > kMaxKeys) return false;
      for (int i = 0; i < r->count; i++) {
        l->keys[l->count + i] = r->keys[i];
        l->values[l->count + i] = r->values[i];
      }
      l->count = u16(l->count + r->count);
      l->next = r->next;
      // Fold the retired leaf's heat into the survivor.
      u32 f = l->freq.load() + r->freq.load();
      l->freq.store(u16(f > AccessCounter::kMax ? AccessCounter::kMax : f));
      remove_separator(parent, left_pos);
      r->latch.write_unlock_obsolete();
      l->latch.write_unlock();
      retire_node(r);
      return true;
    }
    auto* l = static_cast<Inner*>(left);
    auto* r = static_cast<Inner*>(right);
    if (l->count + r->count + 1 > kMaxKeys) return false;
    l->keys[l->count] = parent->keys[left_pos];
    for (int i = 0; i < r->count; i++) l->keys[l->count + 1 + i] = r->keys[i];
    for (int i = 0; i <= r->count; i++) l->children[l->count + 1 + i] = r->children[i];
    l->count = u16(l->count + r->count + 1);
    remove_separator(parent, left_pos);
    r->latch.write_unlock_obsolete();
    l->latch.write_unlock();
    retire_node(r);
    return true;
  }

  void remove_separator(Inner* parent, int left_pos) {
    for (int i = left_pos; i < parent->count - 1; i++) parent->keys[i] = parent->keys[i + 1];
    for (int i = left_pos + 1; i < parent->count; i++) parent->children[i] = parent->children[i + 1];
    parent->count--;
  }

  // ---- relocation -----------------------------------------------------------

  u32 depth_of_ptr(const NodeBase* n) const { return depth_of(n); }

  struct ParentFind {
    Inner* parent = nullptr;  // null: x is the root (root_match) or unreachable
    bool root_match = false;
    int pos = -1;
  };

  ParentFind find_parent_raw(NodeBase* x, Key key, bool& rs) {
    ParentFind out;
    rs = false;
    u64 rv = root_latch_.read_lock_or_restart(rs);
    if (rs) return out;
    NodeBase* node = root_.load(std::memory_order_acquire);
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return out;
    root_latch_.check_or_restart(rv, rs);
    if (rs) return out;
    if (node == x) {
      out.root_match = true;
      return out;
    }
    while (!node->is_leaf()) {
      auto* in = static_cast<Inner*>(node);
      int pos = in->child_index(key);
      NodeBase* child = in->children[pos];
      in->latch.check_or_restart(v, rs);
      if (rs) return out;
      if (child == x) {
        out.parent = in;
        out.pos = pos;
        return out;
      }
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return out;
      in->latch.check_or_restart(v, rs);
      if (rs) return out;
      node = child;
      v = cv;
    }
    return out;  // not found: stale
  }

  NodeBase* find_parent_optimistic(NodeBase* x, Key key, bool& rs) {
    ParentFind f = find_parent_raw(x, key, rs);
    return f.parent;
  }

  // Rightmost leaf strictly left of the leaf containing `key`; null if none.
  Leaf* find_pred_leaf(Key key, bool& rs) {
    rs = false;
    u64 rv = root_latch_.read_lock_or_restart(rs);
    if (rs) return nullptr;
    NodeBase* node = root_.load(std::memory_order_acquire);
    u64 v = node->latch.read_lock_or_restart(rs);
    if (rs) return nullptr;
    root_latch_.check_or_restart(rv, rs);
    if (rs) return nullptr;

    NodeBase* left_subtree = nullptr;  // deepest left-branch subtree root
    u64 left_ver = 0;
    while (!node->is_leaf()) {
      auto* in = static_cast<Inner*>(node);
      int pos = in->child_index(key);
      NodeBase* child = in->children[pos];
      NodeBase* left = pos > 0 ? in->children[pos - 1] : nullptr;
      in->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return nullptr;
      in->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      if (left) {
        left_subtree = left;
        left_ver = 0;  // re-read below when descending
      }
      node = child;
      v = cv;
    }
    if (!left_subtree) return nullptr;

    // Rightmost descent in the left subtree.
    node = left_subtree;
    v = node->latch.read_lock_or_restart(rs);
    if (rs) return nullptr;
    (void)left_ver;
    while (!node->is_leaf()) {
      auto* in = static_cast<Inner*>(node);
      NodeBase* child = in->children[in->count];
      in->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      u64 cv = child->latch.read_lock_or_restart(rs);
      if (rs) return nullptr;
      in->latch.check_or_restart(v, rs);
      if (rs) return nullptr;
      node = child;
      v = cv;
    }
    return static_cast<Leaf*>(node);
  }

  RelocateResult relocate_once(NodeBase* x, Key key, TierId target, bool require_children_slow) {
    bool rs = false;
    if (x->latch.is_obsolete()) return {RelocateStatus::Stale, nullptr};
    if (x->meta.tier() == target) return {RelocateStatus::Stale, nullptr};

    ParentFind f = find_parent_raw(x, key, rs);
    if (rs) return {RelocateStatus::Busy, nullptr};
    if (!f.parent && !f.root_match) return {RelocateStatus::Stale, nullptr};

    // Leaf relocation must also repoint the predecessor's next link.
    Leaf* pred = nullptr;
    if (x->is_leaf() && !f.root_match) {
      pred = find_pred_leaf(key, rs);
      if (rs) return {RelocateStatus::Busy, nullptr};
    }

    // Lock order: parent, predecessor (left of x), x. The predecessor is taken
    // with a try-lock so this can never deadlock against its own relocation.
    if (f.root_match) {
      if (!root_latch_.try_write_lock()) return {RelocateStatus::Busy, nullptr};
      if (root_.load(std::memory_order_acquire) != x) {
        root_latch_.write_unlock();
        return {RelocateStatus::Stale, nullptr};
      }
    } else {
      if (!f.parent->latch.try_write_lock()) return {RelocateStatus::Busy, nullptr};
      if (f.pos > f.parent->count || f.parent->children[f.pos] != x) {
        f.parent->latch.write_unlock();
        return {RelocateStatus::Busy, nullptr};
      }
    }
    auto unlock_parent = [&] {
      if (f.root_match)
        root_latch_.write_unlock();
      else
        f.parent->latch.write_unlock();
    };

    if (pred) {
      if (!pred->latch.try_write_lock()) {
        unlock_parent();
        return {RelocateStatus::Busy, nullptr};
      }
      if (pred->next != x) {
        pred->latch.write_unlock();
        unlock_parent();
        return {RelocateStatus::Busy, nullptr};
      }
    }
    if (!x->latch.try_write_lock()) {
      if (pred) pred->latch.write_unlock();
      unlock_parent();
      return {RelocateStatus::Busy, nullptr};
    }

    if (require_children_slow && !x->is_leaf() && has_fast_child(x)) {
      x->latch.write_unlock();
      if (pred) pred->latch.write_unlock();
      unlock_parent();
      return {RelocateStatus::GuardFailed, nullptr};
    }

    u32 size = node_bytes(x);
    auto prio =
        f.root_match ? TieredHeap::Priority::Structural : TieredHeap::Priority::Normal;
    TierHandle h = heap_.alloc(size, target, prio);
    if (!h) {
      x->latch.write_unlock();
      if (pred) pred->latch.write_unlock();
      unlock_parent();
      return {target == TierId::Fast ? RelocateStatus::FastExhausted : RelocateStatus::Busy,
              nullptr};
    }

    NodeBase* fresh;
    if (x->is_leaf()) {
      auto* old_leaf = static_cast<Leaf*>(x);
      Leaf* nl = new (h.ptr) Leaf();
      nl->count = old_leaf->count;
      nl->next = old_leaf->next;
      for (int i = 0; i < old_leaf->count; i++) {
        nl->keys[i] = old_leaf->keys[i];
        nl->values[i] = old_leaf->values[i];
      }
      nl->freq.store(old_leaf->freq.load());
      nl->meta.init(0, h.tier);
      fresh = nl;
    } else {
      auto* old_in = static_cast<Inner*>(x);
      Inner* ni = new (h.ptr) Inner();
      ni->count = old_in->count;
      for (int i = 0; i < old_in->count; i++) ni->keys[i] = old_in->keys[i];
      for (int i = 0; i <= old_in->count; i++) ni->children[i] = old_in->children[i];
      ni->meta.init(old_in->meta.level(), h.tier);
      fresh = ni;
    }
    level_bytes_[x->meta.level()].fetch_add(size, std::memory_order_relaxed);

    // Migration bit marks the in-flight window: set once the copy is about to
    // be published; it stays up through the obsolete transition.
    x->latch.set_migrating();
    if (pred) pred->next = static_cast<Leaf*>(fresh);
    if (f.root_match)
      root_.store(fresh, std::memory_order_release);
    else
      f.parent->children[f.pos] = fresh;

    x->latch.write_unlock_obsolete();
    if (pred) pred->latch.write_unlock();
    unlock_parent();
    retire_node(x);
    return {RelocateStatus::Done, f.root_match ? nullptr : static_cast<NodeBase*>(f.parent)};
  }

  // ---- structural checking ---------------------------------------------------

  void check_node(const NodeBase* n, u32 expect_height, const Key* lo, const Key* hi, bool is_root,
                  bool check_sb, TierId parent_tier) const {
    if (n->meta.level() != expect_height) throw std::logic_error("height mismatch");
    if (check_sb && n->meta.tier() == TierId::Fast && parent_tier != TierId::Fast)
      throw std::logic_error("single-boundary violation");
    if (n->latch.is_obsolete()) throw std::logic_error("reachable node is obsolete");
    if (n->latch.is_migrating()) throw std::logic_error("reachable node marked migrating");
    if (!is_root && n->count < min_keys(n)) throw std::logic_error("underfull node");
    if (n->count > kMaxKeys) throw std::logic_error("overfull node");
    const Key* keys = n->is_leaf() ? static_cast<const Leaf*>(n)->keys
                                   : static_cast<const Inner*>(n)->keys;
    for (int i = 0; i < n->count; i++) {
      if (i > 0 && !(keys[i - 1] < keys[i])) throw std::logic_error("key order violation");
      if (lo && keys[i] < *lo) throw std::logic_error("key below range");
      if (hi && keys[i] >= *hi) throw std::logic_error("key above range");
    }
    if (!n->is_leaf()) {
      auto* in = static_cast<const Inner*>(n);
      for (int i = 0; i <= in->count; i++) {
        const Key* clo = i == 0 ? lo : &in->keys[i - 1];
        const Key* chi = i == in->count ? hi : &in->keys[i];
        check_node(in->children[i], expect_height - 1, clo, chi, false, check_sb, n->meta.tier());
      }
    }
  }

  void check_leaf_chain() const {
    // Leftmost descent, then walk next links; must visit leaves in key order.
    const NodeBase* n = root_.load();
    while (!n->is_leaf()) n = static_cast<const Inner*>(n)->children[0];
    const Leaf* l = static_cast<const Leaf*>(n);
    u64 leaves = 0;
    Key last = 0;
    bool first = true;
    while (l) {
      leaves++;
      for (int i = 0; i < l->count; i++) {
        if (!first && !(last < l->keys[i])) throw std::logic_error("leaf chain order violation");
        last = l->keys[i];
        first = false;
      }
      l = l->next;
      if (leaves > (1ull << 40)) throw std::logic_error("leaf chain cycle");
    }
  }

  TieredHeap& heap_;
  EpochManager& ebr_;
  PlacementHooks& hooks_;
  AccessStats access_stats_;

  VersionLatch root_latch_;
  std::atomic<NodeBase*> root_{nullptr};
  std::atomic<u32> root_height_{0};
  std::array<std::atomic<u64>, 128> level_bytes_{};
};

// TreeAdapter over a BPlusTree instance.
template <typename Value>
class BTreeAdapter final : public TreeAdapter {
 public:
  using Tree = BPlusTree<Value>;
  using NB = typename Tree::NodeBase;

  explicit BTreeAdapter(Tree& tree) : tree_(tree) {}

  void for_each_leaf(const std::function<bool(const LeafView&)>& visit) override {
    tree_.for_each_leaf(visit);
  }
  bool is_leaf(NodeRef n) const override { return node(n)->is_leaf(); }
  TierId tier_of(NodeRef n) const override { return node(n)->meta.tier(); }
  u16 freq_of(NodeRef n) const override {
    return static_cast<typename Tree::Leaf*>(n)->freq.load();
  }
  void halve_freq(NodeRef n) override { static_cast<typename Tree::Leaf*>(n)->freq.halve(); }
  u32 depth_of(NodeRef n) const override { return tree_.depth_of(node(n)); }
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

#pragma once

#include <functional>

#include "treetier/tier.hpp"

namespace treetier {

// Opaque node reference. Engine code never interprets it; node storage is
// type-stable, so inspecting a stale ref through the owning adapter is safe.
using NodeRef = void*;

struct LeafView {
  NodeRef node = nullptr;
  u64 repr_key = 0;  // a key currently stored in the leaf, for re-traversal
  u16 freq = 0;
  TierId tier = TierId::Slow;
};

enum class RelocateStatus : u8 {
  Done,
  Stale,          // node retired/unreachable; drop the queue entry
  GuardFailed,    // internal node still has a fast child
  FastExhausted,  // no fast capacity for the copy
  Busy,           // lost a lock race; caller may retry
};

struct RelocateResult {
  RelocateStatus status = RelocateStatus::Stale;
  NodeRef parent = nullptr;  // live parent seen under lock (null for the root)
};

struct PathProbe {
  NodeRef node = nullptr;  // first slow node on the path; null if path is all fast
  bool is_leaf = false;
};

// The index-side contract the placement and background modules work through.
// Implementations reuse the tree's own traversal, locking and node-splitting
// machinery.
class TreeAdapter {
 public:
  virtual ~TreeAdapter() = default;

  // Visits leaves in key order; the visitor returns false to stop early.
  // Every leaf that existed for the whole scan is visited exactly once, and a
  // retired leaf is never yielded.
  virtual void for_each_leaf(const std::function<bool(const LeafView&)>& visit) = 0;

  virtual bool is_leaf(NodeRef n) const = 0;
  virtual TierId tier_of(NodeRef n) const = 0;
  virtual u16 freq_of(NodeRef n) const = 0;
  virtual void halve_freq(NodeRef n) = 0;
  virtual u32 depth_of(NodeRef n) const = 0;
  // Depth of the leaf level (root = 0).
  virtual u32 height() const = 0;

  // Re-locates the parent of `n` by descending for `repr_key`. Returns null if
  // `n` is the root or is no longer reachable.
  virtual NodeRef parent_of(NodeRef n, u64 repr_key) = 0;

  // First slow-tier node on the root-to-leaf path of `key` (the promotion
  // frontier under the single-boundary structure).
  virtual PathProbe first_slow_on_path(u64 key) = 0;

  // Allocate-copy-swap-retire relocation preserving all tree links. With
  // `require_children_slow`, an internal node with any fast child fails the
  // guard (checked while the node is locked, so it cannot race a child
  // promotion).
  virtual RelocateResult relocate(NodeRef n, u64 repr_key, TierId target,
                                  bool require_children_slow) = 0;

  // Logical bytes of nodes residing at the given depth (for the demotion
  // clamp) and the size of one leaf block (for P_hot initialization).
  virtual u64 footprint_at_depth(u32 depth) const = 0;
  virtual u64 leaf_node_bytes() const = 0;
};

}  // namespace treetier

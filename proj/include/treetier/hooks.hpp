#pragma once

#include <atomic>

#include "treetier/params.hpp"
#include "treetier/placement.hpp"
#include "treetier/tier.hpp"
#include "treetier/tiered_heap.hpp"

namespace treetier {

// Frontend placement decisions the indexes call on their allocation and
// access paths. One implementation per placement policy; the index code is
// policy-agnostic.
class PlacementHooks {
 public:
  virtual ~PlacementHooks() = default;
  // Initial tier for a new node (depth 0 with no parent passes parent_tier =
  // Fast). The returned tier is a request; allocation degrades to Slow when
  // fast memory is exhausted.
  virtual TierId choose(u32 depth, bool is_leaf, TierId parent_tier, u32 size) = 0;
  // Whether leaf access frequencies are tracked (off for static baselines).
  virtual bool track_accesses() const = 0;
};

// Layer-aware allocation with leaf-centric tracking (the managed policy).
class ManagedHooks final : public PlacementHooks {
 public:
  ManagedHooks(PlacementParams& params, TieredHeap& heap) : params_(params), heap_(heap) {}

  TierId choose(u32 depth, bool, TierId parent_tier, u32 size) override {
    if (depth == 0)
      // Root placement: fast whenever allocation-eligible; the structural
      // reserve decides headroom at alloc time.
      return params_.l_fast.load(std::memory_order_relaxed) >= 1 ? TierId::Fast : TierId::Slow;
    return choose_tier(depth, parent_tier, params_, heap_, size);
  }
  bool track_accesses() const override { return true; }

 private:
  PlacementParams& params_;
  TieredHeap& heap_;
};

// Baseline: every node goes fast with a fixed probability until the fast
// budget is consumed; no tracking, no migration.
class WeightedInterleaveHooks final : public PlacementHooks {
 public:
  WeightedInterleaveHooks(TieredHeap& heap, double fast_frac, u64 seed = 1)
      : heap_(heap), fast_frac_(fast_frac), state_(seed ? seed : 1) {}

  TierId choose(u32, bool, TierId, u32 size) override {
    if (heap_.free_bytes_fast() < size) return TierId::Slow;
    // splitmix64 step; thread-shared but only needs to be fair, not exact.
    u64 z = state_.fetch_add(0x9e3779b97f4a7c15ull, std::memory_order_relaxed) +
            0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    double u = double(z >> 11) * 0x1.0p-53;
    return u < fast_frac_ ? TierId::Fast : TierId::Slow;
  }
  bool track_accesses() const override { return false; }

 private:
  TieredHeap& heap_;
  double fast_frac_;
  std::atomic<u64> state_;
};

// Baseline: internal nodes fast while there is headroom, leaves slow.
class InternodeFastHooks final : public PlacementHooks {
 public:
  explicit InternodeFastHooks(TieredHeap& heap) : heap_(heap) {}

  TierId choose(u32, bool is_leaf, TierId, u32 size) override {
    if (is_leaf) return TierId::Slow;
    return heap_.free_bytes_fast() >= size ? TierId::Fast : TierId::Slow;
  }
  bool track_accesses() const override { return false; }

 private:
  TieredHeap& heap_;
};

}  // namespace treetier

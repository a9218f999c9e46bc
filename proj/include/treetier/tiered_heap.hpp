#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "treetier/tier.hpp"

namespace treetier {

struct DoubleFree : std::logic_error {
  DoubleFree() : std::logic_error("block freed twice") {}
};

// Identity of one allocated block. The tier of a block never changes; a node
// changes tier by being copied into a block of the other tier.
struct TierHandle {
  void* ptr = nullptr;
  u32 size = 0;
  TierId tier = TierId::Slow;

  explicit operator bool() const { return ptr != nullptr; }
  template <typename T>
  T* as() const { return static_cast<T*>(ptr); }
};

// Two slab arenas (one per tier) with per-size-class free lists and logical
// byte accounting. Slabs are never returned to the OS, so reading the header
// of a retired block is always safe (queues may hold stale node refs).
class TieredHeap {
 public:
  enum class Priority : u8 {
    Normal = 0,
    // Root-growth allocations may dip into the small structural reserve so a
    // new root can stay in fast memory even when the budget is full.
    Structural = 1,
  };

  explicit TieredHeap(const TierBudget& budget);
  ~TieredHeap();

  TieredHeap(const TieredHeap&) = delete;
  TieredHeap& operator=(const TieredHeap&) = delete;

  // Returns an empty handle on capacity exhaustion (FastExhausted /
  // SlowExhausted); callers fall back per policy.
  TierHandle alloc(u32 size, TierId tier, Priority prio = Priority::Normal);

  // Immediate free: accounting and block recycling in one step.
  void free(TierHandle h);

  // Logical free now (accounting drops, double-free armed), physical recycling
  // deferred until recycle() — used with epoch-based retirement so usage
  // reflects a demotion as soon as it happens.
  void retire(TierHandle h);
  void recycle(TierHandle h);

  void record_access(TierId tier);
  void record_access(const TierHandle& h) { record_access(h.tier); }

  double usage_ratio(TierId tier) const;
  u64 used_bytes(TierId tier) const;
  u64 capacity(TierId tier) const { return tier == TierId::Fast ? budget_.fast_capacity : budget_.slow_capacity; }
  u64 free_bytes_fast() const;
  const TierBudget& budget() const { return budget_; }

  HeapStats stats() const;

  // Invoked (without locks held) whenever an allocation pushes the fast usage
  // ratio across `threshold`; used to wake the watermark maintainer.
  void set_pressure_callback(double threshold, std::function<void()> cb);

  // Test support: walks every slab and sums live block sizes per tier.
  void scan_live_bytes(u64& fast, u64& slow) const;

  // Slice of fast capacity held back for root-growth allocations, so the root
  // can stay fast when the budget is otherwise full. Proportional with a cap,
  // so small simulated budgets aren't dominated by it.
  static constexpr u64 kMaxStructuralReserve = 64 * 1024;
  u64 structural_reserve() const {
    u64 r = budget_.fast_capacity / 64;
    return r > kMaxStructuralReserve ? kMaxStructuralReserve : r;
  }

 private:
  struct BlockHeader;
  struct SizeClass;

  SizeClass& size_class(u32 size);
  bool reserve_bytes(TierId tier, u32 size, Priority prio);
  void release_bytes(TierId tier, u32 size);

  TierBudget budget_;

  std::atomic<u64> used_fast_{0};
  std::atomic<u64> used_slow_{0};
  std::atomic<u64> accesses_fast_{0};
  std::atomic<u64> accesses_slow_{0};

  mutable std::mutex classes_mu_;
  std::unordered_map<u32, SizeClass*> classes_;
  std::vector<SizeClass*> class_list_;

  double pressure_threshold_ = 2.0;  // > 1: disabled
  std::function<void()> pressure_cb_;
  std::mutex pressure_mu_;
};

}  // namespace treetier

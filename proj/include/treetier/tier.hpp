#pragma once

#include <cstddef>
#include <cstdint>

namespace treetier {

using u8 = uint8_t;
using u16 = uint16_t;
using u32 = uint32_t;
using u64 = uint64_t;

enum class TierId : u8 { Fast = 0, Slow = 1 };

inline const char* tier_name(TierId t) { return t == TierId::Fast ? "fast" : "slow"; }

// Capacity budgets and per-access cost model for the two simulated tiers.
// slow_capacity == 0 means unbounded. Costs are abstract units per node access;
// the default 1:2 ratio mirrors the latency gap between CPU-attached and
// CXL-attached DRAM.
struct TierBudget {
  u64 fast_capacity = 64ull << 20;
  u64 slow_capacity = 0;  // 0 = unbounded
  u64 c_fast = 1;
  u64 c_slow = 2;
  // Optional busy-wait injected on each access, to make wall-clock runs feel
  // the tier gap. 0 = off.
  u64 delay_ns_fast = 0;
  u64 delay_ns_slow = 0;

  bool valid() const {
    return fast_capacity > 0 && c_fast > 0 && c_slow >= c_fast;
  }
};

struct HeapStats {
  u64 used_fast = 0;
  u64 used_slow = 0;
  u64 accesses_fast = 0;
  u64 accesses_slow = 0;
  u64 total_cost = 0;  // accesses_fast*c_fast + accesses_slow*c_slow
};

}  // namespace treetier

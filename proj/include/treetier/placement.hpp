#pragma once

#include "treetier/adapter.hpp"
#include "treetier/histogram.hpp"
#include "treetier/node_meta.hpp"
#include "treetier/params.hpp"
#include "treetier/tiered_heap.hpp"

namespace treetier {

// Layer-aware initial placement: fast iff the node sits above L_fast, its
// parent is fast, and fast memory has headroom for it. Anything else goes
// slow, so the single-boundary structure holds by construction. The root
// passes parent_tier = Fast.
inline TierId choose_tier(u32 depth, TierId parent_tier, const PlacementParams& params,
                          const TieredHeap& heap, u32 size) {
  if (parent_tier != TierId::Fast) return TierId::Slow;
  if (int(depth) >= params.l_fast.load(std::memory_order_relaxed)) return TierId::Slow;
  if (heap.free_bytes_fast() < size) return TierId::Slow;
  return TierId::Fast;
}

inline void track_leaf_access(AccessCounter& freq) { freq.increment(); }

// One full leaf scan into a fresh histogram.
void rebuild_histogram(TreeAdapter& adapter, FreqHistogram& hist);

// Halve every leaf frequency and shift the histogram left one bin.
void cool(TreeAdapter& adapter, FreqHistogram& hist);

enum class ThresholdResult : u8 { Updated, DegenerateHistogram };

// Derive T_hot / T_cold from the histogram: scanning bins from the top, T_hot
// is the lower bound of the first bin where the cumulative leaf count exceeds
// P_hot * total; T_cold symmetrically from the bottom with P_cold. T_cold is
// then kept at least one bin below T_hot (T_hot is pushed up when T_cold is
// already at the bottom). An empty histogram leaves both unchanged.
ThresholdResult update_thresholds(const FreqHistogram& hist, PlacementParams& params);

// Pure form used by both the implementation and test oracles' plumbing.
struct Thresholds {
  u32 t_hot;
  u32 t_cold;
};
Thresholds compute_thresholds(const std::array<u64, FreqHistogram::kBins>& bins, u64 total,
                              double p_hot, double p_cold);

// P_hot/P_cold initialization from the fast budget: the fraction of leaves
// that could reside in ~80% of fast memory.
void init_hot_cold_fractions(PlacementParams& params, const TieredHeap& heap, u64 total_leaves,
                             u64 leaf_bytes);

}  // namespace treetier

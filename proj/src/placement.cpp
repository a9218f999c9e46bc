#include "treetier/placement.hpp"

#include <algorithm>

namespace treetier {

void rebuild_histogram(TreeAdapter& adapter, FreqHistogram& hist) {
  std::array<u64, FreqHistogram::kBins> bins{};
  u64 total = 0;
  adapter.for_each_leaf([&](const LeafView& leaf) {
    bins[FreqHistogram::bin_of(leaf.freq)]++;
    total++;
    return true;
  });
  hist.replace(bins, total);
}

void cool(TreeAdapter& adapter, FreqHistogram& hist) {
  adapter.for_each_leaf([&](const LeafView& leaf) {
    adapter.halve_freq(leaf.node);
    return true;
  });
  hist.shift_left();
}

Thresholds compute_thresholds(const std::array<u64, FreqHistogram::kBins>& bins, u64 total,
                              double p_hot, double p_cold) {
  const double hot_target = p_hot * double(total);
  const double cold_target = p_cold * double(total);

  int hot_bin = 0;
  u64 cum = 0;
  for (int i = FreqHistogram::kBins - 1; i >= 0; i--) {
    cum += bins[i];
    if (double(cum) > hot_target) {
      hot_bin = i;
      break;
    }
  }

  int cold_bin = FreqHistogram::kBins;  // above everything: all leaves cold
  cum = 0;
  for (int i = 0; i < FreqHistogram::kBins; i++) {
    cum += bins[i];
    if (double(cum) > cold_target) {
      cold_bin = i;
      break;
    }
  }

  // Keep at least one bin between the thresholds; prefer lowering T_cold and
  // push T_hot up only when T_cold already sits at the bottom bin.
  if (cold_bin >= hot_bin) {
    if (hot_bin >= 1) {
      cold_bin = hot_bin - 1;
    } else {
      cold_bin = 0;
      hot_bin = 1;
    }
  }

  return Thresholds{FreqHistogram::lower_bound_of(hot_bin), FreqHistogram::lower_bound_of(cold_bin)};
}

ThresholdResult update_thresholds(const FreqHistogram& hist, PlacementParams& params) {
  std::array<u64, FreqHistogram::kBins> bins{};
  u64 total = 0;
  hist.snapshot(bins, total);
  if (total == 0) return ThresholdResult::DegenerateHistogram;

  Thresholds t = compute_thresholds(bins, total, params.p_hot.load(), params.p_cold.load());
  params.t_hot.store(t.t_hot);
  params.t_cold.store(t.t_cold);
  return ThresholdResult::Updated;
}

void init_hot_cold_fractions(PlacementParams& params, const TieredHeap& heap, u64 total_leaves,
                             u64 leaf_bytes) {
  if (total_leaves == 0 || leaf_bytes == 0) {
    params.p_hot.store(1.0);
    params.p_cold.store(0.0);
    return;
  }
  double budget_leaves = double(heap.budget().fast_capacity) * 0.8 / double(leaf_bytes);
  double p_hot = std::min(1.0, budget_leaves / double(total_leaves));
  params.p_hot.store(p_hot);
  params.p_cold.store(std::max(0.0, 1.0 - 2.0 * p_hot));
}

}  // namespace treetier

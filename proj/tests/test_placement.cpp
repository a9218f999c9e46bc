#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <thread>
#include <vector>

#include "treetier/hooks.hpp"
#include "treetier/placement.hpp"

using namespace treetier;

// ---- independent oracles -----------------------------------------------------

namespace {

int oracle_bin(u32 f) {
  if (f <= 1) return 0;
  int b = 0;
  while (f > 1) {
    f >>= 1;
    b++;
  }
  return b;
}

// Brute-force threshold scan over an explicit frequency multiset, binned the
// same way as the histogram. Independent of compute_thresholds.
std::pair<u32, u32> oracle_thresholds(const std::vector<u16>& freqs, double p_hot, double p_cold) {
  const u64 n = freqs.size();
  auto count_in_bins_at_least = [&](int bin) {
    u64 c = 0;
    for (u16 f : freqs)
      if (oracle_bin(f) >= bin) c++;
    return c;
  };
  int hot_bin = 0;
  for (int i = FreqHistogram::kBins - 1; i >= 0; i--) {
    u64 cum = count_in_bins_at_least(i);
    if (double(cum) > p_hot * double(n)) {
      hot_bin = i;
      break;
    }
  }
  int cold_bin = FreqHistogram::kBins;
  for (int i = 0; i < FreqHistogram::kBins; i++) {
    u64 cum = n - count_in_bins_at_least(i + 1);
    if (double(cum) > p_cold * double(n)) {
      cold_bin = i;
      break;
    }
  }
  if (cold_bin >= hot_bin) {
    if (hot_bin >= 1)
      cold_bin = hot_bin - 1;
    else {
      cold_bin = 0;
      hot_bin = 1;
    }
  }
  auto lb = [](int b) { return b == 0 ? 0u : (1u << b); };
  return {lb(hot_bin), lb(cold_bin)};
}

// Minimal single-tree adapter over an explicit vector of leaf frequencies, for
// exercising histogram rebuild/cool without a real index.
struct FlatLeaves final : TreeAdapter {
  struct L {
    AccessCounter freq;
    TierId tier = TierId::Slow;
  };
  std::vector<L> leaves;

  explicit FlatLeaves(const std::vector<u16>& fs) : leaves(fs.size()) {
    for (size_t i = 0; i < fs.size(); i++) leaves[i].freq.store(fs[i]);
  }

  void for_each_leaf(const std::function<bool(const LeafView&)>& visit) override {
    for (size_t i = 0; i < leaves.size(); i++)
      if (!visit(LeafView{&leaves[i], u64(i), leaves[i].freq.load(), leaves[i].tier})) return;
  }
  bool is_leaf(NodeRef) const override { return true; }
  TierId tier_of(NodeRef n) const override { return static_cast<L*>(n)->tier; }
  u16 freq_of(NodeRef n) const override { return static_cast<L*>(n)->freq.load(); }
  void halve_freq(NodeRef n) override { static_cast<L*>(n)->freq.halve(); }
  u32 depth_of(NodeRef) const override { return 1; }
  u32 height() const override { return 1; }
  NodeRef parent_of(NodeRef, u64) override { return nullptr; }
  PathProbe first_slow_on_path(u64) override { return {}; }
  RelocateResult relocate(NodeRef, u64, TierId, bool) override {
    return {RelocateStatus::Stale, nullptr};
  }
  u64 footprint_at_depth(u32) const override { return 0; }
  u64 leaf_node_bytes() const override { return 64; }
};

}  // namespace

// ---- metadata ---------------------------------------------------------------

TEST_CASE("metadata sizes: one byte internal, three bytes leaf") {
  static_assert(sizeof(NodeMeta) == 1);
  static_assert(sizeof(AccessCounter) == 2);
  static_assert(kInternalMetaBytes == 1);
  static_assert(kLeafMetaBytes == 3);
}

TEST_CASE("meta byte packs level and tier") {
  NodeMeta m;
  m.init(93, TierId::Fast);
  CHECK(m.level() == 93);
  CHECK(m.tier() == TierId::Fast);
  m.set_tier(TierId::Slow);
  CHECK(m.level() == 93);
  CHECK(m.tier() == TierId::Slow);
  m.init(127, TierId::Slow);
  CHECK(m.level() == 127);
}

TEST_CASE("access counter saturates and counts concurrently") {
  AccessCounter c;
  c.store(7);
  c.increment();
  CHECK(c.load() == 8);
  c.store(65535);
  c.increment();
  CHECK(c.load() == 65535);

  // 100 concurrent increments from 0 == 100 (oracle: sequential count).
  AccessCounter cc;
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; t++)
    ts.emplace_back([&] {
      for (int i = 0; i < 25; i++) cc.increment();
    });
  for (auto& t : ts) t.join();
  CHECK(cc.load() == 100);

  AccessCounter h;
  h.store(9);
  h.halve();
  CHECK(h.load() == 4);
  h.store(65535);
  h.halve();
  h.halve();
  CHECK(h.load() == 16383);
}

// ---- choose_tier --------------------------------------------------------------

TEST_CASE("choose_tier layer rule, exhaustively over the small input space") {
  TierBudget b;
  b.fast_capacity = 1 << 20;
  TieredHeap heap(b);
  PlacementParams params;

  for (int l_fast = 0; l_fast <= 8; l_fast++) {
    params.l_fast.store(l_fast);
    for (u32 depth = 0; depth <= 8; depth++) {
      for (TierId parent : {TierId::Fast, TierId::Slow}) {
        TierId got = choose_tier(depth, parent, params, heap, 64);
        bool expect_fast = int(depth) < l_fast && parent == TierId::Fast;
        CHECK(got == (expect_fast ? TierId::Fast : TierId::Slow));
        // The layer rule never returns Fast under a slow parent.
        if (parent == TierId::Slow) CHECK(got == TierId::Slow);
      }
    }
  }
}

TEST_CASE("choose_tier degrades to slow without headroom") {
  TierBudget b;
  b.fast_capacity = 4096;
  TieredHeap heap(b);
  PlacementParams params;
  params.l_fast.store(4);
  u64 usable = heap.capacity(TierId::Fast) - heap.structural_reserve();
  auto h = heap.alloc(u32(usable), TierId::Fast);
  CHECK(choose_tier(1, TierId::Fast, params, heap, 64) == TierId::Slow);
  heap.free(h);
  CHECK(choose_tier(1, TierId::Fast, params, heap, 64) == TierId::Fast);
}

TEST_CASE("spec examples for choose_tier") {
  TierBudget b;
  b.fast_capacity = 1 << 20;
  TieredHeap heap(b);
  PlacementParams params;
  params.l_fast.store(4);
  CHECK(choose_tier(1, TierId::Fast, params, heap, 64) == TierId::Fast);
  CHECK(choose_tier(1, TierId::Slow, params, heap, 64) == TierId::Slow);
  params.l_fast.store(1);
  CHECK(choose_tier(0, TierId::Fast, params, heap, 64) == TierId::Fast);  // root case
}

// ---- histogram -----------------------------------------------------------------

TEST_CASE("bin function") {
  CHECK(FreqHistogram::bin_of(0) == 0);
  CHECK(FreqHistogram::bin_of(1) == 0);
  CHECK(FreqHistogram::bin_of(2) == 1);
  CHECK(FreqHistogram::bin_of(3) == 1);
  CHECK(FreqHistogram::bin_of(4) == 2);
  CHECK(FreqHistogram::bin_of(65535) == 15);
  for (u32 f = 0; f <= 70000; f++) CHECK(FreqHistogram::bin_of(f) == oracle_bin(f));
}

TEST_CASE("rebuild: leaves {0,1,2,3,4} land in bins {2,2,1}") {
  FlatLeaves t({0, 1, 2, 3, 4});
  FreqHistogram h;
  rebuild_histogram(t, h);
  auto bins = h.bins();
  CHECK(bins[0] == 2);
  CHECK(bins[1] == 2);
  CHECK(bins[2] == 1);
  CHECK(h.total_leaves() == 5);
}

TEST_CASE("rebuild: empty tree and saturated tree") {
  FlatLeaves empty({});
  FreqHistogram h;
  rebuild_histogram(empty, h);
  for (u64 c : h.bins()) CHECK(c == 0);
  CHECK(h.total_leaves() == 0);

  FlatLeaves sat(std::vector<u16>(10, 65535));
  rebuild_histogram(sat, h);
  CHECK(h.bins()[15] == 10);
}

TEST_CASE("rebuild is idempotent without intervening accesses") {
  std::mt19937_64 rng(7);
  std::vector<u16> fs(1000);
  for (auto& f : fs) f = u16(rng() % 65536);
  FlatLeaves t(fs);
  FreqHistogram h;
  rebuild_histogram(t, h);
  auto b1 = h.bins();
  rebuild_histogram(t, h);
  CHECK(h.bins() == b1);
}

TEST_CASE("cool shifts bins and halves every leaf; consistent with rebuild") {
  std::mt19937_64 rng(13);
  for (int round = 0; round < 20; round++) {
    std::vector<u16> fs(200);
    for (auto& f : fs) f = u16(rng() % 65536);
    FlatLeaves t(fs);
    FreqHistogram h;
    rebuild_histogram(t, h);
    cool(t, h);
    // Oracle: halve externally, rebuild fresh.
    std::vector<u16> halved;
    for (u16 f : fs) halved.push_back(f / 2);
    FlatLeaves t2(halved);
    FreqHistogram h2;
    rebuild_histogram(t2, h2);
    CHECK(h.bins() == h2.bins());
    for (size_t i = 0; i < fs.size(); i++) CHECK(t.leaves[i].freq.load() == fs[i] / 2);
  }
}

TEST_CASE("spec example: bins [5,3,2,0..] shift to [8,2,0..]") {
  FreqHistogram h;
  std::array<u64, FreqHistogram::kBins> bins{};
  bins[0] = 5;
  bins[1] = 3;
  bins[2] = 2;
  h.replace(bins, 10);
  h.shift_left();
  auto out = h.bins();
  CHECK(out[0] == 8);
  CHECK(out[1] == 2);
  CHECK(out[2] == 0);
}

// ---- thresholds ------------------------------------------------------------------

TEST_CASE("spec example: top bin holding 120 of 1000 with P_hot=0.10") {
  std::vector<u16> fs;
  for (int i = 0; i < 120; i++) fs.push_back(1024);  // bin 10
  for (int i = 0; i < 880; i++) fs.push_back(3);     // bin 1
  FlatLeaves t(fs);
  FreqHistogram h;
  rebuild_histogram(t, h);
  PlacementParams params;
  params.p_hot.store(0.10);
  params.p_cold.store(0.0);
  CHECK(update_thresholds(h, params) == ThresholdResult::Updated);
  CHECK(params.t_hot.load() == 1024);
}

TEST_CASE("degenerate empty histogram leaves thresholds unchanged") {
  FreqHistogram h;
  PlacementParams params;
  params.t_hot.store(123);
  params.t_cold.store(7);
  CHECK(update_thresholds(h, params) == ThresholdResult::DegenerateHistogram);
  CHECK(params.t_hot.load() == 123);
  CHECK(params.t_cold.load() == 7);
}

TEST_CASE("all-zero frequencies: T_cold at bin0 boundary, T_hot one bin above") {
  FlatLeaves t(std::vector<u16>(100, 0));
  FreqHistogram h;
  rebuild_histogram(t, h);
  PlacementParams params;
  params.p_hot.store(0.1);
  params.p_cold.store(0.2);
  update_thresholds(h, params);
  CHECK(params.t_cold.load() == 0);
  CHECK(params.t_hot.load() == 2);
}

TEST_CASE("threshold oracle equivalence on 1000 random histograms") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 1000; round++) {
    size_t n = 1 + rng() % 500;
    std::vector<u16> fs(n);
    // Mix of heavy-tailed and uniform frequency shapes.
    for (auto& f : fs) {
      u32 mode = u32(rng() % 3);
      if (mode == 0)
        f = u16(rng() % 8);
      else if (mode == 1)
        f = u16(rng() % 65536);
      else
        f = u16(1u << (rng() % 16));
    }
    double p_hot = double(rng() % 1000) / 1000.0;
    double p_cold = double(rng() % 1000) / 1000.0;

    FlatLeaves t(fs);
    FreqHistogram h;
    rebuild_histogram(t, h);
    PlacementParams params;
    params.p_hot.store(p_hot);
    params.p_cold.store(p_cold);
    update_thresholds(h, params);

    auto [want_hot, want_cold] = oracle_thresholds(fs, p_hot, p_cold);
    CHECK(params.t_hot.load() == want_hot);
    CHECK(params.t_cold.load() == want_cold);
    CHECK(params.t_cold.load() < params.t_hot.load());
  }
}

TEST_CASE("init_hot_cold_fractions from the fast budget") {
  TierBudget b;
  b.fast_capacity = 1000 * 100;  // 0.8 * that / 100B leaves = 800 leaf slots
  TieredHeap heap(b);
  PlacementParams params;
  init_hot_cold_fractions(params, heap, 4000, 100);
  CHECK(params.p_hot.load() == doctest::Approx(0.2));
  CHECK(params.p_cold.load() == doctest::Approx(0.6));
  init_hot_cold_fractions(params, heap, 100, 100);  // budget exceeds leaves
  CHECK(params.p_hot.load() == doctest::Approx(1.0));
  CHECK(params.p_cold.load() == doctest::Approx(0.0));
}

// ---- params ----------------------------------------------------------------------

TEST_CASE("strain and abundant steps respect clamps; snapshot restores exactly") {
  PlacementParams p;
  p.l_fast.store(5);
  p.l_demote.store(3);
  p.p_hot.store(0.1);
  p.p_cold.store(0.8);
  auto snap = p.snapshot();

  for (int i = 0; i < 100; i++) p.apply_strain_step(2);
  CHECK(p.p_cold.load() == doctest::Approx(1.0));
  CHECK(p.p_hot.load() == doctest::Approx(0.0));
  CHECK(p.l_demote.load() == 2);
  CHECK(p.l_fast.load() == 1);
  CHECK(p.strain_fully_clamped(2));

  for (int i = 0; i < 500; i++) p.apply_abundant_step();
  CHECK(p.p_hot.load() == doctest::Approx(1.0));
  CHECK(p.l_fast.load() == p.max_depth);

  p.restore(snap);
  CHECK(p.snapshot() == snap);
}

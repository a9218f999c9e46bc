#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <thread>

#include "treetier/art.hpp"
#include "treetier/engine.hpp"
#include "treetier/hooks.hpp"

using namespace treetier;

namespace {

struct ArtRig {
  TierBudget budget;
  TieredHeap heap;
  EpochManager ebr;
  PlacementParams params;
  ManagedHooks hooks;
  AdaptiveRadixTree<u64> tree;
  ArtAdapter<u64> adapter;

  explicit ArtRig(u64 fast_cap = 256ull << 20)
      : budget(make_budget(fast_cap)),
        heap(budget),
        hooks(params, heap),
        tree(heap, ebr, hooks),
        adapter(tree) {}

  static TierBudget make_budget(u64 cap) {
    TierBudget b;
    b.fast_capacity = cap;
    return b;
  }
};

}  // namespace

TEST_CASE("insert, get, absent, overwrite") {
  ArtRig rig;
  u64 v = 0;
  CHECK(!rig.tree.get(42, v));
  rig.tree.insert(42, 1);
  CHECK(rig.tree.get(42, v));
  CHECK(v == 1);
  rig.tree.insert(42, 2);
  CHECK(rig.tree.get(42, v));
  CHECK(v == 2);
  CHECK(!rig.tree.get(43, v));
  rig.tree.check_structure();
}

TEST_CASE("keys sharing long prefixes exercise path compression") {
  ArtRig rig;
  std::vector<u64> keys = {0x0102030405060708ull, 0x0102030405060709ull, 0x01020304050607FFull,
                           0x0102030405FF0000ull, 0x0102030400000000ull, 0xFF00000000000000ull,
                           0x0000000000000000ull, 0x0000000000000001ull};
  for (size_t i = 0; i < keys.size(); i++) rig.tree.insert(keys[i], i);
  for (size_t i = 0; i < keys.size(); i++) {
    u64 v = 0;
    REQUIRE(rig.tree.get(keys[i], v));
    CHECK(v == i);
  }
  rig.tree.check_structure();
  CHECK(rig.tree.count_keys() == keys.size());
}

TEST_CASE("random 10^4 keys match a reference map") {
  ArtRig rig;
  std::map<u64, u64> oracle;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10'000; i++) {
    u64 k = rng();
    rig.tree.insert(k, k ^ 0xdead);
    oracle[k] = k ^ 0xdead;
  }
  for (auto& [k, want] : oracle) {
    u64 v = 0;
    REQUIRE(rig.tree.get(k, v));
    REQUIRE(v == want);
  }
  rig.tree.check_structure();
  CHECK(rig.tree.count_keys() == oracle.size());
}

TEST_CASE("dictionary equivalence with removals and variant shrink") {
  ArtRig rig;
  std::map<u64, u64> oracle;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 60'000; i++) {
    // Dense low byte-space so Node16/48/256 grow and shrink.
    u64 k = rng() % 3000;
    switch (rng() % 3) {
      case 0: {
        u64 v = rng();
        rig.tree.insert(k, v);
        oracle[k] = v;
        break;
      }
      case 1: {
        bool got = rig.tree.remove(k);
        CHECK(got == (oracle.erase(k) > 0));
        break;
      }
      default: {
        u64 v = 0;
        bool got = rig.tree.get(k, v);
        auto it = oracle.find(k);
        CHECK(got == (it != oracle.end()));
        if (got) CHECK(v == it->second);
      }
    }
    if (i % 20'000 == 0) rig.tree.check_structure();
  }
  rig.tree.check_structure();
  CHECK(rig.tree.count_keys() == oracle.size());
}

TEST_CASE("variant growth re-places nodes through the layer rule") {
  ArtRig rig;
  // 20 children under one byte position forces N4 -> N16 -> N48.
  for (u64 i = 0; i < 20; i++) rig.tree.insert(0x1000 + i, i);
  u64 v;
  for (u64 i = 0; i < 20; i++) {
    REQUIRE(rig.tree.get(0x1000 + i, v));
    CHECK(v == i);
  }
  rig.tree.check_structure();
  // 300 distinct second bytes force N256 somewhere.
  ArtRig rig2;
  for (u64 i = 0; i < 256; i++) rig2.tree.insert((0x42ull << 56) | (i << 48), i);
  for (u64 i = 0; i < 256; i++) {
    REQUIRE(rig2.tree.get((0x42ull << 56) | (i << 48), v));
    CHECK(v == i);
  }
  rig2.tree.check_structure();
}

TEST_CASE("leaf iterator visits leaves in key order exactly once") {
  ArtRig rig;
  std::set<u64> keys;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; i++) {
    u64 k = rng();
    keys.insert(k);
    rig.tree.insert(k, k);
  }
  std::vector<u64> seen;
  rig.adapter.for_each_leaf([&](const LeafView& l) {
    seen.push_back(l.repr_key);
    return true;
  });
  CHECK(seen.size() == keys.size());
  CHECK(std::is_sorted(seen.begin(), seen.end()));
  std::set<u64> seen_set(seen.begin(), seen.end());
  CHECK(seen_set == keys);
}

TEST_CASE("relocate leaves and inners; demotion suite runs unmodified") {
  ArtRig rig(8ull << 20);
  for (u64 k = 0; k < 50'000; k++) rig.tree.insert(k * 977, k);

  // Demote a fast leaf with the engine's relocation surface.
  std::vector<LeafView> leaves;
  rig.adapter.for_each_leaf([&](const LeafView& l) {
    leaves.push_back(l);
    return true;
  });
  bool moved = false;
  for (auto& l : leaves) {
    if (l.tier == TierId::Fast) {
      auto res = rig.adapter.relocate(l.node, l.repr_key, TierId::Slow, true);
      if (res.status == RelocateStatus::Done) {
        moved = true;
        break;
      }
    }
  }
  CHECK(moved);
  rig.tree.check_structure(false);

  // Full engine demotion pass against this adapter. Loaded leaves carry
  // freq 1 from insert tracking, so the cold threshold must sit above that.
  BackgroundEngine engine(rig.adapter, rig.heap, rig.ebr, rig.params, {});
  rig.params.t_cold.store(4);
  rig.params.l_demote.store(1);
  u64 seeded = 0;
  rig.adapter.for_each_leaf([&](const LeafView& l) {
    if (l.tier == TierId::Fast && seeded < 200) {
      engine.queues().demotion_q.push({l.node, l.repr_key, TierId::Fast, true});
      seeded++;
    }
    return true;
  });
  u64 demoted = engine.run_demotions();
  CHECK(demoted >= seeded);  // seeds all validate; cold ancestors may follow
  rig.tree.check_structure();  // single boundary preserved throughout
  u64 v;
  for (u64 k = 0; k < 50'000; k += 531) REQUIRE(rig.tree.get(k * 977, v));
}

TEST_CASE("root relocation swaps the permanent root block") {
  ArtRig rig;
  for (u64 k = 0; k < 1000; k++) rig.tree.insert(k, k);
  auto* root = rig.tree.root();
  REQUIRE(rig.adapter.tier_of(root) == TierId::Fast);
  auto res = rig.adapter.relocate(root, 0, TierId::Slow, false);
  CHECK(res.status == RelocateStatus::Done);
  CHECK(res.parent == nullptr);
  CHECK(rig.tree.root() != root);
  CHECK(rig.adapter.tier_of(rig.tree.root()) == TierId::Slow);
  u64 v;
  for (u64 k = 0; k < 1000; k += 13) REQUIRE(rig.tree.get(k, v));
  rig.tree.check_structure(false);
}

TEST_CASE("promotion via first_slow_on_path promotes top-down") {
  ArtRig rig(64ull << 20);
  for (u64 k = 0; k < 5000; k++) rig.tree.insert(k, k);
  // Demote some path fully, then promote it back.
  PathProbe p = rig.adapter.first_slow_on_path(1234);
  if (!p.node) {
    // demote the leaf's ancestors bottom-up via engine relocation calls
    // (leaf first, guard ensures order)
    std::vector<LeafView> lv;
    rig.adapter.for_each_leaf([&](const LeafView& l) {
      if (l.repr_key == 1234) {
        lv.push_back(l);
        return false;
      }
      return true;
    });
    REQUIRE(lv.size() == 1);
    REQUIRE(rig.adapter.relocate(lv[0].node, 1234, TierId::Slow, true).status ==
            RelocateStatus::Done);
  }
  p = rig.adapter.first_slow_on_path(1234);
  REQUIRE(p.node != nullptr);
  // Engine-style promotion loop.
  int guard = 0;
  while (p.node && guard++ < 32) {
    auto res = rig.adapter.relocate(p.node, 1234, TierId::Fast, false);
    REQUIRE(res.status == RelocateStatus::Done);
    rig.tree.check_structure();  // boundary holds at every step
    p = rig.adapter.first_slow_on_path(1234);
  }
  CHECK(p.node == nullptr);
}

TEST_CASE("concurrent mixed operations with migrations") {
  ArtRig rig(8ull << 20);
  constexpr u64 kSpace = 20'000;
  for (u64 k = 0; k < kSpace; k += 2) rig.tree.insert(k, k * 3);

  std::atomic<bool> stop{false};
  std::atomic<u64> errors{0};
  std::vector<std::thread> ts;
  for (int t = 0; t < 3; t++) {
    ts.emplace_back([&, t] {
      std::mt19937_64 rng(55 + t);
      while (!stop.load(std::memory_order_relaxed)) {
        u64 k = rng() % kSpace;
        switch (rng() % 4) {
          case 0:
            rig.tree.insert(k, k * 3);
            break;
          case 1:
            if (rig.tree.remove(k) && (k & 1) == 0) rig.tree.insert(k, k * 3);
            break;
          default: {
            u64 v = 0;
            if (rig.tree.get(k, v) && v != k * 3) errors.fetch_add(1);
          }
        }
      }
    });
  }
  std::thread migrator([&] {
    std::mt19937_64 rng(77);
    while (!stop.load(std::memory_order_relaxed)) {
      u64 k = rng() % kSpace;
      PathProbe p = rig.adapter.first_slow_on_path(k);
      if (p.node) rig.adapter.relocate(p.node, k, TierId::Fast, false);
    }
  });
  std::this_thread::sleep_for(std::chrono::seconds(2));
  stop.store(true);
  for (auto& t : ts) t.join();
  migrator.join();
  CHECK(errors.load() == 0);
  rig.ebr.flush();
  rig.tree.check_structure(false);
}

TEST_CASE("footprint accounting sums to live bytes") {
  ArtRig rig;
  std::mt19937_64 rng(31);
  for (int i = 0; i < 20'000; i++) rig.tree.insert(rng(), 1);
  u64 total = 0;
  for (u32 d = 0; d <= rig.tree.height(); d++) total += rig.tree.footprint_at_depth(d);
  u64 fast = 0, slow = 0;
  rig.heap.scan_live_bytes(fast, slow);
  CHECK(total == fast + slow);
}

TEST_CASE("remove down to empty and reuse") {
  ArtRig rig;
  for (u64 k = 0; k < 2000; k++) rig.tree.insert(k, k);
  for (u64 k = 0; k < 2000; k++) CHECK(rig.tree.remove(k));
  CHECK(!rig.tree.remove(5));
  CHECK(rig.tree.count_keys() == 0);
  rig.tree.check_structure();
  rig.tree.insert(9, 9);
  u64 v;
  CHECK(rig.tree.get(9, v));
}

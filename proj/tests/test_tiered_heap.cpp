#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>
#include <vector>

#include "treetier/tiered_heap.hpp"

using namespace treetier;

namespace {
TierBudget small_budget(u64 fast = 1024) {
  TierBudget b;
  b.fast_capacity = fast;
  b.slow_capacity = 0;
  b.c_fast = 1;
  b.c_slow = 2;
  return b;
}
}  // namespace

TEST_CASE("alloc respects fast capacity") {
  TieredHeap heap(small_budget(4096));
  u64 usable = heap.capacity(TierId::Fast) - heap.structural_reserve();
  auto h = heap.alloc(u32(usable - 512), TierId::Fast);
  REQUIRE(bool(h));
  CHECK(h.tier == TierId::Fast);
  CHECK(heap.used_bytes(TierId::Fast) == usable - 512);

  auto h2 = heap.alloc(512, TierId::Fast);
  REQUIRE(bool(h2));
  auto h3 = heap.alloc(64, TierId::Fast);  // usable budget is exhausted
  CHECK(!h3);
  CHECK(heap.used_bytes(TierId::Fast) == usable);
  heap.free(h);
  heap.free(h2);
  CHECK(heap.used_bytes(TierId::Fast) == 0);
}

TEST_CASE("structural reserve admits root allocations at full budget") {
  TieredHeap heap(small_budget(8192));
  u64 usable = heap.capacity(TierId::Fast) - heap.structural_reserve();
  REQUIRE(heap.structural_reserve() >= 128);
  auto h = heap.alloc(u32(usable), TierId::Fast);
  REQUIRE(bool(h));
  CHECK(!heap.alloc(128, TierId::Fast));
  auto r = heap.alloc(128, TierId::Fast, TieredHeap::Priority::Structural);
  CHECK(bool(r));
  heap.free(h);
  heap.free(r);
}

TEST_CASE("unbounded slow tier always succeeds and reads ratio 0") {
  TieredHeap heap(small_budget());
  auto h = heap.alloc(64, TierId::Slow);
  REQUIRE(bool(h));
  CHECK(h.tier == TierId::Slow);
  CHECK(heap.usage_ratio(TierId::Slow) == 0.0);
  heap.free(h);
}

TEST_CASE("usage ratio arithmetic") {
  TierBudget b = small_budget(1024);
  TieredHeap heap(b);
  CHECK(heap.usage_ratio(TierId::Fast) == 0.0);
  auto h = heap.alloc(512, TierId::Fast);
  CHECK(heap.usage_ratio(TierId::Fast) == doctest::Approx(0.5));
  heap.free(h);
}

TEST_CASE("cost metering: 3 fast + 2 slow at (1,2) costs 7") {
  TieredHeap heap(small_budget());
  for (int i = 0; i < 3; i++) heap.record_access(TierId::Fast);
  for (int i = 0; i < 2; i++) heap.record_access(TierId::Slow);
  auto s = heap.stats();
  CHECK(s.accesses_fast == 3);
  CHECK(s.accesses_slow == 2);
  CHECK(s.total_cost == 7);
}

TEST_CASE("double free detected") {
  TieredHeap heap(small_budget());
  auto h = heap.alloc(64, TierId::Fast);
  heap.free(h);
  CHECK_THROWS_AS(heap.free(h), DoubleFree);
}

TEST_CASE("retire decrements usage before recycle") {
  TieredHeap heap(small_budget());
  auto h = heap.alloc(64, TierId::Fast);
  heap.retire(h);
  CHECK(heap.used_bytes(TierId::Fast) == 0);
  u64 fast = 0, slow = 0;
  heap.scan_live_bytes(fast, slow);
  CHECK(fast == 0);
  heap.recycle(h);
  auto h2 = heap.alloc(64, TierId::Fast);  // block is reusable again
  CHECK(bool(h2));
  heap.free(h2);
}

TEST_CASE("pressure callback fires on crossing the threshold") {
  TieredHeap heap(small_budget(1 << 20));
  int fired = 0;
  heap.set_pressure_callback(0.5, [&] { fired++; });
  u64 cap = heap.capacity(TierId::Fast);
  auto a = heap.alloc(u32(cap / 4), TierId::Fast);
  CHECK(fired == 0);
  auto b = heap.alloc(u32(cap / 4 + 64), TierId::Fast);
  CHECK(fired == 1);
  heap.free(a);
  heap.free(b);
}

TEST_CASE("concurrent alloc/free keeps accounting exact and capped") {
  TierBudget b = small_budget(128 * 1024);
  TieredHeap heap(b);
  constexpr int kThreads = 4;
  std::atomic<bool> stop{false};
  std::atomic<u64> max_seen{0};
  std::vector<std::thread> ts;
  for (int t = 0; t < kThreads; t++) {
    ts.emplace_back([&, t] {
      std::vector<TierHandle> mine;
      u64 x = t + 1;
      for (int i = 0; i < 20000; i++) {
        x = x * 6364136223846793005ull + 1442695040888963407ull;
        if ((x >> 33) % 3 != 0 || mine.empty()) {
          u32 size = 64 + u32((x >> 17) % 3) * 64;
          auto h = heap.alloc(size, TierId::Fast);
          if (h) mine.push_back(h);
        } else {
          heap.free(mine.back());
          mine.pop_back();
        }
        u64 used = heap.used_bytes(TierId::Fast);
        u64 prev = max_seen.load();
        while (used > prev && !max_seen.compare_exchange_weak(prev, used)) {
        }
      }
      for (auto& h : mine) heap.free(h);
    });
  }
  stop.store(true);
  for (auto& t : ts) t.join();
  CHECK(max_seen.load() <= b.fast_capacity);
  CHECK(heap.used_bytes(TierId::Fast) == 0);
  u64 fast = 0, slow = 0;
  heap.scan_live_bytes(fast, slow);
  CHECK(fast == 0);
  CHECK(slow == 0);
}

TEST_CASE("live-handle scan matches usage counters") {
  TieredHeap heap(small_budget(1 << 20));
  std::vector<TierHandle> live;
  u64 x = 42;
  for (int i = 0; i < 500; i++) {
    x = x * 6364136223846793005ull + 1442695040888963407ull;
    u32 size = 32 + u32((x >> 40) % 8) * 32;
    TierId tier = (x >> 13) & 1 ? TierId::Fast : TierId::Slow;
    auto h = heap.alloc(size, tier);
    if (h) live.push_back(h);
    if (live.size() > 3 && (x & 3) == 0) {
      heap.free(live[live.size() / 2]);
      live.erase(live.begin() + live.size() / 2);
    }
  }
  u64 fast = 0, slow = 0;
  heap.scan_live_bytes(fast, slow);
  CHECK(fast == heap.used_bytes(TierId::Fast));
  CHECK(slow == heap.used_bytes(TierId::Slow));
  for (auto& h : live) heap.free(h);
}

TEST_CASE("total cost is monotone") {
  TieredHeap heap(small_budget());
  u64 last = 0;
  for (int i = 0; i < 100; i++) {
    heap.record_access(i % 2 ? TierId::Fast : TierId::Slow);
    u64 c = heap.stats().total_cost;
    CHECK(c >= last);
    last = c;
  }
}

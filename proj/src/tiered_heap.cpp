#include "treetier/tiered_heap.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <new>

namespace treetier {

namespace {
constexpr u32 kSlabBlocks = 256;

void busy_wait_ns(u64 ns) {
  if (ns == 0) return;
  auto end = std::chrono::steady_clock::now() + std::chrono::nanoseconds(ns);
  while (std::chrono::steady_clock::now() < end) {
  }
}
}  // namespace

struct TieredHeap::BlockHeader {
  u32 size;
  u8 tier;
  std::atomic<u8> live;  // 0 free, 1 live, 2 retired (awaiting recycle)
  u16 pad;
};

struct TieredHeap::SizeClass {
  u32 size = 0;  // payload bytes
  struct PerTier {
    std::mutex mu;
    std::vector<void*> free_list;       // payload pointers
    std::vector<char*> slabs;           // raw slab allocations
    u32 bump_slab = 0;                  // index of slab being carved
    u32 bump_next = 0;                  // next block index in bump_slab
  };
  PerTier tiers[2];

  u32 stride() const { return size + sizeof(BlockHeader); }
};

TieredHeap::TieredHeap(const TierBudget& budget) : budget_(budget) {
  if (!budget_.valid()) throw std::invalid_argument("invalid tier budget");
}

TieredHeap::~TieredHeap() {
  for (SizeClass* sc : class_list_) {
    for (auto& pt : sc->tiers)
      for (char* slab : pt.slabs) ::operator delete[](slab, std::align_val_t{16});
    delete sc;
  }
}

TieredHeap::SizeClass& TieredHeap::size_class(u32 size) {
  std::lock_guard<std::mutex> g(classes_mu_);
  auto it = classes_.find(size);
  if (it != classes_.end()) return *it->second;
  auto* sc = new SizeClass();
  sc->size = size;
  classes_.emplace(size, sc);
  class_list_.push_back(sc);
  return *sc;
}

bool TieredHeap::reserve_bytes(TierId tier, u32 size, Priority prio) {
  if (tier == TierId::Fast) {
    u64 cap = budget_.fast_capacity;
    u64 limit = cap;
    if (prio == Priority::Normal) limit = cap - structural_reserve();
    u64 cur = used_fast_.load(std::memory_order_relaxed);
    for (;;) {
      if (cur + size > limit) return false;
      if (used_fast_.compare_exchange_weak(cur, cur + size, std::memory_order_relaxed)) break;
    }
    double before = double(cur) / double(cap);
    double after = double(cur + size) / double(cap);
    if (before < pressure_threshold_ && after >= pressure_threshold_) {
      std::function<void()> cb;
      {
        std::lock_guard<std::mutex> g(pressure_mu_);
        cb = pressure_cb_;
      }
      if (cb) cb();
    }
    return true;
  }
  u64 cap = budget_.slow_capacity;
  if (cap == 0) {
    used_slow_.fetch_add(size, std::memory_order_relaxed);
    return true;
  }
  u64 cur = used_slow_.load(std::memory_order_relaxed);
  for (;;) {
    if (cur + size > cap) return false;
    if (used_slow_.compare_exchange_weak(cur, cur + size, std::memory_order_relaxed)) return true;
  }
}

void TieredHeap::release_bytes(TierId tier, u32 size) {
  auto& ctr = tier == TierId::Fast ? used_fast_ : used_slow_;
  ctr.fetch_sub(size, std::memory_order_relaxed);
}

TierHandle TieredHeap::alloc(u32 size, TierId tier, Priority prio) {
  if (size == 0) throw std::invalid_argument("alloc of zero bytes");
  if (!reserve_bytes(tier, size, prio)) return {};

  SizeClass& sc = size_class(size);
  auto& pt = sc.tiers[static_cast<u8>(tier)];
  void* payload = nullptr;
  {
    std::lock_guard<std::mutex> g(pt.mu);
    if (!pt.free_list.empty()) {
      payload = pt.free_list.back();
      pt.free_list.pop_back();
    } else {
      if (pt.bump_slab >= pt.slabs.size() || pt.bump_next >= kSlabBlocks) {
        char* slab = static_cast<char*>(::operator new[](u64(sc.stride()) * kSlabBlocks, std::align_val_t{16}));
        for (u32 i = 0; i < kSlabBlocks; i++) {
          auto* hdr = reinterpret_cast<BlockHeader*>(slab + u64(i) * sc.stride());
          hdr->size = size;
          hdr->tier = static_cast<u8>(tier);
          hdr->live.store(0, std::memory_order_relaxed);
        }
        pt.slabs.push_back(slab);
        pt.bump_slab = u32(pt.slabs.size()) - 1;
        pt.bump_next = 0;
      }
      payload = pt.slabs[pt.bump_slab] + u64(pt.bump_next) * sc.stride() + sizeof(BlockHeader);
      pt.bump_next++;
    }
  }
  auto* hdr = reinterpret_cast<BlockHeader*>(static_cast<char*>(payload) - sizeof(BlockHeader));
  hdr->tier = static_cast<u8>(tier);
  u8 expect = 0;
  if (!hdr->live.compare_exchange_strong(expect, 1, std::memory_order_relaxed))
    throw std::logic_error("allocator handed out a live block");
  return TierHandle{payload, size, tier};
}

void TieredHeap::retire(TierHandle h) {
  auto* hdr = reinterpret_cast<BlockHeader*>(static_cast<char*>(h.ptr) - sizeof(BlockHeader));
  u8 expect = 1;
  if (!hdr->live.compare_exchange_strong(expect, 2, std::memory_order_relaxed)) throw DoubleFree();
  release_bytes(h.tier, h.size);
}

void TieredHeap::recycle(TierHandle h) {
  auto* hdr = reinterpret_cast<BlockHeader*>(static_cast<char*>(h.ptr) - sizeof(BlockHeader));
  u8 expect = 2;
  if (!hdr->live.compare_exchange_strong(expect, 0, std::memory_order_relaxed))
    throw std::logic_error("recycle of a block that was not retired");
  SizeClass& sc = size_class(h.size);
  auto& pt = sc.tiers[static_cast<u8>(h.tier)];
  std::lock_guard<std::mutex> g(pt.mu);
  pt.free_list.push_back(h.ptr);
}

void TieredHeap::free(TierHandle h) {
  retire(h);
  recycle(h);
}

void TieredHeap::record_access(TierId tier) {
  if (tier == TierId::Fast) {
    accesses_fast_.fetch_add(1, std::memory_order_relaxed);
    busy_wait_ns(budget_.delay_ns_fast);
  } else {
    accesses_slow_.fetch_add(1, std::memory_order_relaxed);
    busy_wait_ns(budget_.delay_ns_slow);
  }
}

double TieredHeap::usage_ratio(TierId tier) const {
  if (tier == TierId::Fast)
    return double(used_fast_.load(std::memory_order_relaxed)) / double(budget_.fast_capacity);
  if (budget_.slow_capacity == 0) return 0.0;
  return double(used_slow_.load(std::memory_order_relaxed)) / double(budget_.slow_capacity);
}

u64 TieredHeap::used_bytes(TierId tier) const {
  return tier == TierId::Fast ? used_fast_.load(std::memory_order_relaxed)
                              : used_slow_.load(std::memory_order_relaxed);
}

u64 TieredHeap::free_bytes_fast() const {
  u64 used = used_fast_.load(std::memory_order_relaxed);
  u64 usable = budget_.fast_capacity - structural_reserve();
  return used >= usable ? 0 : usable - used;
}

HeapStats TieredHeap::stats() const {
  HeapStats s;
  s.used_fast = used_fast_.load(std::memory_order_relaxed);
  s.used_slow = used_slow_.load(std::memory_order_relaxed);
  s.accesses_fast = accesses_fast_.load(std::memory_order_relaxed);
  s.accesses_slow = accesses_slow_.load(std::memory_order_relaxed);
  s.total_cost = s.accesses_fast * budget_.c_fast + s.accesses_slow * budget_.c_slow;
  return s;
}

void TieredHeap::set_pressure_callback(double threshold, std::function<void()> cb) {
  std::lock_guard<std::mutex> g(pressure_mu_);
  pressure_threshold_ = threshold;
  pressure_cb_ = std::move(cb);
}

void TieredHeap::scan_live_bytes(u64& fast, u64& slow) const {
  fast = slow = 0;
  std::lock_guard<std::mutex> g(classes_mu_);
  for (SizeClass* sc : class_list_) {
    for (int t = 0; t < 2; t++) {
      auto& pt = sc->tiers[t];
      std::lock_guard<std::mutex> pg(pt.mu);
      for (char* slab : pt.slabs) {
        for (u32 i = 0; i < kSlabBlocks; i++) {
          auto* hdr = reinterpret_cast<const BlockHeader*>(slab + u64(i) * sc->stride());
          if (hdr->live.load(std::memory_order_relaxed) == 1)
            (hdr->tier == 0 ? fast : slow) += hdr->size;
        }
      }
    }
  }
}

}  // namespace treetier

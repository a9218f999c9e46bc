#pragma once

#include <atomic>
#include <cassert>
#include <functional>
#include <utility>
#include <vector>

#include "treetier/tier.hpp"

namespace treetier {

// Epoch-based reclamation. Threads wrap tree operations in a Guard; retired
// blocks are handed back to their owner once every thread that could hold a
// reference has moved past the retirement epoch.
class EpochManager {
 public:
  static constexpr int kMaxThreads = 128;
  static constexpr u64 kIdle = ~0ull;

  EpochManager() : mgr_id_(next_mgr_id().fetch_add(1, std::memory_order_relaxed)) {
    for (auto& s : slots_) s.epoch.store(kIdle, std::memory_order_relaxed);
  }

  class Guard {
   public:
    explicit Guard(EpochManager& em) : em_(em), slot_(em.my_slot()) {
      if (em_.slots_[slot_].depth++ == 0)
        em_.slots_[slot_].epoch.store(em_.global_epoch_.load(std::memory_order_acquire),
                                      std::memory_order_release);
    }
    ~Guard() {
      if (--em_.slots_[slot_].depth == 0)
        em_.slots_[slot_].epoch.store(kIdle, std::memory_order_release);
    }
    Guard(const Guard&) = delete;

   private:
    EpochManager& em_;
    int slot_;
  };

  void retire(std::function<void()> reclaim) {
    int slot = my_slot();
    auto& s = slots_[slot];
    s.retired.push_back({global_epoch_.load(std::memory_order_relaxed), std::move(reclaim)});
    if (s.retired.size() >= kCollectThreshold) collect(slot);
  }

  // Drains this thread's retire list, advancing the global epoch as far as the
  // other threads allow. With all threads quiescent this frees everything.
  void flush() {
    int slot = my_slot();
    while (!slots_[slot].retired.empty()) {
      u64 before = slots_[slot].retired.size();
      try_advance();
      collect(slot);
      if (slots_[slot].retired.size() == before) break;  // someone is pinned
    }
  }

  u64 pending() const {
    u64 n = 0;
    for (const auto& s : slots_) n += s.retired.size();
    return n;
  }

 private:
  static constexpr u64 kCollectThreshold = 128;

  struct alignas(64) Slot {
    std::atomic<u64> epoch{kIdle};
    u32 depth = 0;
    struct Item {
      u64 epoch;
      std::function<void()> fn;
    };
    std::vector<Item> retired;
  };

  static std::atomic<u64>& next_mgr_id() {
    static std::atomic<u64> id{1};
    return id;
  }

  // Slot assignment is keyed by manager id, not address, so a manager created
  // at a recycled address cannot inherit a stale registration.
  int my_slot() {
    thread_local u64 cached_id = 0;
    thread_local int cached_slot = -1;
    thread_local std::vector<std::pair<u64, int>> registrations;
    if (cached_id == mgr_id_) return cached_slot;
    for (auto& [id, s] : registrations)
      if (id == mgr_id_) {
        cached_id = mgr_id_;
        cached_slot = s;
        return s;
      }
    int slot = next_slot_.fetch_add(1, std::memory_order_relaxed);
    assert(slot < kMaxThreads && "too many threads registered with EpochManager");
    registrations.emplace_back(mgr_id_, slot);
    cached_id = mgr_id_;
    cached_slot = slot;
    return slot;
  }

  u64 min_active_epoch() const {
    u64 m = ~0ull;
    int n = next_slot_.load(std::memory_order_acquire);
    for (int i = 0; i < n && i < kMaxThreads; i++) {
      u64 e = slots_[i].epoch.load(std::memory_order_acquire);
      if (e != kIdle && e < m) m = e;
    }
    return m;
  }

  void try_advance() {
    u64 g = global_epoch_.load(std::memory_order_relaxed);
    if (min_active_epoch() >= g)
      global_epoch_.compare_exchange_strong(g, g + 1, std::memory_order_acq_rel);
  }

  void collect(int slot) {
    try_advance();
    u64 safe = min_active_epoch();
    u64 g = global_epoch_.load(std::memory_order_acquire);
    if (safe > g) safe = g;
    auto& list = slots_[slot].retired;
    u64 kept = 0;
    for (u64 i = 0; i < list.size(); i++) {
      // Items retired in epoch e are safe once every active thread has entered
      // an epoch > e (threads in e could still hold the pointer).
      if (list[i].epoch < safe) {
        list[i].fn();
      } else {
        list[kept++] = std::move(list[i]);
      }
    }
    list.resize(kept);
  }

  const u64 mgr_id_;
  std::atomic<u64> global_epoch_{1};
  std::atomic<int> next_slot_{0};
  Slot slots_[kMaxThreads];
};

}  // namespace treetier

#pragma once

#include <atomic>

#include "treetier/tier.hpp"

namespace treetier {

// One byte per node: 7-bit level plus the tier flag in the top bit. B+tree
// nodes store height-above-leaf here (stable across root splits); radix tree
// nodes store the discriminated key-byte position.
class NodeMeta {
 public:
  NodeMeta() : bits_(0) {}

  void init(u8 level, TierId tier) { bits_.store(pack(level, tier), std::memory_order_relaxed); }

  u8 level() const { return bits_.load(std::memory_order_relaxed) & 0x7f; }
  TierId tier() const {
    return (bits_.load(std::memory_order_relaxed) & 0x80) ? TierId::Fast : TierId::Slow;
  }
  void set_tier(TierId t) {
    u8 cur = bits_.load(std::memory_order_relaxed);
    for (;;) {
      u8 next = pack(cur & 0x7f, t);
      if (bits_.compare_exchange_weak(cur, next, std::memory_order_relaxed)) return;
    }
  }
  u8 raw() const { return bits_.load(std::memory_order_relaxed); }

 private:
  static u8 pack(u8 level, TierId tier) {
    return u8((level & 0x7f) | (tier == TierId::Fast ? 0x80 : 0x00));
  }
  std::atomic<u8> bits_;
};
static_assert(sizeof(NodeMeta) == 1, "node metadata must be exactly one byte");

// Two bytes per leaf: a saturating access-frequency counter.
class AccessCounter {
 public:
  AccessCounter() : freq_(0) {}

  void increment() {
    u16 cur = freq_.load(std::memory_order_relaxed);
    for (;;) {
      if (cur == kMax) return;
      if (freq_.compare_exchange_weak(cur, u16(cur + 1), std::memory_order_relaxed)) return;
    }
  }
  // floor(freq/2); tolerates racing increments (retries on conflict).
  void halve() {
    u16 cur = freq_.load(std::memory_order_relaxed);
    while (!freq_.compare_exchange_weak(cur, u16(cur / 2), std::memory_order_relaxed)) {
    }
  }
  u16 load() const { return freq_.load(std::memory_order_relaxed); }
  void store(u16 v) { freq_.store(v, std::memory_order_relaxed); }

  static constexpr u16 kMax = 65535;

 private:
  std::atomic<u16> freq_;
};
static_assert(sizeof(AccessCounter) == 2, "leaf access counter must be exactly two bytes");

// Metadata growth over an unmanaged index: one byte on internal nodes, three
// on leaves.
constexpr std::size_t kInternalMetaBytes = sizeof(NodeMeta);
constexpr std::size_t kLeafMetaBytes = sizeof(NodeMeta) + sizeof(AccessCounter);

// Optimistic version latch shared by both indexes.
//   bit 0: write-locked
//   bit 1: obsolete (node retired; readers must restart)
//   bit 2: migrating (a relocation of this node is in flight)
//   bits 3+: version counter, bumped on every write unlock
class VersionLatch {
 public:
  static constexpr u64 kLocked = 1ull << 0;
  static constexpr u64 kObsolete = 1ull << 1;
  static constexpr u64 kMigrating = 1ull << 2;
  static constexpr u64 kVersionStep = 1ull << 3;

  u64 read_lock_or_restart(bool& need_restart) const {
    u64 v = word_.load(std::memory_order_acquire);
    need_restart = (v & (kLocked | kObsolete)) != 0;
    return v;
  }

  void check_or_restart(u64 start, bool& need_restart) const {
    need_restart = word_.load(std::memory_order_acquire) != start;
  }

  void upgrade_to_write_or_restart(u64 start, bool& need_restart) {
    u64 expected = start;
    need_restart = !word_.compare_exchange_strong(expected, start | kLocked,
                                                  std::memory_order_acquire);
  }

  void write_lock_or_restart(bool& need_restart) {
    u64 v = read_lock_or_restart(need_restart);
    if (need_restart) return;
    upgrade_to_write_or_restart(v, need_restart);
  }

  bool try_write_lock() {
    bool restart;
    write_lock_or_restart(restart);
    return !restart;
  }

  void write_unlock() { word_.fetch_add(kVersionStep - kLocked, std::memory_order_release); }

  // Unlock leaving the node marked dead; readers holding the pointer restart.
  void write_unlock_obsolete(bool migrating = false) {
    u64 marks = kObsolete | (migrating ? kMigrating : 0);
    word_.fetch_add(kVersionStep - kLocked + marks, std::memory_order_release);
  }

  void set_migrating() { word_.fetch_or(kMigrating, std::memory_order_release); }

  bool is_obsolete() const { return word_.load(std::memory_order_acquire) & kObsolete; }
  bool is_locked() const { return word_.load(std::memory_order_acquire) & kLocked; }
  bool is_migrating() const { return word_.load(std::memory_order_acquire) & kMigrating; }
  u64 raw() const { return word_.load(std::memory_order_acquire); }

 private:
  std::atomic<u64> word_{0};
};

}  // namespace treetier

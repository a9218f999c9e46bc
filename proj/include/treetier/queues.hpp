#pragma once

#include <deque>
#include <mutex>
#include <optional>
#include <unordered_set>

#include "treetier/adapter.hpp"

namespace treetier {

struct MigrationEntry {
  NodeRef node = nullptr;
  u64 repr_key = 0;
  TierId expected_tier = TierId::Slow;
  // Leaf candidates revalidate their frequency against the current threshold
  // at pop time; ancestor entries only revalidate reachability.
  bool leaf_candidate = false;
  u8 retries = 0;
};

// FIFO of migration candidates with enqueue-side dedup. Entries are validated
// at pop time by the executors; stale ones are dropped there.
class MigrationQueue {
 public:
  explicit MigrationQueue(size_t capacity = 1u << 20) : capacity_(capacity) {}

  bool push(const MigrationEntry& e) {
    std::lock_guard<std::mutex> g(mu_);
    if (q_.size() >= capacity_) return false;
    if (!members_.insert(e.node).second) return false;  // already queued
    q_.push_back(e);
    return true;
  }

  std::optional<MigrationEntry> pop() {
    std::lock_guard<std::mutex> g(mu_);
    if (q_.empty()) return std::nullopt;
    MigrationEntry e = q_.front();
    q_.pop_front();
    members_.erase(e.node);
    return e;
  }

  size_t size() const {
    std::lock_guard<std::mutex> g(mu_);
    return q_.size();
  }
  bool empty() const { return size() == 0; }

  void clear() {
    std::lock_guard<std::mutex> g(mu_);
    q_.clear();
    members_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::deque<MigrationEntry> q_;
  std::unordered_set<NodeRef> members_;
  size_t capacity_;
};

struct MigrationQueues {
  MigrationQueue promotion_q;
  MigrationQueue demotion_q;
  size_t wake_threshold = 1024;
};

}  // namespace treetier

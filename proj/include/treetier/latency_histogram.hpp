#pragma once

#include <array>
#include <atomic>
#include <bit>

#include "treetier/tier.hpp"

namespace treetier {

// Log-bucketed latency recorder with 7-bit mantissa precision: relative
// quantile error is at most 1/128 (comfortably under 1% at p99). Values in
// nanoseconds up to ~2^42.
class LatencyHistogram {
 public:
  static constexpr int kMantissa = 128;
  static constexpr int kExactLimit = 256;
  static constexpr int kExps = 36;
  static constexpr int kBuckets = kExactLimit + kExps * kMantissa;

  void record(u64 ns) {
    buckets_[index_of(ns)].fetch_add(1, std::memory_order_relaxed);
    sum_.fetch_add(ns, std::memory_order_relaxed);
    count_.fetch_add(1, std::memory_order_relaxed);
  }

  u64 count() const { return count_.load(std::memory_order_relaxed); }
  double mean() const {
    u64 c = count();
    return c ? double(sum_.load(std::memory_order_relaxed)) / double(c) : 0.0;
  }

  u64 percentile(double p) const {
    u64 total = count();
    if (total == 0) return 0;
    u64 target = u64(p * double(total));
    if (target >= total) target = total - 1;
    u64 seen = 0;
    for (int i = 0; i < kBuckets; i++) {
      seen += buckets_[i].load(std::memory_order_relaxed);
      if (seen > target) return value_of(i);
    }
    return value_of(kBuckets - 1);
  }

 private:
  static int index_of(u64 v) {
    if (v < kExactLimit) return int(v);
    int exp = std::bit_width(v) - 8;  // mantissa in [128, 256)
    if (exp > kExps) exp = kExps;
    u64 mant = (v >> exp) - kMantissa;
    if (mant >= kMantissa) mant = kMantissa - 1;
    return kExactLimit + (exp - 1) * kMantissa + int(mant);
  }

  static u64 value_of(int idx) {
    if (idx < kExactLimit) return u64(idx);
    int exp = (idx - kExactLimit) / kMantissa + 1;
    u64 mant = u64((idx - kExactLimit) % kMantissa) + kMantissa;
    return (mant << exp) | (1ull << (exp - 1));  // bucket midpoint
  }

  std::array<std::atomic<u64>, kBuckets> buckets_{};
  std::atomic<u64> sum_{0};
  std::atomic<u64> count_{0};
};

}  // namespace treetier

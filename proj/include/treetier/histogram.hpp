#pragma once

#include <array>
#include <bit>
#include <mutex>

#include "treetier/tier.hpp"

namespace treetier {

// Logarithmic distribution of leaf access frequencies. bin(f) = 0 for f <= 1,
// floor(log2 f) otherwise; a 16-bit counter lands in bins 0..15.
class FreqHistogram {
 public:
  static constexpr int kBins = 18;
  static constexpr int kTopBin = 15;

  static int bin_of(u32 freq) { return freq <= 1 ? 0 : std::bit_width(freq) - 1; }
  // Smallest frequency that falls in `bin` (2^bin, except bin 0 which starts
  // at 0).
  static u32 lower_bound_of(int bin) { return bin == 0 ? 0 : (1u << bin); }

  void reset() {
    std::lock_guard<std::mutex> g(mu_);
    bins_fill(0);
    total_ = 0;
  }

  void replace(const std::array<u64, kBins>& bins, u64 total) {
    std::lock_guard<std::mutex> g(mu_);
    bins_ = bins;
    total_ = total;
  }

  // Cooling halves all frequencies; on a log scale that is one left shift of
  // the bins, with bin 0 absorbing bin 1.
  void shift_left() {
    std::lock_guard<std::mutex> g(mu_);
    bins_[0] += bins_[1];
    for (int i = 1; i < kBins - 1; i++) bins_[i] = bins_[i + 1];
    bins_[kBins - 1] = 0;
  }

  std::array<u64, kBins> bins() const {
    std::lock_guard<std::mutex> g(mu_);
    return bins_;
  }
  u64 total_leaves() const {
    std::lock_guard<std::mutex> g(mu_);
    return total_;
  }
  void snapshot(std::array<u64, kBins>& bins, u64& total) const {
    std::lock_guard<std::mutex> g(mu_);
    bins = bins_;
    total = total_;
  }

 private:
  void bins_fill(u64 v) { bins_.fill(v); }

  mutable std::mutex mu_;
  std::array<u64, kBins> bins_{};
  u64 total_ = 0;
};

}  // namespace treetier

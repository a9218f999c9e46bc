#pragma once

#include <algorithm>
#include <atomic>

#include "treetier/tier.hpp"

namespace treetier {

// Plain-value snapshot of the tunable set; also used as the pre-strain save
// slot the watermark maintainer restores from.
struct ParamSnapshot {
  int l_fast = 0;
  int l_demote = 0;
  double p_hot = 0.0;
  double p_cold = 0.0;
  u32 t_hot = 0;
  u32 t_cold = 0;

  bool operator==(const ParamSnapshot&) const = default;
};

// The shared tunables read on the critical path and adjusted by background
// workers. Fields are individually atomic; readers take racy-but-monotone
// snapshots, never locks.
class PlacementParams {
 public:
  // Depth thresholds (depth 0 = root, increasing downward).
  std::atomic<int> l_fast{64};
  std::atomic<int> l_demote{2};
  // Target hot/cold leaf fractions.
  std::atomic<double> p_hot{0.1};
  std::atomic<double> p_cold{0.8};
  // Frequency thresholds derived from the histogram (bin lower bounds).
  std::atomic<u32> t_hot{2};
  std::atomic<u32> t_cold{0};
  // Fast-usage watermarks.
  std::atomic<double> u_high{0.95};
  std::atomic<double> u_low{0.85};

  // Adjustment magnitudes (the paper gives directions, not sizes).
  double strain_p_step = 0.05;
  double abundant_p_step = 0.025;
  int strain_l_step = 1;
  int abundant_l_step = 1;
  int max_depth = 127;

  PlacementParams() = default;
  PlacementParams(const PlacementParams& o) { copy_from(o); }
  PlacementParams& operator=(const PlacementParams& o) {
    copy_from(o);
    return *this;
  }

  ParamSnapshot snapshot() const {
    return ParamSnapshot{l_fast.load(), l_demote.load(), p_hot.load(),
                         p_cold.load(), t_hot.load(),    t_cold.load()};
  }
  void restore(const ParamSnapshot& s) {
    l_fast.store(s.l_fast);
    l_demote.store(s.l_demote);
    p_hot.store(s.p_hot);
    p_cold.store(s.p_cold);
    t_hot.store(s.t_hot);
    t_cold.store(s.t_cold);
  }

  // Strain direction: more demotion, fewer fast allocations. l_demote_floor
  // comes from the footprint-based clamp; l_fast never drops below 1 so the
  // root stays eligible.
  void apply_strain_step(int l_demote_floor) {
    p_cold.store(std::min(1.0, p_cold.load() + strain_p_step));
    p_hot.store(std::max(0.0, p_hot.load() - strain_p_step));
    l_demote.store(std::max(l_demote_floor, l_demote.load() - strain_l_step));
    l_fast.store(std::max(1, l_fast.load() - strain_l_step));
  }

  bool strain_fully_clamped(int l_demote_floor) const {
    return p_cold.load() >= 1.0 && p_hot.load() <= 0.0 &&
           l_demote.load() <= l_demote_floor && l_fast.load() <= 1;
  }

  // Abundant direction: conservative, half-size deltas for the fractions.
  void apply_abundant_step() {
    p_hot.store(std::min(1.0, p_hot.load() + abundant_p_step));
    p_cold.store(std::max(0.0, p_cold.load() - abundant_p_step));
    l_demote.store(std::min(max_depth, l_demote.load() + abundant_l_step));
    l_fast.store(std::min(max_depth, l_fast.load() + abundant_l_step));
  }

 private:
  void copy_from(const PlacementParams& o) {
    restore(o.snapshot());
    u_high.store(o.u_high.load());
    u_low.store(o.u_low.load());
    strain_p_step = o.strain_p_step;
    abundant_p_step = o.abundant_p_step;
    strain_l_step = o.strain_l_step;
    abundant_l_step = o.abundant_l_step;
    max_depth = o.max_depth;
  }
};

}  // namespace treetier

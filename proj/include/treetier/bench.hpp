#pragma once

#include <optional>
#include <string>
#include <vector>

#include "treetier/engine.hpp"
#include "treetier/latency_histogram.hpp"
#include "treetier/workloads.hpp"

namespace treetier {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class IndexKind : u8 { BTree, Art };
enum class PolicyKind : u8 { Managed, WeightedInterleave, InternodeFast };

struct RunConfig {
  IndexKind index = IndexKind::BTree;
  PolicyKind policy = PolicyKind::Managed;
  double fast_frac = 0.2;  // weighted_interleave allocation probability

  // Exactly one of the two: an absolute byte budget, or a fraction of the
  // loaded tree footprint (resolved by a sizing pass).
  u64 fast_capacity_bytes = 0;
  double fast_budget_fraction = 0.0;

  u64 slow_capacity_bytes = 0;
  u64 c_fast = 1;
  u64 c_slow = 2;
  u64 delay_ns_fast = 0;
  u64 delay_ns_slow = 0;

  u32 value_size = 8;
  WorkloadSpec workload;
  u64 shift_every_ops = 0;

  u32 threads = 1;
  u64 warmup_ops = 0;
  u64 measure_ops = 100'000;
  u64 seed = 1;

  ClockMode clock = ClockMode::VirtualTick;
  u64 trigger_interval_ms = 500;
  u64 cooler_interval_ms = 2000;
  u64 watermark_interval_ms = 100;
  u64 virtual_trigger_every_ops = 500;
  u64 virtual_cooler_every_ops = 2000;
  u64 virtual_watermark_every_ops = 100;

  double u_high = 0.95;
  double u_low = 0.85;
  u64 wake_threshold = 1024;
  double cold_slow_fraction = 0.1;
  double strain_p_step = 0.05;
  double abundant_p_step = 0.025;
  int l_fast_init = 64;
  int l_demote_init = 2;

  u64 timeline_every_ops = 1000;    // virtual clock
  u64 timeline_interval_ms = 100;   // wall clock
  std::string out_dir;

  // Parses a flat JSON document; unknown keys are rejected.
  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_json_file(const std::string& path);
};

struct TimelineSample {
  double t_ms;
  double usage_ratio;
  u64 promoted_cum;
  u64 demoted_cum;
  double fast_access_ratio;
};

struct KindLatency {
  u64 ops = 0;
  u64 p50 = 0;
  u64 p90 = 0;
  u64 p99 = 0;
  double avg = 0;
};

struct RunReport {
  double throughput_ops_s = 0;
  double elapsed_ms = 0;
  u64 ops = 0;
  KindLatency latency[5];  // indexed by OpKind

  double fast_access_ratio_all = 0;
  double fast_access_ratio_leaf = 0;
  u64 accesses_fast = 0;
  u64 accesses_slow = 0;
  u64 leaf_accesses_fast = 0;
  u64 leaf_accesses_slow = 0;

  u64 promoted = 0;
  u64 demoted = 0;
  u64 total_cost = 0;
  double cost_per_op = 0;

  u64 tree_footprint_bytes = 0;
  u64 fast_capacity_bytes = 0;

  double worker_cpu_share[5] = {0, 0, 0, 0, 0};
  double worker_cpu_share_total = 0;

  std::vector<TimelineSample> timeline;

  std::string to_json(const RunConfig& cfg) const;
  static void write_timeline_csv(const std::vector<TimelineSample>& tl, const std::string& path);
};

RunReport run(const RunConfig& cfg);

struct ComparisonReport {
  RunReport a;
  RunReport b;
  double throughput_delta_pct = 0;
  double cost_per_op_delta_pct = 0;
  double p99_read_delta_pct = 0;
  std::string to_json(const RunConfig& ca, const RunConfig& cb) const;
};

// Paired A/B with a shared workload and seed; rejects mismatched workloads.
ComparisonReport compare(const RunConfig& a, const RunConfig& b);

}  // namespace treetier

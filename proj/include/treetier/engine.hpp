#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

#include "treetier/adapter.hpp"
#include "treetier/epoch.hpp"
#include "treetier/histogram.hpp"
#include "treetier/params.hpp"
#include "treetier/placement.hpp"
#include "treetier/queues.hpp"
#include "treetier/tiered_heap.hpp"

namespace treetier {

enum class ClockMode : u8 { WallClock, VirtualTick };
enum class TickKind : u8 { Trigger, Cooler, Watermark };
enum class WatermarkMode : u8 { Normal, StrainLoop, Restoring };

struct WrongMode : std::logic_error {
  WrongMode() : std::logic_error("tick() requires VirtualTick mode") {}
};

struct EngineConfig {
  ClockMode clock = ClockMode::VirtualTick;
  u64 trigger_interval_ms = 500;
  u64 cooler_interval_ms = 2000;
  u64 watermark_interval_ms = 100;
  size_t wake_threshold = 1024;
  double cold_slow_fraction = 0.1;  // share of cold slow leaves fed to the demotion queue
  u32 max_strain_iterations = 64;
  u8 relocate_retries = 3;
};

struct ScanStats {
  u64 n_promo_candidates = 0;
  u64 n_demo_candidates = 0;
  u64 n_leaves = 0;
};

// What one watermark step did; tests assert against this.
struct WatermarkActions {
  bool entered_strain = false;
  bool strain_iteration = false;
  bool exited_strain = false;
  bool exited_early = false;  // Optimization 1: usage fell below U_low mid-strain
  bool restored = false;
  bool abundant_adjusted = false;
};

struct EngineStats {
  u64 promoted = 0;
  u64 demoted = 0;
  u64 scans = 0;
  u64 cools = 0;
  u64 strain_entries = 0;
  u64 strain_exits = 0;
  u64 restore_mismatches = 0;
  // Trigger, Promoter, Demoter, Cooler, Maintainer
  std::array<u64, 5> worker_cpu_ns{};
};

// The five background workers (migration trigger, promotion executor, demotion
// executor, cooler, watermark maintainer) plus the queues and the watermark
// control loop. In VirtualTick mode nothing runs except through tick().
class BackgroundEngine {
 public:
  BackgroundEngine(TreeAdapter& adapter, TieredHeap& heap, EpochManager& ebr,
                   PlacementParams& params, EngineConfig cfg);
  ~BackgroundEngine();

  BackgroundEngine(const BackgroundEngine&) = delete;

  // Worker steps (runnable directly from tests and from the worker threads).
  ScanStats trigger_scan();
  u64 run_promotions();
  u64 run_demotions();
  WatermarkActions watermark_step();
  void cooler_step();

  // VirtualTick driver: runs one step of the named worker on the calling
  // thread. tick(Trigger) also drains both queues inline, since virtual mode
  // has no executor threads.
  void tick(TickKind kind);

  void start_background();
  void stop_background();

  // Drains queues and the retire backlog; used at quiescent points in tests.
  void quiesce();

  FreqHistogram& histogram() { return hist_; }
  MigrationQueues& queues() { return queues_; }
  PlacementParams& params() { return params_; }
  WatermarkMode watermark_mode() const { return mode_.load(); }
  bool promotions_halted() const { return promotions_halted_.load(); }
  EngineStats stats() const;
  const EngineConfig& config() const { return cfg_; }

  // Optimization 2 clamp: smallest depth whose protected upper-level footprint
  // reaches half the fast budget.
  int l_demote_floor() const;

 private:
  enum Worker : int { kTrigger = 0, kPromoter, kDemoter, kCooler, kMaintainer };

  void strain_iteration(WatermarkActions& act);
  void exit_strain(WatermarkActions& act, bool early);
  void wake_executors();
  void maintainer_loop();
  void trigger_loop();
  void promoter_loop();
  void demoter_loop();
  void cooler_loop();

  class CpuTimer;

  TreeAdapter& adapter_;
  TieredHeap& heap_;
  EpochManager& ebr_;
  PlacementParams& params_;
  EngineConfig cfg_;

  FreqHistogram hist_;
  MigrationQueues queues_;

  // Watermark state.
  std::atomic<WatermarkMode> mode_{WatermarkMode::Normal};
  std::atomic<bool> promotions_halted_{false};
  ParamSnapshot saved_params_;
  bool saved_valid_ = false;
  u32 strain_iterations_ = 0;
  std::mutex watermark_mu_;  // watermark_step is not reentrant

  // Counters.
  std::atomic<u64> promoted_total_{0};
  std::atomic<u64> demoted_total_{0};
  std::atomic<u64> scans_{0};
  std::atomic<u64> cools_{0};
  std::atomic<u64> strain_entries_{0};
  std::atomic<u64> strain_exits_{0};
  std::atomic<u64> restore_mismatches_{0};
  std::atomic<u64> scan_seq_{0};
  std::array<std::atomic<u64>, 5> worker_cpu_ns_{};

  // Wall-clock workers.
  std::atomic<bool> running_{false};
  std::atomic<bool> pressure_signal_{false};
  std::vector<std::thread> threads_;
  std::mutex cv_mu_;
  std::condition_variable promo_cv_;
  std::condition_variable demo_cv_;
  std::condition_variable maint_cv_;
};

}  // namespace treetier

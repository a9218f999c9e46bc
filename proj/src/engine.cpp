#include "treetier/engine.hpp"

#include <ctime>

namespace treetier {

namespace {
u64 thread_cpu_ns() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return u64(ts.tv_sec) * 1'000'000'000ull + u64(ts.tv_nsec);
}
}  // namespace

class BackgroundEngine::CpuTimer {
 public:
  CpuTimer(BackgroundEngine& e, Worker w) : e_(e), w_(w), start_(thread_cpu_ns()) {}
  ~CpuTimer() { e_.worker_cpu_ns_[w_].fetch_add(thread_cpu_ns() - start_, std::memory_order_relaxed); }

 private:
  BackgroundEngine& e_;
  Worker w_;
  u64 start_;
};

BackgroundEngine::BackgroundEngine(TreeAdapter& adapter, TieredHeap& heap, EpochManager& ebr,
                                   PlacementParams& params, EngineConfig cfg)
    : adapter_(adapter), heap_(heap), ebr_(ebr), params_(params), cfg_(cfg) {
  queues_.wake_threshold = cfg_.wake_threshold;
  if (cfg_.clock == ClockMode::WallClock) {
    heap_.set_pressure_callback(params_.u_high.load(), [this] {
      pressure_signal_.store(true, std::memory_order_release);
      maint_cv_.notify_all();
    });
  }
}

BackgroundEngine::~BackgroundEngine() { stop_background(); }

ScanStats BackgroundEngine::trigger_scan() {
  CpuTimer t(*this, kTrigger);
  EpochManager::Guard g(ebr_);
  ScanStats stats;

  const u32 t_hot = params_.t_hot.load(std::memory_order_relaxed);
  const u32 t_cold = params_.t_cold.load(std::memory_order_relaxed);
  const u64 seq = scan_seq_.fetch_add(1, std::memory_order_relaxed);
  const u32 every = cfg_.cold_slow_fraction > 0 ? u32(1.0 / cfg_.cold_slow_fraction + 0.5) : 0;

  std::array<u64, FreqHistogram::kBins> bins{};
  u64 total = 0;
  u64 cold_slow_seen = 0;

  adapter_.for_each_leaf([&](const LeafView& leaf) {
    bins[FreqHistogram::bin_of(leaf.freq)]++;
    total++;
    if (leaf.freq > t_hot && leaf.tier == TierId::Slow) {
      if (queues_.promotion_q.push({leaf.node, leaf.repr_key, TierId::Slow, true}))
        stats.n_promo_candidates++;
    } else if (leaf.freq < t_cold) {
      if (leaf.tier == TierId::Fast) {
        if (queues_.demotion_q.push({leaf.node, leaf.repr_key, TierId::Fast, true}))
          stats.n_demo_candidates++;
      } else if (every != 0 && (cold_slow_seen++ + seq) % every == 0) {
        // Optimization 3: feed a rotating share of cold slow leaves so their
        // cold ancestors can eventually leave fast memory.
        if (queues_.demotion_q.push({leaf.node, leaf.repr_key, TierId::Slow, true}))
          stats.n_demo_candidates++;
      }
    }
    if (queues_.promotion_q.size() > queues_.wake_threshold ||
        queues_.demotion_q.size() > queues_.wake_threshold)
      wake_executors();
    return true;
  });
  stats.n_leaves = total;

  hist_.replace(bins, total);
  update_thresholds(hist_, params_);
  scans_.fetch_add(1, std::memory_order_relaxed);
  wake_executors();
  return stats;
}

u64 BackgroundEngine::run_promotions() {
  CpuTimer t(*this, kPromoter);
  EpochManager::Guard g(ebr_);
  u64 promoted = 0;

  while (!promotions_halted_.load(std::memory_order_acquire)) {
    auto e = queues_.promotion_q.pop();
    if (!e) break;
    // Revalidate: still a hot leaf in slow memory.
    if (!adapter_.is_leaf(e->node)) continue;
    if (adapter_.tier_of(e->node) != TierId::Slow) continue;
    if (adapter_.freq_of(e->node) <= params_.t_hot.load(std::memory_order_relaxed)) continue;

    // Walk the path top-down, relocating the slow frontier until the leaf is
    // fast. Keeps the single-boundary structure at every intermediate instant.
    u8 busy_retries = cfg_.relocate_retries;
    for (;;) {
      if (heap_.usage_ratio(TierId::Fast) >= params_.u_high.load(std::memory_order_relaxed)) {
        pressure_signal_.store(true, std::memory_order_release);
        maint_cv_.notify_all();
        return promoted;  // abort; remaining entries stay queued
      }
      PathProbe probe = adapter_.first_slow_on_path(e->repr_key);
      if (!probe.node) break;  // whole path already fast
      RelocateResult res = adapter_.relocate(probe.node, e->repr_key, TierId::Fast, false);
      if (res.status == RelocateStatus::Done) {
        promoted++;
        promoted_total_.fetch_add(1, std::memory_order_relaxed);
        if (probe.is_leaf) break;
        continue;
      }
      if (res.status == RelocateStatus::FastExhausted) {
        pressure_signal_.store(true, std::memory_order_release);
        maint_cv_.notify_all();
        return promoted;
      }
      if (res.status == RelocateStatus::Busy && busy_retries-- > 0) continue;
      break;  // stale or persistently busy: give up on this path
    }
  }
  return promoted;
}

u64 BackgroundEngine::run_demotions() {
  CpuTimer t(*this, kDemoter);
  EpochManager::Guard g(ebr_);
  u64 demoted = 0;

  for (;;) {
    auto e = queues_.demotion_q.pop();
    if (!e) break;

    const bool leaf = adapter_.is_leaf(e->node);
    if (e->leaf_candidate) {
      if (!leaf) continue;
      if (adapter_.tier_of(e->node) != e->expected_tier) continue;
      if (adapter_.freq_of(e->node) >= params_.t_cold.load(std::memory_order_relaxed)) continue;
    }

    if (int(adapter_.depth_of(e->node)) < params_.l_demote.load(std::memory_order_relaxed))
      continue;  // protected upper level

    if (adapter_.tier_of(e->node) == TierId::Slow) {
      // Already slow (cold slow leaf from Optimization 3, or an ancestor that
      // lost its last fast child earlier). Under the single-boundary structure
      // it cannot have a fast child; just propagate its parent.
      NodeRef parent = adapter_.parent_of(e->node, e->repr_key);
      if (parent)
        queues_.demotion_q.push({parent, e->repr_key, adapter_.tier_of(parent), false});
      continue;
    }

    RelocateResult res =
        adapter_.relocate(e->node, e->repr_key, TierId::Slow, /*require_children_slow=*/true);
    switch (res.status) {
      case RelocateStatus::Done:
        demoted++;
        demoted_total_.fetch_add(1, std::memory_order_relaxed);
        if (res.parent)
          queues_.demotion_q.push({res.parent, e->repr_key, adapter_.tier_of(res.parent), false});
        break;
      case RelocateStatus::GuardFailed:
        break;  // a fast child keeps it pinned; do not propagate
      case RelocateStatus::Busy:
        if (e->retries < cfg_.relocate_retries) {
          MigrationEntry retry = *e;
          retry.retries++;
          queues_.demotion_q.push(retry);
        }
        break;
      case RelocateStatus::Stale:
      case RelocateStatus::FastExhausted:
        break;
    }
  }
  return demoted;
}

void BackgroundEngine::cooler_step() {
  CpuTimer t(*this, kCooler);
  EpochManager::Guard g(ebr_);
  cool(adapter_, hist_);
  cools_.fetch_add(1, std::memory_order_relaxed);
}

int BackgroundEngine::l_demote_floor() const {
  const u64 half = heap_.budget().fast_capacity / 2;
  const u32 h = adapter_.height();
  u64 cum = 0;
  for (u32 d = 0; d <= h; d++) {
    if (cum >= half) return int(d);
    cum += adapter_.footprint_at_depth(d);
  }
  return cum >= half ? int(h) : 0;
}

WatermarkActions BackgroundEngine::watermark_step() {
  CpuTimer t(*this, kMaintainer);
  std::lock_guard<std::mutex> g(watermark_mu_);
  WatermarkActions act;

  const double usage = heap_.usage_ratio(TierId::Fast);
  const WatermarkMode mode = mode_.load(std::memory_order_acquire);

  if (mode == WatermarkMode::Normal) {
    if (usage > params_.u_high.load(std::memory_order_relaxed)) {
      promotions_halted_.store(true, std::memory_order_release);
      saved_params_ = params_.snapshot();
      saved_valid_ = true;
      strain_iterations_ = 0;
      mode_.store(WatermarkMode::StrainLoop, std::memory_order_release);
      strain_entries_.fetch_add(1, std::memory_order_relaxed);
      act.entered_strain = true;
      strain_iteration(act);
    } else if (usage < params_.u_low.load(std::memory_order_relaxed)) {
      params_.apply_abundant_step();
      act.abundant_adjusted = true;  // parameters only; no migration triggered
    }
  } else {
    strain_iteration(act);
  }
  return act;
}

void BackgroundEngine::strain_iteration(WatermarkActions& act) {
  act.strain_iteration = true;
  params_.apply_strain_step(l_demote_floor());
  trigger_scan();
  const u64 demoted = run_demotions();  // synchronous: queue drained on return
  strain_iterations_++;

  const double usage = heap_.usage_ratio(TierId::Fast);
  if (usage < params_.u_low.load(std::memory_order_relaxed)) {
    // Optimization 1: over-demotion; abandon queued demotion work immediately.
    queues_.demotion_q.clear();
    exit_strain(act, /*early=*/true);
  } else if (usage <= params_.u_high.load(std::memory_order_relaxed)) {
    exit_strain(act, /*early=*/false);
  } else if ((demoted == 0 && params_.strain_fully_clamped(l_demote_floor())) ||
             strain_iterations_ >= cfg_.max_strain_iterations) {
    // Nothing left to demote (budget smaller than the protected levels): give
    // up rather than spin.
    exit_strain(act, /*early=*/false);
  }
}

void BackgroundEngine::exit_strain(WatermarkActions& act, bool early) {
  mode_.store(WatermarkMode::Restoring, std::memory_order_release);
  params_.restore(saved_params_);
  if (!(params_.snapshot() == saved_params_))
    restore_mismatches_.fetch_add(1, std::memory_order_relaxed);
  saved_valid_ = false;
  promotions_halted_.store(false, std::memory_order_release);
  mode_.store(WatermarkMode::Normal, std::memory_order_release);
  strain_exits_.fetch_add(1, std::memory_order_relaxed);
  act.exited_strain = true;
  act.exited_early = early;
  act.restored = true;
  promo_cv_.notify_all();
}

void BackgroundEngine::tick(TickKind kind) {
  if (cfg_.clock != ClockMode::VirtualTick) throw WrongMode();
  switch (kind) {
    case TickKind::Trigger:
      trigger_scan();
      run_demotions();
      run_promotions();
      break;
    case TickKind::Cooler:
      cooler_step();
      break;
    case TickKind::Watermark:
      watermark_step();
      break;
  }
}

void BackgroundEngine::quiesce() {
  for (int i = 0; i < 4; i++) {
    run_demotions();
    run_promotions();
  }
  ebr_.flush();
}

EngineStats BackgroundEngine::stats() const {
  EngineStats s;
  s.promoted = promoted_total_.load();
  s.demoted = demoted_total_.load();
  s.scans = scans_.load();
  s.cools = cools_.load();
  s.strain_entries = strain_entries_.load();
  s.strain_exits = strain_exits_.load();
  s.restore_mismatches = restore_mismatches_.load();
  for (int i = 0; i < 5; i++) s.worker_cpu_ns[i] = worker_cpu_ns_[i].load();
  return s;
}

void BackgroundEngine::wake_executors() {
  if (cfg_.clock != ClockMode::WallClock) return;
  promo_cv_.notify_all();
  demo_cv_.notify_all();
}

void BackgroundEngine::start_background() {
  if (cfg_.clock != ClockMode::WallClock)
    throw std::logic_error("background threads require WallClock mode");
  if (running_.exchange(true)) return;
  threads_.emplace_back([this] { trigger_loop(); });
  threads_.emplace_back([this] { promoter_loop(); });
  threads_.emplace_back([this] { demoter_loop(); });
  threads_.emplace_back([this] { cooler_loop(); });
  threads_.emplace_back([this] { maintainer_loop(); });
}

void BackgroundEngine::stop_background() {
  if (!running_.exchange(false)) return;
  promo_cv_.notify_all();
  demo_cv_.notify_all();
  maint_cv_.notify_all();
  for (auto& t : threads_) t.join();
  threads_.clear();
}

void BackgroundEngine::trigger_loop() {
  while (running_.load(std::memory_order_acquire)) {
    {
      std::unique_lock<std::mutex> lk(cv_mu_);
      maint_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.trigger_interval_ms),
                         [this] { return !running_.load(); });
    }
    if (!running_.load()) break;
    // The strain loop owns the trigger while active.
    if (mode_.load(std::memory_order_acquire) == WatermarkMode::Normal) trigger_scan();
  }
}

void BackgroundEngine::promoter_loop() {
  while (running_.load(std::memory_order_acquire)) {
    {
      std::unique_lock<std::mutex> lk(cv_mu_);
      promo_cv_.wait_for(lk, std::chrono::milliseconds(50), [this] {
        return !running_.load() ||
               (!queues_.promotion_q.empty() && !promotions_halted_.load());
      });
    }
    if (!running_.load()) break;
    if (!promotions_halted_.load()) run_promotions();
  }
}

void BackgroundEngine::demoter_loop() {
  while (running_.load(std::memory_order_acquire)) {
    {
      std::unique_lock<std::mutex> lk(cv_mu_);
      demo_cv_.wait_for(lk, std::chrono::milliseconds(50),
                        [this] { return !running_.load() || !queues_.demotion_q.empty(); });
    }
    if (!running_.load()) break;
    run_demotions();
  }
}

void BackgroundEngine::cooler_loop() {
  while (running_.load(std::memory_order_acquire)) {
    {
      std::unique_lock<std::mutex> lk(cv_mu_);
      maint_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.cooler_interval_ms),
                         [this] { return !running_.load(); });
    }
    if (!running_.load()) break;
    cooler_step();
  }
}

void BackgroundEngine::maintainer_loop() {
  while (running_.load(std::memory_order_acquire)) {
    {
      std::unique_lock<std::mutex> lk(cv_mu_);
      maint_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.watermark_interval_ms), [this] {
        return !running_.load() || pressure_signal_.load(std::memory_order_acquire);
      });
    }
    if (!running_.load()) break;
    pressure_signal_.store(false, std::memory_order_release);
    watermark_step();
    // Keep iterating promptly while the strain loop is active.
    while (running_.load() && mode_.load(std::memory_order_acquire) == WatermarkMode::StrainLoop)
      watermark_step();
  }
}

}  // namespace treetier

#include "treetier/bench.hpp"

#include <json.hpp>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "treetier/art.hpp"
#include "treetier/btree.hpp"
#include "treetier/hooks.hpp"

namespace treetier {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- config ------------------------------------------------------------------

namespace {

IndexKind parse_index(const std::string& s) {
  if (s == "btree") return IndexKind::BTree;
  if (s == "art") return IndexKind::Art;
  throw ConfigError("unknown index: " + s);
}

PolicyKind parse_policy(const std::string& s) {
  if (s == "sinlk") return PolicyKind::Managed;
  if (s == "weighted_interleave") return PolicyKind::WeightedInterleave;
  if (s == "internode_fast") return PolicyKind::InternodeFast;
  throw ConfigError("unknown policy: " + s);
}

KeyDist parse_dist(const std::string& s) {
  if (s == "zipfian") return KeyDist::Zipfian;
  if (s == "skewed_partition") return KeyDist::SkewedPartition;
  if (s == "uniform") return KeyDist::Uniform;
  if (s == "trace") return KeyDist::Trace;
  throw ConfigError("unknown distribution: " + s);
}

OpMix parse_workload_name(const std::string& s) {
  if (s == "ycsb_a" || s == "update_heavy") return {50, 50, 0, 0, 0};
  if (s == "ycsb_b" || s == "read_mostly") return {95, 5, 0, 0, 0};
  if (s == "ycsb_c" || s == "read_only") return {100, 0, 0, 0, 0};
  if (s == "ycsb_d" || s == "with_insert" || s == "read_latest") return {95, 0, 5, 0, 0};
  if (s == "ycsb_e" || s == "short_ranges") return {0, 0, 5, 95, 0};
  if (s == "ycsb_f" || s == "rmw") return {50, 0, 0, 0, 50};
  throw ConfigError("unknown workload: " + s);
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  bool mix_given = false;
  for (auto& [key, val] : j.items()) {
    try {
      if (key == "index") c.index = parse_index(val.get<std::string>());
      else if (key == "policy") c.policy = parse_policy(val.get<std::string>());
      else if (key == "fast_frac") c.fast_frac = val.get<double>();
      else if (key == "fast_capacity_bytes") c.fast_capacity_bytes = val.get<u64>();
      else if (key == "fast_budget_fraction") c.fast_budget_fraction = val.get<double>();
      else if (key == "slow_capacity_bytes") c.slow_capacity_bytes = val.get<u64>();
      else if (key == "c_fast") c.c_fast = val.get<u64>();
      else if (key == "c_slow") c.c_slow = val.get<u64>();
      else if (key == "delay_ns_fast") c.delay_ns_fast = val.get<u64>();
      else if (key == "delay_ns_slow") c.delay_ns_slow = val.get<u64>();
      else if (key == "value_size") c.value_size = val.get<u32>();
      else if (key == "n_records") c.workload.n_records = val.get<u64>();
      else if (key == "key_width") c.workload.key_width = val.get<u32>();
      else if (key == "workload") { c.workload.mix = parse_workload_name(val.get<std::string>()); mix_given = true; }
      else if (key == "read_pct") { c.workload.mix.read_pct = val.get<u32>(); mix_given = true; }
      else if (key == "update_pct") { c.workload.mix.update_pct = val.get<u32>(); mix_given = true; }
      else if (key == "insert_pct") { c.workload.mix.insert_pct = val.get<u32>(); mix_given = true; }
      else if (key == "scan_pct") { c.workload.mix.scan_pct = val.get<u32>(); mix_given = true; }
      else if (key == "rmw_pct") { c.workload.mix.rmw_pct = val.get<u32>(); mix_given = true; }
      else if (key == "distribution") c.workload.dist = parse_dist(val.get<std::string>());
      else if (key == "zipf_theta") c.workload.zipf_theta = val.get<double>();
      else if (key == "zipf_scramble") c.workload.zipf_scramble = val.get<bool>();
      else if (key == "hot_frac") c.workload.hot_frac = val.get<double>();
      else if (key == "hot_prob") c.workload.hot_prob = val.get<double>();
      else if (key == "hot_start") c.workload.hot_start = val.get<u64>();
      else if (key == "shift_displacement") c.workload.shift_displacement = val.get<u64>();
      else if (key == "shift_every_ops") c.shift_every_ops = val.get<u64>();
      else if (key == "trace_path") c.workload.trace_path = val.get<std::string>();
      else if (key == "threads") c.threads = val.get<u32>();
      else if (key == "warmup_ops") c.warmup_ops = val.get<u64>();
      else if (key == "measure_ops") c.measure_ops = val.get<u64>();
      else if (key == "seed") c.seed = val.get<u64>();
      else if (key == "clock") {
        std::string s = val.get<std::string>();
        if (s == "wall") c.clock = ClockMode::WallClock;
        else if (s == "virtual") c.clock = ClockMode::VirtualTick;
        else throw ConfigError("unknown clock mode: " + s);
      }
      else if (key == "trigger_interval_ms") c.trigger_interval_ms = val.get<u64>();
      else if (key == "cooler_interval_ms") c.cooler_interval_ms = val.get<u64>();
      else if (key == "watermark_interval_ms") c.watermark_interval_ms = val.get<u64>();
      else if (key == "virtual_trigger_every_ops") c.virtual_trigger_every_ops = val.get<u64>();
      else if (key == "virtual_cooler_every_ops") c.virtual_cooler_every_ops = val.get<u64>();
      else if (key == "virtual_watermark_every_ops") c.virtual_watermark_every_ops = val.get<u64>();
      else if (key == "u_high") c.u_high = val.get<double>();
      else if (key == "u_low") c.u_low = val.get<double>();
      else if (key == "wake_threshold") c.wake_threshold = val.get<u64>();
      else if (key == "cold_slow_fraction") c.cold_slow_fraction = val.get<double>();
      else if (key == "strain_p_step") c.strain_p_step = val.get<double>();
      else if (key == "abundant_p_step") c.abundant_p_step = val.get<double>();
      else if (key == "l_fast_init") c.l_fast_init = val.get<int>();
      else if (key == "l_demote_init") c.l_demote_init = val.get<int>();
      else if (key == "timeline_every_ops") c.timeline_every_ops = val.get<u64>();
      else if (key == "timeline_interval_ms") c.timeline_interval_ms = val.get<u64>();
      else if (key == "out_dir") c.out_dir = val.get<std::string>();
      else throw ConfigError("unknown config key: " + key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("bad value for key '" + key + "': " + e.what());
    }
  }
  (void)mix_given;

  // Validation.
  if (!c.workload.mix.valid()) throw ConfigError("operation mix must sum to 100");
  if (c.workload.key_width != 8) throw ConfigError("key_width must be 8");
  if (c.workload.n_records == 0) throw ConfigError("n_records must be positive");
  switch (c.value_size) {
    case 8: case 16: case 32: case 64: case 128: case 256: break;
    default: throw ConfigError("value_size must be one of 8,16,32,64,128,256");
  }
  if ((c.fast_capacity_bytes == 0) == (c.fast_budget_fraction <= 0.0))
    throw ConfigError("exactly one of fast_capacity_bytes / fast_budget_fraction is required");
  if (c.threads == 0) throw ConfigError("threads must be positive");
  if (!(c.u_low < c.u_high && c.u_high <= 1.0 && c.u_low >= 0.0))
    throw ConfigError("watermarks must satisfy 0 <= u_low < u_high <= 1");
  if (c.index == IndexKind::Art && c.workload.mix.scan_pct > 0)
    throw ConfigError("the radix tree does not implement scan");
  if (c.workload.dist == KeyDist::Trace && c.workload.trace_path.empty())
    throw ConfigError("trace distribution requires trace_path");
  if (!c.workload.valid()) throw ConfigError("invalid workload parameters");
  return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

// ---- values -------------------------------------------------------------------

namespace {

template <size_t N>
struct FixedValue {
  std::array<u8, N> bytes;
};

template <size_t N>
FixedValue<N> value_for(u64 key) {
  FixedValue<N> v;
  u64 pat = key * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull;
  for (size_t i = 0; i < N; i += 8) std::memcpy(v.bytes.data() + i, &pat, std::min<size_t>(8, N - i));
  return v;
}

template <size_t N>
bool value_matches(const FixedValue<N>& v, u64 key) {
  u64 pat = key * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull;
  u64 got = 0;
  if constexpr (N >= 8) {
    std::memcpy(&got, v.bytes.data(), 8);
    return got == pat;
  } else {
    std::memcpy(&got, v.bytes.data(), N);
    u64 mask = (1ull << (8 * N)) - 1;
    return (got & mask) == (pat & mask);
  }
}

// Uniform operations over either index; the radix tree maps update/rmw writes
// onto upsert and has no scan.
template <typename Tree>
struct TreeOps;

template <typename V>
struct TreeOps<BPlusTree<V>> {
  using Tree = BPlusTree<V>;
  static constexpr bool kHasScan = true;
  static bool get(Tree& t, u64 k, V& out) { return t.get(k, out); }
  static void insert(Tree& t, u64 k, const V& v) { t.insert(k, v); }
  static void update(Tree& t, u64 k, const V& v) { t.update(k, v); }
  static u64 scan(Tree& t, u64 k, u32 len) { return t.scan(k, int(len)).size(); }
};

template <typename V>
struct TreeOps<AdaptiveRadixTree<V>> {
  using Tree = AdaptiveRadixTree<V>;
  static constexpr bool kHasScan = false;
  static bool get(Tree& t, u64 k, V& out) { return t.get(k, out); }
  static void insert(Tree& t, u64 k, const V& v) { t.insert(k, v); }
  static void update(Tree& t, u64 k, const V& v) { t.insert(k, v); }
  static u64 scan(Tree&, u64, u32) { return 0; }
};

struct SlowOnlyHooks final : PlacementHooks {
  TierId choose(u32, bool, TierId, u32) override { return TierId::Slow; }
  bool track_accesses() const override { return false; }
};

u64 now_ns() {
  return u64(std::chrono::duration_cast<std::chrono::nanoseconds>(
                 std::chrono::steady_clock::now().time_since_epoch())
                 .count());
}

u64 process_cpu_ns() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return u64(ts.tv_sec) * 1'000'000'000ull + u64(ts.tv_nsec);
}

// Shared trace dispenser for replay runs; loops the file until the op budget
// is met.
class TraceFeed {
 public:
  explicit TraceFeed(const std::string& path) : path_(path) { reader_.emplace(path_); }
  bool next(TraceRecord& out) {
    std::lock_guard<std::mutex> g(mu_);
    if (reader_->next(out)) return true;
    reader_.emplace(path_);
    return reader_->next(out);
  }

 private:
  std::string path_;
  std::optional<TraceReader> reader_;
  std::mutex mu_;
};

template <template <typename> class IndexT, size_t VS>
RunReport run_impl(const RunConfig& cfg) {
  using V = FixedValue<VS>;
  using Tree = IndexT<V>;
  using Ops = TreeOps<Tree>;
  using AdapterT =
      std::conditional_t<Ops::kHasScan, BTreeAdapter<V>, ArtAdapter<V>>;

  const WorkloadSpec& wspec = cfg.workload;
  const u64 n = wspec.n_records;

  // Resolve the fast budget, with a sizing pass when given as a fraction.
  u64 fast_capacity = cfg.fast_capacity_bytes;
  u64 footprint = 0;
  if (cfg.fast_budget_fraction > 0) {
    TierBudget sizing;
    sizing.fast_capacity = 1 << 20;  // unused: everything lands slow
    TieredHeap sheap(sizing);
    EpochManager sebr;
    SlowOnlyHooks shooks;
    {
      Tree stree(sheap, sebr, shooks);
      for (u64 k = 0; k < n; k++) Ops::insert(stree, k, value_for<VS>(k));
      footprint = sheap.used_bytes(TierId::Fast) + sheap.used_bytes(TierId::Slow);
    }
    fast_capacity = u64(double(footprint) * cfg.fast_budget_fraction);
    if (fast_capacity == 0) fast_capacity = 1;
  }

  TierBudget budget;
  budget.fast_capacity = fast_capacity;
  budget.slow_capacity = cfg.slow_capacity_bytes;
  budget.c_fast = cfg.c_fast;
  budget.c_slow = cfg.c_slow;
  budget.delay_ns_fast = cfg.delay_ns_fast;
  budget.delay_ns_slow = cfg.delay_ns_slow;
  if (!budget.valid()) throw ConfigError("invalid tier budget");

  TieredHeap heap(budget);
  EpochManager ebr;
  PlacementParams params;
  params.l_fast.store(cfg.l_fast_init);
  params.l_demote.store(cfg.l_demote_init);
  params.u_high.store(cfg.u_high);
  params.u_low.store(cfg.u_low);
  params.strain_p_step = cfg.strain_p_step;
  params.abundant_p_step = cfg.abundant_p_step;

  ManagedHooks managed(params, heap);
  WeightedInterleaveHooks weighted(heap, cfg.fast_frac, cfg.seed);
  InternodeFastHooks internode(heap);
  PlacementHooks* hooks = nullptr;
  switch (cfg.policy) {
    case PolicyKind::Managed: hooks = &managed; break;
    case PolicyKind::WeightedInterleave: hooks = &weighted; break;
    case PolicyKind::InternodeFast: hooks = &internode; break;
  }

  Tree tree(heap, ebr, *hooks);
  AdapterT adapter(tree);

  EngineConfig ecfg;
  ecfg.clock = cfg.clock;
  ecfg.trigger_interval_ms = cfg.trigger_interval_ms;
  ecfg.cooler_interval_ms = cfg.cooler_interval_ms;
  ecfg.watermark_interval_ms = cfg.watermark_interval_ms;
  ecfg.wake_threshold = cfg.wake_threshold;
  ecfg.cold_slow_fraction = cfg.cold_slow_fraction;
  std::optional<BackgroundEngine> engine;
  const bool managed_policy = cfg.policy == PolicyKind::Managed;
  if (managed_policy) engine.emplace(adapter, heap, ebr, params, ecfg);

  // ---- load phase -----------------------------------------------------------
  for (u64 k = 0; k < n; k++) Ops::insert(tree, k, value_for<VS>(k));
  if (footprint == 0)
    footprint = heap.used_bytes(TierId::Fast) + heap.used_bytes(TierId::Slow);

  if (managed_policy) {
    u64 leaves = 0;
    adapter.for_each_leaf([&](const LeafView&) {
      leaves++;
      return true;
    });
    init_hot_cold_fractions(params, heap, leaves, adapter.leaf_node_bytes());
    if (cfg.clock == ClockMode::WallClock) engine->start_background();
  }

  // ---- worker machinery -------------------------------------------------------
  std::atomic<u64> insert_next{n};
  std::atomic<u64> global_ops{0};
  std::atomic<u64> integrity_errors{0};
  std::atomic<u64> shift_epoch{0};

  auto zipf = wspec.dist == KeyDist::Zipfian
                  ? std::make_shared<ZipfTable>(n, wspec.zipf_theta)
                  : nullptr;
  std::optional<TraceFeed> trace;
  if (wspec.dist == KeyDist::Trace) trace.emplace(wspec.trace_path);

  LatencyHistogram hists[5];
  std::atomic<bool> measuring{false};

  auto tick_if_due = [&](u64 c) {
    if (!managed_policy || cfg.clock != ClockMode::VirtualTick) return;
    if (cfg.virtual_watermark_every_ops && c % cfg.virtual_watermark_every_ops == 0)
      engine->tick(TickKind::Watermark);
    if (cfg.virtual_cooler_every_ops && c % cfg.virtual_cooler_every_ops == 0)
      engine->tick(TickKind::Cooler);
    if (cfg.virtual_trigger_every_ops && c % cfg.virtual_trigger_every_ops == 0)
      engine->tick(TickKind::Trigger);
  };

  // Timeline capture.
  std::vector<TimelineSample> timeline;
  std::mutex timeline_mu;
  u64 t0_ns = 0;
  u64 last_af = 0, last_as = 0;
  auto sample_timeline = [&] {
    HeapStats hs = heap.stats();
    std::lock_guard<std::mutex> g(timeline_mu);
    u64 daf = hs.accesses_fast - last_af;
    u64 das = hs.accesses_slow - last_as;
    last_af = hs.accesses_fast;
    last_as = hs.accesses_slow;
    TimelineSample s;
    s.t_ms = double(now_ns() - t0_ns) / 1e6;
    s.usage_ratio = heap.usage_ratio(TierId::Fast);
    if (managed_policy) {
      auto es = engine->stats();
      s.promoted_cum = es.promoted;
      s.demoted_cum = es.demoted;
    } else {
      s.promoted_cum = s.demoted_cum = 0;
    }
    s.fast_access_ratio = (daf + das) ? double(daf) / double(daf + das) : 1.0;
    timeline.push_back(s);
  };

  auto run_phase = [&](u64 total_ops, bool record) {
    const u32 nt = cfg.threads;
    std::vector<std::thread> ts;
    for (u32 t = 0; t < nt; t++) {
      u64 my_ops = total_ops / nt + (t == 0 ? total_ops % nt : 0);
      ts.emplace_back([&, t, my_ops] {
        OpGenerator gen(wspec, cfg.seed, t, zipf);
        gen.set_insert_cursor(&insert_next);
        gen.set_insert_key_source([&] { return insert_next.fetch_add(1); });
        u64 local_shift_epoch = 0;
        for (u64 i = 0; i < my_ops; i++) {
          u64 c = global_ops.fetch_add(1) + 1;
          tick_if_due(c);
          if (cfg.shift_every_ops && c % cfg.shift_every_ops == 0) {
            shift_epoch.fetch_add(1);
          }
          u64 se = shift_epoch.load(std::memory_order_relaxed);
          if (se != local_shift_epoch && wspec.dist == KeyDist::SkewedPartition) {
            WorkloadSpec shifted = gen.spec();
            shifted.hot_start =
                (wspec.hot_start + se * wspec.shift_displacement) % wspec.n_records;
            gen.set_spec(shifted);
            local_shift_epoch = se;
          }
          if (record && cfg.clock == ClockMode::VirtualTick && cfg.timeline_every_ops &&
              c % cfg.timeline_every_ops == 0)
            sample_timeline();

          Operation op;
          if (trace) {
            TraceRecord rec;
            if (!trace->next(rec)) break;
            op.kind = rec.kind;
            op.key = rec.key;
            op.scan_len = rec.value_size ? rec.value_size : 10;
            if (op.kind == OpKind::Scan && !Ops::kHasScan) op.kind = OpKind::Read;
          } else {
            op = gen.next();
          }

          u64 start = record ? now_ns() : 0;
          switch (op.kind) {
            case OpKind::Read: {
              V out;
              if (Ops::get(tree, op.key, out) && !value_matches(out, op.key))
                integrity_errors.fetch_add(1);
              break;
            }
            case OpKind::Update:
              Ops::update(tree, op.key, value_for<VS>(op.key));
              break;
            case OpKind::Insert:
              Ops::insert(tree, op.key, value_for<VS>(op.key));
              break;
            case OpKind::Scan:
              Ops::scan(tree, op.key, op.scan_len);
              break;
            case OpKind::ReadModifyWrite: {
              V out;
              Ops::get(tree, op.key, out);
              Ops::update(tree, op.key, value_for<VS>(op.key));
              break;
            }
          }
          if (record) hists[int(op.kind)].record(now_ns() - start);
        }
      });
    }
    for (auto& th : ts) th.join();
  };

  // ---- warmup ------------------------------------------------------------------
  if (cfg.warmup_ops) run_phase(cfg.warmup_ops, false);

  // ---- measure -----------------------------------------------------------------
  HeapStats h0 = heap.stats();
  u64 leaf_f0 = tree.access_stats().leaf_fast.load();
  u64 leaf_s0 = tree.access_stats().leaf_slow.load();
  u64 promoted0 = 0, demoted0 = 0;
  if (managed_policy) {
    auto es = engine->stats();
    promoted0 = es.promoted;
    demoted0 = es.demoted;
  }
  u64 cpu0 = process_cpu_ns();
  std::array<u64, 5> wcpu0{};
  if (managed_policy) wcpu0 = engine->stats().worker_cpu_ns;

  t0_ns = now_ns();
  {
    HeapStats hs = heap.stats();
    last_af = hs.accesses_fast;
    last_as = hs.accesses_slow;
  }
  measuring.store(true);

  std::atomic<bool> sampler_stop{false};
  std::thread sampler;
  if (cfg.clock == ClockMode::WallClock) {
    sampler = std::thread([&] {
      while (!sampler_stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg.timeline_interval_ms));
        if (sampler_stop.load()) break;
        sample_timeline();
      }
    });
  }

  run_phase(cfg.measure_ops, true);

  u64 elapsed = now_ns() - t0_ns;
  if (sampler.joinable()) {
    sampler_stop.store(true);
    sampler.join();
  }
  if (managed_policy && cfg.clock == ClockMode::WallClock) engine->stop_background();

  // ---- report -------------------------------------------------------------------
  HeapStats h1 = heap.stats();
  RunReport r;
  r.ops = cfg.measure_ops;
  r.elapsed_ms = double(elapsed) / 1e6;
  r.throughput_ops_s = r.elapsed_ms > 0 ? double(cfg.measure_ops) / (r.elapsed_ms / 1e3) : 0;
  for (int k = 0; k < 5; k++) {
    r.latency[k].ops = hists[k].count();
    r.latency[k].p50 = hists[k].percentile(0.50);
    r.latency[k].p90 = hists[k].percentile(0.90);
    r.latency[k].p99 = hists[k].percentile(0.99);
    r.latency[k].avg = hists[k].mean();
  }
  r.accesses_fast = h1.accesses_fast - h0.accesses_fast;
  r.accesses_slow = h1.accesses_slow - h0.accesses_slow;
  u64 atot = r.accesses_fast + r.accesses_slow;
  r.fast_access_ratio_all = atot ? double(r.accesses_fast) / double(atot) : 0;
  r.leaf_accesses_fast = tree.access_stats().leaf_fast.load() - leaf_f0;
  r.leaf_accesses_slow = tree.access_stats().leaf_slow.load() - leaf_s0;
  u64 ltot = r.leaf_accesses_fast + r.leaf_accesses_slow;
  r.fast_access_ratio_leaf = ltot ? double(r.leaf_accesses_fast) / double(ltot) : 0;
  r.total_cost = r.accesses_fast * budget.c_fast + r.accesses_slow * budget.c_slow;
  r.cost_per_op = cfg.measure_ops ? double(r.total_cost) / double(cfg.measure_ops) : 0;
  if (managed_policy) {
    auto es = engine->stats();
    r.promoted = es.promoted - promoted0;
    r.demoted = es.demoted - demoted0;
    u64 cpu1 = process_cpu_ns();
    u64 cpu_total = cpu1 > cpu0 ? cpu1 - cpu0 : 1;
    double total_share = 0;
    for (int w = 0; w < 5; w++) {
      u64 wns = es.worker_cpu_ns[w] - wcpu0[w];
      r.worker_cpu_share[w] = double(wns) / double(cpu_total);
      total_share += r.worker_cpu_share[w];
    }
    r.worker_cpu_share_total = total_share;
  }
  r.tree_footprint_bytes = footprint;
  r.fast_capacity_bytes = fast_capacity;
  r.timeline = std::move(timeline);

  if (integrity_errors.load()) throw std::runtime_error("value integrity check failed");

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream js(fs::path(cfg.out_dir) / "report.json");
    js << r.to_json(cfg) << "\n";
    RunReport::write_timeline_csv(r.timeline, (fs::path(cfg.out_dir) / "timeline.csv").string());
  }
  return r;
}

template <template <typename> class IndexT>
RunReport run_index(const RunConfig& cfg) {
  switch (cfg.value_size) {
    case 8: return run_impl<IndexT, 8>(cfg);
    case 16: return run_impl<IndexT, 16>(cfg);
    case 32: return run_impl<IndexT, 32>(cfg);
    case 64: return run_impl<IndexT, 64>(cfg);
    case 128: return run_impl<IndexT, 128>(cfg);
    case 256: return run_impl<IndexT, 256>(cfg);
  }
  throw ConfigError("unsupported value_size");
}

}  // namespace

RunReport run(const RunConfig& cfg) {
  if (cfg.index == IndexKind::BTree) return run_index<BPlusTree>(cfg);
  return run_index<AdaptiveRadixTree>(cfg);
}

// ---- comparison -----------------------------------------------------------------

namespace {
json workload_fingerprint(const RunConfig& c) {
  return json{{"n_records", c.workload.n_records},
              {"mix", {c.workload.mix.read_pct, c.workload.mix.update_pct,
                       c.workload.mix.insert_pct, c.workload.mix.scan_pct,
                       c.workload.mix.rmw_pct}},
              {"dist", int(c.workload.dist)},
              {"zipf_theta", c.workload.zipf_theta},
              {"hot_frac", c.workload.hot_frac},
              {"hot_prob", c.workload.hot_prob},
              {"seed", c.seed},
              {"threads", c.threads},
              {"value_size", c.value_size},
              {"warmup_ops", c.warmup_ops},
              {"measure_ops", c.measure_ops}};
}
}  // namespace

ComparisonReport compare(const RunConfig& a, const RunConfig& b) {
  if (workload_fingerprint(a) != workload_fingerprint(b))
    throw ConfigError("compare requires identical workload and seed");
  ComparisonReport out;
  out.a = run(a);
  out.b = run(b);
  auto pct = [](double va, double vb) { return va != 0 ? (vb - va) / va * 100.0 : 0.0; };
  out.throughput_delta_pct = pct(out.a.throughput_ops_s, out.b.throughput_ops_s);
  out.cost_per_op_delta_pct = pct(out.a.cost_per_op, out.b.cost_per_op);
  out.p99_read_delta_pct =
      pct(double(out.a.latency[0].p99), double(out.b.latency[0].p99));
  return out;
}

// ---- serialization -----------------------------------------------------------------

namespace {
const char* kind_name(int k) {
  switch (k) {
    case 0: return "read";
    case 1: return "update";
    case 2: return "insert";
    case 3: return "scan";
    case 4: return "rmw";
  }
  return "?";
}
const char* worker_name(int w) {
  switch (w) {
    case 0: return "trigger";
    case 1: return "promoter";
    case 2: return "demoter";
    case 3: return "cooler";
    case 4: return "maintainer";
  }
  return "?";
}

json report_json(const RunReport& r, const RunConfig& cfg) {
  json lat = json::object();
  for (int k = 0; k < 5; k++) {
    if (r.latency[k].ops == 0) continue;
    lat[kind_name(k)] = {{"ops", r.latency[k].ops},
                         {"p50_ns", r.latency[k].p50},
                         {"p90_ns", r.latency[k].p90},
                         {"p99_ns", r.latency[k].p99},
                         {"avg_ns", r.latency[k].avg}};
  }
  json shares = json::object();
  for (int w = 0; w < 5; w++) shares[worker_name(w)] = r.worker_cpu_share[w];
  return json{
      {"throughput_ops_s", r.throughput_ops_s},
      {"elapsed_ms", r.elapsed_ms},
      {"ops", r.ops},
      {"latency", lat},
      {"fast_access_ratio_all", r.fast_access_ratio_all},
      {"fast_access_ratio_leaf", r.fast_access_ratio_leaf},
      {"accesses_fast", r.accesses_fast},
      {"accesses_slow", r.accesses_slow},
      {"leaf_accesses_fast", r.leaf_accesses_fast},
      {"leaf_accesses_slow", r.leaf_accesses_slow},
      {"promoted", r.promoted},
      {"demoted", r.demoted},
      {"total_cost", r.total_cost},
      {"cost_per_op", r.cost_per_op},
      {"tree_footprint_bytes", r.tree_footprint_bytes},
      {"fast_capacity_bytes", r.fast_capacity_bytes},
      {"worker_cpu_shares", shares},
      {"worker_cpu_share_total", r.worker_cpu_share_total},
      {"timeline_samples", r.timeline.size()},
      {"config",
       {{"index", cfg.index == IndexKind::BTree ? "btree" : "art"},
        {"policy", cfg.policy == PolicyKind::Managed          ? "sinlk"
                   : cfg.policy == PolicyKind::WeightedInterleave ? "weighted_interleave"
                                                                  : "internode_fast"},
        {"threads", cfg.threads},
        {"seed", cfg.seed},
        {"n_records", cfg.workload.n_records},
        {"value_size", cfg.value_size},
        {"clock", cfg.clock == ClockMode::WallClock ? "wall" : "virtual"}}}};
}
}  // namespace

std::string RunReport::to_json(const RunConfig& cfg) const {
  return report_json(*this, cfg).dump(2);
}

void RunReport::write_timeline_csv(const std::vector<TimelineSample>& tl,
                                   const std::string& path) {
  std::ofstream out(path);
  out << "t_ms,usage_ratio,promoted_cum,demoted_cum,fast_access_ratio\n";
  char line[160];
  for (const auto& s : tl) {
    std::snprintf(line, sizeof(line), "%.3f,%.6f,%llu,%llu,%.6f\n", s.t_ms, s.usage_ratio,
                  (unsigned long long)s.promoted_cum, (unsigned long long)s.demoted_cum,
                  s.fast_access_ratio);
    out << line;
  }
}

std::string ComparisonReport::to_json(const RunConfig& ca, const RunConfig& cb) const {
  return json{{"a", report_json(a, ca)},
              {"b", report_json(b, cb)},
              {"deltas_b_vs_a_pct",
               {{"throughput", throughput_delta_pct},
                {"cost_per_op", cost_per_op_delta_pct},
                {"p99_read", p99_read_delta_pct}}}}
      .dump(2);
}

}  // namespace treetier

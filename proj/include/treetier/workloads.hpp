#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "treetier/tier.hpp"

namespace treetier {

enum class OpKind : u8 { Read, Update, Insert, Scan, ReadModifyWrite };

struct Operation {
  OpKind kind;
  u64 key;
  u32 scan_len = 0;
};

struct OpMix {
  u32 read_pct = 100;
  u32 update_pct = 0;
  u32 insert_pct = 0;
  u32 scan_pct = 0;
  u32 rmw_pct = 0;

  bool valid() const { return read_pct + update_pct + insert_pct + scan_pct + rmw_pct == 100; }
};

enum class KeyDist : u8 { Uniform, Zipfian, SkewedPartition, Trace };

struct WorkloadSpec {
  OpMix mix;
  KeyDist dist = KeyDist::Zipfian;
  u64 n_records = 1'000'000;
  u32 key_width = 8;
  u32 value_size = 8;

  double zipf_theta = 0.99;
  bool zipf_scramble = false;  // YCSB-style hashed rank->key spreading

  // Skewed Partition: hot_prob of requests target hot_frac contiguous keys.
  double hot_frac = 0.05;
  double hot_prob = 0.90;
  u64 hot_start = 0;

  // Optional periodic hot-region displacement.
  u64 shift_displacement = 0;

  std::string trace_path;

  bool valid() const {
    if (!mix.valid() || n_records == 0 || key_width != 8) return false;
    if (dist == KeyDist::SkewedPartition)
      return hot_frac > 0 && hot_frac < 1 && hot_prob > 0 && hot_prob <= 1;
    if (dist == KeyDist::Zipfian) return zipf_theta > 0 && zipf_theta < 2;
    return true;
  }
};

struct WrongDistribution : std::logic_error {
  WrongDistribution() : std::logic_error("operation requires a SkewedPartition distribution") {}
};

// Displaces the hot region by spec.shift_displacement keys, wrapping at the
// end of the keyspace.
WorkloadSpec shift_hot_region(const WorkloadSpec& spec);

// splitmix64; identical streams for identical seeds on every platform.
class Rng {
 public:
  explicit Rng(u64 seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}
  u64 next() {
    u64 z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Unbiased-enough 64x64->128 range reduction.
  u64 below(u64 bound) { return u64((__uint128_t(next()) * bound) >> 64); }
  double uniform01() { return double(next() >> 11) * 0x1.0p-53; }

 private:
  u64 state_;
};

// Exact inverse-CDF Zipfian sampler: rank r (0-based) drawn with probability
// (1/(r+1)^theta) / H_{n,theta}. The cumulative table is shared across
// per-thread generators.
class ZipfTable {
 public:
  ZipfTable(u64 n, double theta);
  u64 sample_rank(double u) const;  // u in [0,1)
  double pmf(u64 rank) const;
  u64 n() const { return n_; }

 private:
  u64 n_;
  double theta_;
  std::vector<double> cdf_;
};

// Deterministic per-thread operation generator. Thread t of a run seeds with
// (global_seed, t); generators are never shared.
class OpGenerator {
 public:
  OpGenerator(const WorkloadSpec& spec, u64 global_seed, u32 thread_id,
              std::shared_ptr<const ZipfTable> zipf = nullptr);

  Operation next();

  // Read-latest support: the harness publishes insert progress here.
  void set_insert_cursor(const std::atomic<u64>* cursor) { insert_cursor_ = cursor; }
  // Keys for insert ops are handed out by the harness (globally unique).
  void set_insert_key_source(std::function<u64()> fn) { next_insert_key_ = std::move(fn); }

  const WorkloadSpec& spec() const { return spec_; }
  void set_spec(const WorkloadSpec& s) { spec_ = s; }

 private:
  u64 draw_key();
  u64 draw_recent_key();

  WorkloadSpec spec_;
  Rng rng_;
  std::shared_ptr<const ZipfTable> zipf_;
  std::shared_ptr<const ZipfTable> recent_zipf_;
  const std::atomic<u64>* insert_cursor_ = nullptr;
  std::function<u64()> next_insert_key_;
};

std::shared_ptr<const ZipfTable> make_zipf_table(const WorkloadSpec& spec);

// ---- trace replay ----------------------------------------------------------

struct TraceRecord {
  OpKind kind;
  u64 key;
  u32 value_size = 0;
};

struct ParseError : std::runtime_error {
  explicit ParseError(u64 line)
      : std::runtime_error("trace parse error at line " + std::to_string(line)), line(line) {}
  u64 line;
};

// Streaming reader for the plain-text trace format: one `<R|W|S> <key> [size]`
// per line, UTF-8, newline-delimited.
class TraceReader {
 public:
  explicit TraceReader(const std::string& path);
  ~TraceReader();
  // Returns false at end of stream; throws ParseError on malformed input.
  bool next(TraceRecord& out);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace treetier

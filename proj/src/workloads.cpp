#include "treetier/workloads.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>

namespace treetier {

WorkloadSpec shift_hot_region(const WorkloadSpec& spec) {
  if (spec.dist != KeyDist::SkewedPartition) throw WrongDistribution();
  WorkloadSpec out = spec;
  out.hot_start = (spec.hot_start + spec.shift_displacement) % spec.n_records;
  return out;
}

ZipfTable::ZipfTable(u64 n, double theta) : n_(n), theta_(theta) {
  cdf_.resize(n);
  double acc = 0;
  for (u64 r = 0; r < n; r++) {
    acc += 1.0 / std::pow(double(r + 1), theta);
    cdf_[r] = acc;
  }
  double norm = acc;
  for (auto& c : cdf_) c /= norm;
  cdf_.back() = 1.0;
}

u64 ZipfTable::sample_rank(double u) const {
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) return n_ - 1;
  return u64(it - cdf_.begin());
}

double ZipfTable::pmf(u64 rank) const {
  if (rank >= n_) return 0;
  return rank == 0 ? cdf_[0] : cdf_[rank] - cdf_[rank - 1];
}

std::shared_ptr<const ZipfTable> make_zipf_table(const WorkloadSpec& spec) {
  if (spec.dist != KeyDist::Zipfian) return nullptr;
  return std::make_shared<ZipfTable>(spec.n_records, spec.zipf_theta);
}

namespace {
// FNV-1a, the YCSB scrambling hash.
u64 fnv64(u64 v) {
  u64 h = 0xcbf29ce484222325ull;
  for (int i = 0; i < 8; i++) {
    h ^= (v >> (i * 8)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace

OpGenerator::OpGenerator(const WorkloadSpec& spec, u64 global_seed, u32 thread_id,
                         std::shared_ptr<const ZipfTable> zipf)
    : spec_(spec), rng_(global_seed * 0x51ull + thread_id * 0x9e37ull + 1), zipf_(std::move(zipf)) {
  if (spec_.dist == KeyDist::Zipfian && !zipf_)
    zipf_ = std::make_shared<ZipfTable>(spec_.n_records, spec_.zipf_theta);
  // Read-latest window: zipfian over the most recent 1% of the keyspace.
  u64 window = std::max<u64>(1, spec_.n_records / 100);
  recent_zipf_ = std::make_shared<ZipfTable>(window, spec_.zipf_theta);
}

u64 OpGenerator::draw_key() {
  switch (spec_.dist) {
    case KeyDist::Uniform:
      return rng_.below(spec_.n_records);
    case KeyDist::Zipfian: {
      u64 rank = zipf_->sample_rank(rng_.uniform01());
      return spec_.zipf_scramble ? fnv64(rank) % spec_.n_records : rank;
    }
    case KeyDist::SkewedPartition: {
      u64 n = spec_.n_records;
      u64 hot_n = std::max<u64>(1, u64(double(n) * spec_.hot_frac));
      if (rng_.uniform01() < spec_.hot_prob) {
        return (spec_.hot_start + rng_.below(hot_n)) % n;
      }
      u64 cold_n = n - hot_n;
      u64 off = rng_.below(cold_n);
      return (spec_.hot_start + hot_n + off) % n;
    }
    case KeyDist::Trace:
      throw std::logic_error("trace workloads replay records, not generated ops");
  }
  return 0;
}

u64 OpGenerator::draw_recent_key() {
  u64 latest = insert_cursor_ ? insert_cursor_->load(std::memory_order_relaxed) : spec_.n_records;
  if (latest == 0) return 0;
  u64 rank = recent_zipf_->sample_rank(rng_.uniform01());
  return rank >= latest ? 0 : latest - 1 - rank;
}

Operation OpGenerator::next() {
  u32 roll = u32(rng_.below(100));
  const OpMix& m = spec_.mix;
  OpKind kind;
  if (roll < m.read_pct)
    kind = OpKind::Read;
  else if (roll < m.read_pct + m.update_pct)
    kind = OpKind::Update;
  else if (roll < m.read_pct + m.update_pct + m.insert_pct)
    kind = OpKind::Insert;
  else if (roll < m.read_pct + m.update_pct + m.insert_pct + m.scan_pct)
    kind = OpKind::Scan;
  else
    kind = OpKind::ReadModifyWrite;

  Operation op{kind, 0, 0};
  switch (kind) {
    case OpKind::Insert:
      op.key = next_insert_key_ ? next_insert_key_() : draw_key();
      break;
    case OpKind::Read:
      // Read-latest mixes (insert-bearing, non-scan) read the recent window.
      if (m.insert_pct > 0 && m.scan_pct == 0 && insert_cursor_)
        op.key = draw_recent_key();
      else
        op.key = draw_key();
      break;
    case OpKind::Scan:
      op.key = draw_key();
      op.scan_len = u32(1 + rng_.below(100));  // YCSB convention: uniform [1,100]
      break;
    default:
      op.key = draw_key();
      break;
  }
  return op;
}

// ---- trace replay ----------------------------------------------------------

struct TraceReader::Impl {
  std::ifstream in;
  u64 line = 0;
};

TraceReader::TraceReader(const std::string& path) : impl_(new Impl) {
  impl_->in.open(path);
  if (!impl_->in.is_open()) throw std::runtime_error("cannot open trace file: " + path);
}

TraceReader::~TraceReader() = default;

bool TraceReader::next(TraceRecord& out) {
  std::string line;
  for (;;) {
    if (!std::getline(impl_->in, line)) return false;
    impl_->line++;
    if (line.empty()) continue;
    char op = 0;
    unsigned long long key = 0, size = 0;
    int n = std::sscanf(line.c_str(), " %c %llu %llu", &op, &key, &size);
    if (n < 2) throw ParseError(impl_->line);
    switch (op) {
      case 'R':
        out = {OpKind::Read, key, u32(size)};
        return true;
      case 'W':
        out = {OpKind::Update, key, u32(size)};
        return true;
      case 'S':
        out = {OpKind::Scan, key, u32(size)};
        return true;
      default:
        throw ParseError(impl_->line);
    }
  }
}

}  // namespace treetier

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "treetier/workloads.hpp"

using namespace treetier;

namespace {

// Upper-tail chi-squared critical value (Wilson-Hilferty approximation).
double chi2_critical(double dof, double z_alpha) {
  double a = 2.0 / (9.0 * dof);
  double x = 1.0 - a + z_alpha * std::sqrt(a);
  return dof * x * x * x;
}
constexpr double kZ99 = 2.3263478740;  // z for alpha = 0.01

WorkloadSpec sp_spec(u64 n = 1'000'000) {
  WorkloadSpec s;
  s.mix = {100, 0, 0, 0, 0};
  s.dist = KeyDist::SkewedPartition;
  s.n_records = n;
  s.hot_frac = 0.05;
  s.hot_prob = 0.90;
  return s;
}

}  // namespace

TEST_CASE("pure-read mix yields only reads") {
  WorkloadSpec s;
  s.mix = {100, 0, 0, 0, 0};
  s.dist = KeyDist::Uniform;
  s.n_records = 1000;
  OpGenerator g(s, 1, 0);
  for (int i = 0; i < 10'000; i++) CHECK(g.next().kind == OpKind::Read);
}

TEST_CASE("mix proportions converge") {
  WorkloadSpec s;
  s.mix = {50, 20, 10, 15, 5};
  s.dist = KeyDist::Uniform;
  s.n_records = 1000;
  OpGenerator g(s, 7, 0);
  g.set_insert_key_source([] { return u64(0); });
  std::map<OpKind, u64> c;
  constexpr int kN = 200'000;
  for (int i = 0; i < kN; i++) c[g.next().kind]++;
  CHECK(double(c[OpKind::Read]) / kN == doctest::Approx(0.50).epsilon(0.02));
  CHECK(double(c[OpKind::Update]) / kN == doctest::Approx(0.20).epsilon(0.02));
  CHECK(double(c[OpKind::Insert]) / kN == doctest::Approx(0.10).epsilon(0.03));
  CHECK(double(c[OpKind::Scan]) / kN == doctest::Approx(0.15).epsilon(0.03));
  CHECK(double(c[OpKind::ReadModifyWrite]) / kN == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("skewed partition: hot-region hit fraction 0.90 +- 0.01 over 1e6 draws") {
  WorkloadSpec s = sp_spec();
  OpGenerator g(s, 42, 0);
  u64 hot_n = u64(double(s.n_records) * s.hot_frac);
  u64 hits = 0;
  constexpr u64 kDraws = 1'000'000;
  for (u64 i = 0; i < kDraws; i++) {
    u64 k = g.next().key;
    if (k >= s.hot_start && k < s.hot_start + hot_n) hits++;
  }
  CHECK(double(hits) / double(kDraws) == doctest::Approx(0.90).epsilon(0.0112));
}

TEST_CASE("zipfian rank-1 frequency within 10% of the analytic mass") {
  WorkloadSpec s;
  s.mix = {100, 0, 0, 0, 0};
  s.dist = KeyDist::Zipfian;
  s.n_records = 1'000'000;
  s.zipf_theta = 0.99;
  auto table = make_zipf_table(s);
  OpGenerator g(s, 9, 0, table);
  u64 rank1 = 0;
  constexpr u64 kDraws = 1'000'000;
  for (u64 i = 0; i < kDraws; i++)
    if (g.next().key == 0) rank1++;
  double analytic = table->pmf(0);
  CHECK(double(rank1) / double(kDraws) == doctest::Approx(analytic).epsilon(0.10));
}

TEST_CASE("zipfian chi-squared goodness of fit at alpha=0.01") {
  WorkloadSpec s;
  s.mix = {100, 0, 0, 0, 0};
  s.dist = KeyDist::Zipfian;
  s.n_records = 100'000;
  s.zipf_theta = 0.99;
  auto table = make_zipf_table(s);
  OpGenerator g(s, 1234, 0, table);
  constexpr u64 kDraws = 1'000'000;

  // Cells: top 50 ranks individually, the tail lumped by powers of two.
  std::vector<std::pair<u64, u64>> cells;  // [lo, hi)
  for (u64 r = 0; r < 50; r++) cells.push_back({r, r + 1});
  for (u64 lo = 50; lo < s.n_records;) {
    u64 hi = std::min<u64>(lo * 2, s.n_records);
    cells.push_back({lo, hi});
    lo = hi;
  }
  std::vector<u64> observed(cells.size(), 0);
  for (u64 i = 0; i < kDraws; i++) {
    u64 k = g.next().key;
    for (size_t c = 0; c < cells.size(); c++)
      if (k >= cells[c].first && k < cells[c].second) {
        observed[c]++;
        break;
      }
  }
  double stat = 0;
  size_t used = 0;
  for (size_t c = 0; c < cells.size(); c++) {
    double expect = 0;
    for (u64 r = cells[c].first; r < cells[c].second; r++) expect += table->pmf(r);
    expect *= double(kDraws);
    if (expect < 5) continue;  // standard cell-size rule
    stat += (observed[c] - expect) * (observed[c] - expect) / expect;
    used++;
  }
  REQUIRE(used > 10);
  CHECK(stat < chi2_critical(double(used - 1), kZ99));
}

TEST_CASE("skewed partition chi-squared goodness of fit at alpha=0.01") {
  WorkloadSpec s = sp_spec(100'000);
  OpGenerator g(s, 77, 0);
  constexpr u64 kDraws = 1'000'000;
  u64 hot_n = u64(double(s.n_records) * s.hot_frac);
  // 20 hot cells + 20 cold cells.
  constexpr int kCells = 40;
  std::vector<u64> observed(kCells, 0);
  for (u64 i = 0; i < kDraws; i++) {
    u64 k = g.next().key;
    if (k < hot_n)
      observed[int(k * 20 / hot_n)]++;
    else
      observed[20 + int((k - hot_n) * 20 / (s.n_records - hot_n))]++;
  }
  double stat = 0;
  for (int c = 0; c < kCells; c++) {
    double expect = (c < 20 ? 0.90 : 0.10) / 20.0 * double(kDraws);
    stat += (observed[c] - expect) * (observed[c] - expect) / expect;
  }
  CHECK(stat < chi2_critical(kCells - 1, kZ99));
}

TEST_CASE("determinism: identical (spec, seed) yields identical streams") {
  WorkloadSpec s = sp_spec(10'000);
  s.mix = {70, 20, 0, 5, 5};
  OpGenerator a(s, 99, 3);
  OpGenerator b(s, 99, 3);
  for (int i = 0; i < 100'000; i++) {
    Operation oa = a.next();
    Operation ob = b.next();
    REQUIRE(oa.kind == ob.kind);
    REQUIRE(oa.key == ob.key);
    REQUIRE(oa.scan_len == ob.scan_len);
  }
  // Different thread id draws a different stream.
  OpGenerator c(s, 99, 4);
  bool same = true;
  OpGenerator a2(s, 99, 3);
  for (int i = 0; i < 1000; i++)
    if (a2.next().key != c.next().key) same = false;
  CHECK(!same);
}

TEST_CASE("hot region shift: displacement, wrap, composition") {
  WorkloadSpec s = sp_spec(1'000'000);
  s.hot_start = 0;
  s.shift_displacement = 100'000;
  WorkloadSpec s1 = shift_hot_region(s);
  CHECK(s1.hot_start == 100'000);

  s.hot_start = 950'000;
  WorkloadSpec s2 = shift_hot_region(s);
  CHECK(s2.hot_start == 50'000);  // wraps

  s.hot_start = 0;
  WorkloadSpec once = shift_hot_region(s);
  WorkloadSpec twice = shift_hot_region(once);
  s.shift_displacement = 200'000;
  WorkloadSpec doubled = shift_hot_region(s);
  CHECK(twice.hot_start == doubled.hot_start);

  WorkloadSpec z;
  z.dist = KeyDist::Zipfian;
  CHECK_THROWS_AS(shift_hot_region(z), WrongDistribution);
}

TEST_CASE("trace reader parses and reports malformed lines") {
  const char* path = "treetier_trace_test.txt";
  {
    std::ofstream out(path);
    out << "R 42\nW 7 64\n";
  }
  {
    TraceReader r(path);
    TraceRecord rec;
    REQUIRE(r.next(rec));
    CHECK(rec.kind == OpKind::Read);
    CHECK(rec.key == 42);
    REQUIRE(r.next(rec));
    CHECK(rec.kind == OpKind::Update);
    CHECK(rec.key == 7);
    CHECK(rec.value_size == 64);
    CHECK(!r.next(rec));
  }
  {
    std::ofstream out(path);
    out << "";
  }
  {
    TraceReader r(path);
    TraceRecord rec;
    CHECK(!r.next(rec));
  }
  {
    std::ofstream out(path);
    out << "X 1\n";
  }
  {
    TraceReader r(path);
    TraceRecord rec;
    try {
      r.next(rec);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line == 1);
    }
  }
  std::remove(path);
}

TEST_CASE("read-latest mixes draw from the recent insert window") {
  WorkloadSpec s;
  s.mix = {95, 0, 5, 0, 0};
  s.dist = KeyDist::Zipfian;
  s.n_records = 100'000;
  OpGenerator g(s, 5, 0);
  std::atomic<u64> cursor{100'000};
  g.set_insert_cursor(&cursor);
  std::atomic<u64> next_key{100'000};
  g.set_insert_key_source([&] { return next_key.fetch_add(1); });

  u64 window = s.n_records / 100;
  u64 reads = 0, in_window = 0;
  for (int i = 0; i < 200'000; i++) {
    Operation op = g.next();
    if (op.kind == OpKind::Insert) cursor.store(next_key.load());
    if (op.kind == OpKind::Read) {
      reads++;
      u64 latest = cursor.load();
      if (op.key >= latest - window && op.key < latest) in_window++;
    }
  }
  CHECK(reads > 0);
  CHECK(double(in_window) / double(reads) > 0.99);
}

TEST_CASE("scan lengths are uniform in [1,100]") {
  WorkloadSpec s;
  s.mix = {0, 0, 0, 100, 0};
  s.dist = KeyDist::Uniform;
  s.n_records = 1000;
  OpGenerator g(s, 3, 0);
  u64 lo = ~0ull, hi = 0, sum = 0;
  constexpr int kN = 100'000;
  for (int i = 0; i < kN; i++) {
    u32 len = g.next().scan_len;
    lo = std::min<u64>(lo, len);
    hi = std::max<u64>(hi, len);
    sum += len;
  }
  CHECK(lo == 1);
  CHECK(hi == 100);
  CHECK(double(sum) / kN == doctest::Approx(50.5).epsilon(0.02));
}

#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "synchro/bench.hpp"

namespace synchro::bench {
namespace {

EngineOptions SmallEngine(EngineMode mode = EngineMode::kSynchro) {
  EngineOptions o;
  o.mode = mode;
  o.background = BackgroundMode::kManual;
  o.granularity.G = 1ull << 20;
  o.granularity.T = 256ull << 10;
  o.granularity.segment_cap = 64ull << 10;
  o.granularity.rowtable_cap = 256ull << 10;
  o.batch_threshold = 256ull << 10;
  o.expected_row_bytes = BenchRowBytes();
  o.cores = 4;
  return o;
}

WorkloadSpec Quick(double mb = 2) {
  WorkloadSpec s;
  s.data_mb = mb;
  s.client_threads = 2;
  s.op_count = 300;
  s.range_rows = 50;
  return s;
}

TEST(Percentile, NearestRankOneToHundred) {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  std::reverse(s.begin(), s.end());
  EXPECT_EQ(*Percentile(s, 50), 50);
  EXPECT_EQ(*Percentile(s, 75), 75);
  EXPECT_EQ(*Percentile(s, 99), 99);
  EXPECT_EQ(*Percentile(s, 99.9), 100);
  EXPECT_EQ(*Percentile(s, 100), 100);
}

TEST(Percentile, DecimalRankIsExact) {
  std::vector<double> s(1000);
  std::iota(s.begin(), s.end(), 1.0);
  EXPECT_EQ(*Percentile(s, 99.9), 999);
  std::vector<double> t(10000);
  std::iota(t.begin(), t.end(), 1.0);
  EXPECT_EQ(*Percentile(t, 99.99), 9999);
}

TEST(Percentile, SingleAndEmpty) {
  for (double p : {50.0, 75.0, 99.0, 99.9, 99.99}) EXPECT_EQ(*Percentile({7.5}, p), 7.5);
  EXPECT_FALSE(Percentile({}, 50).ok());
  EXPECT_FALSE(Percentile({1.0}, 0).ok());
}

TEST(Mix, ParseAndValidate) {
  auto m = ParseMix("q1:3,q2:3,q3:2,q4:1,q5:1");
  ASSERT_TRUE(m.ok());
  EXPECT_EQ(m->w, (std::array<double, 5>{3, 3, 2, 1, 1}));
  EXPECT_EQ(FormatMix(*m), "q1:3,q2:3,q3:2,q4:1,q5:1");
  EXPECT_EQ(ParseMix("q2:0.5")->w, (std::array<double, 5>{0, 0.5, 0, 0, 0}));
  EXPECT_FALSE(ParseMix("q6:1").ok());
  EXPECT_FALSE(ParseMix("x1:1").ok());
  EXPECT_FALSE(ParseMix("q1:abc").ok());
  WorkloadSpec s;
  EXPECT_TRUE(s.validate().ok());
  s.mix = *ParseMix("q1:0");
  EXPECT_FALSE(s.validate().ok());
  s.mix = *ParseMix("q1:-1,q2:2");
  EXPECT_FALSE(s.validate().ok());
  s = WorkloadSpec{};
  s.projection_k = 16;
  EXPECT_FALSE(s.validate().ok());
}

TEST(Rows, FourKilobytesEach) {
  EXPECT_EQ(BenchRowBytes(), 8u + 15 * 8 + 15 * kStringBytes + 8);
  EXPECT_EQ(BenchRowBytes(), 4096u);
  const Row r = BenchRow(17, 100);
  EXPECT_TRUE(validate_row(Schema::Benchmark(), r).ok());
  EXPECT_LT(r.int_at(1), 100);
  EXPECT_EQ(BenchRow(17, 100), r);
  // 100 MiB / 4096 bytes
  EXPECT_NEAR(static_cast<double>(RowsForMb(100)), 100.0 * 1048576 / 4096, 1.0);
  EXPECT_EQ(RowsForMb(0), 0u);
}

TEST(Load, RowCountsAndTable2) {
  Bench b(SmallEngine());
  ASSERT_TRUE(b.load(Quick(2)).ok());
  EXPECT_EQ(b.loaded_rows(), RowsForMb(2));
  Engine& e = b.engine();
  EXPECT_EQ(*e.count(e.snapshot(), b.t1(), KeyRange::All()), RowsForMb(2));
  EXPECT_EQ(*e.count(e.snapshot(), b.t2(), KeyRange::All()), RowsForMb(2) / 10);
  // quiesced: nothing left above the baseline
  auto l = e.layout(b.t1());
  EXPECT_TRUE(l->frozen.empty());
  EXPECT_TRUE(l->delta.empty());
  EXPECT_TRUE(b.load(Quick(2)).code() == StatusCode::kFailedPrecondition);
}

TEST(Load, ZeroIsValidAndEmpty) {
  Bench b(SmallEngine());
  ASSERT_TRUE(b.load(Quick(0)).ok());
  EXPECT_EQ(b.loaded_rows(), 0u);
  EXPECT_EQ(*b.engine().count(b.engine().snapshot(), b.t1(), KeyRange::All()), 0u);
  WorkloadSpec s = Quick(0);
  auto r = b.run(s);
  ASSERT_TRUE(r.ok()) << r.status().message();
  EXPECT_EQ(r->verify_mismatches, 0u);
}

TEST(Run, InsertOnlyMixReportsInsertsOnly) {
  Bench b(SmallEngine());
  ASSERT_TRUE(b.load(Quick()).ok());
  WorkloadSpec s = Quick();
  s.mix = *ParseMix("q1:1");
  auto r = b.run(s);
  ASSERT_TRUE(r.ok());
  auto rows = r->summarize();
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].op, "q1_insert");
  EXPECT_EQ(rows[0].count, 600u);
  EXPECT_EQ(rows[1].op, "all");
  for (std::size_t i = 1; i < kOpKinds; ++i) EXPECT_TRUE(r->samples_ms[i].empty());
  EXPECT_EQ(r->verify_mismatches, 0u);
}

TEST(Run, SameSeedSameOpLog) {
  WorkloadSpec s = Quick();
  std::uint64_t hashes[2];
  for (int i = 0; i < 2; ++i) {
    Bench b(SmallEngine());
    ASSERT_TRUE(b.load(Quick()).ok());
    auto r = b.run(s);
    ASSERT_TRUE(r.ok());
    hashes[i] = r->op_log_hash;
  }
  EXPECT_EQ(hashes[0], hashes[1]);
  EXPECT_EQ(OpLogHash(s, RowsForMb(2), 300), OpLogHash(s, RowsForMb(2), 300));
  WorkloadSpec other = s;
  other.seed = 2;
  EXPECT_NE(OpLogHash(s, RowsForMb(2), 300), OpLogHash(other, RowsForMb(2), 300));
}

TEST(Run, UpdateKeysStayInPoolAndOwnedByOneThread) {
  WorkloadSpec s = Quick();
  s.update_ratio = 0.2;
  s.client_threads = 3;
  s.mix = *ParseMix("q2:1");
  const std::uint64_t rows = 1000;
  for (int t = 0; t < 3; ++t) {
    OpGenerator g(s, rows, t);
    for (int i = 0; i < 500; ++i) {
      auto n = g.next();
      ASSERT_EQ(n.op, Op::kUpdate);
      ASSERT_GE(n.key, 0);
      ASSERT_LT(n.key, 200);
      ASSERT_EQ(n.key % 3, t);
    }
  }
}

TEST(Run, MixedWorkloadVerifiesAgainstDriverOracle) {
  for (auto mode : {EngineMode::kSynchro, EngineMode::kNoScheduler, EngineMode::kIncrementalRow,
                    EngineMode::kIncrementalCol}) {
    EngineOptions o = SmallEngine(mode);
    o.background = BackgroundMode::kThreads;
    o.tick_seconds = 0.01;
    Bench b(o);
    ASSERT_TRUE(b.load(Quick()).ok());
    WorkloadSpec s = Quick();
    s.op_count = 400;
    s.update_ratio = 0.5;
    auto r = b.run(s);
    ASSERT_TRUE(r.ok()) << r.status().message();
    EXPECT_EQ(r->verify_checked, 1000u);
    EXPECT_EQ(r->verify_mismatches, 0u) << EngineModeName(mode);
    EXPECT_EQ(r->admission_violations, 0u);
    // a second run continues from the first
    auto r2 = b.run(s);
    ASSERT_TRUE(r2.ok());
    EXPECT_EQ(r2->verify_mismatches, 0u);
  }
}

TEST(Report, CsvHeaderAndRows) {
  LatencyReport r;
  r.seconds = 2;
  r.samples_ms[0] = {1, 2, 3, 4};
  const std::string csv = ReportCsv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "op,p50_ms,p75_ms,p99_ms,p999_ms,p9999_ms,count,throughput_ops");
  EXPECT_NE(csv.find("q1_insert,2.0000,3.0000,4.0000,4.0000,4.0000,4,2.0000"), std::string::npos);
  EXPECT_NE(csv.find("\nall,"), std::string::npos);
  EXPECT_NE(ReportTable(r).find("P99.99"), std::string::npos);
}

TEST(Persistence, SaveOpenRun) {
  auto dir = std::filesystem::temp_directory_path() / "synchro_bench_save";
  std::filesystem::remove_all(dir);
  {
    Bench b(SmallEngine());
    ASSERT_TRUE(b.load(Quick()).ok());
    ASSERT_TRUE(b.save(dir, Quick()).ok());
  }
  auto b = Bench::open(dir, SmallEngine());
  ASSERT_TRUE(b.ok()) << b.status().message();
  EXPECT_EQ((*b)->loaded_rows(), RowsForMb(2));
  auto r = (*b)->run(Quick());
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->verify_mismatches, 0u);
  EXPECT_FALSE((*b)->load(Quick()).ok());
  std::filesystem::remove_all(dir);
}

TEST(Ablation, TwelveRows) {
  AblationOptions o;
  o.data_mb = 0.5;
  o.engine = SmallEngine();
  o.scan_repeats = 1;
  auto rows = RunAblation(o);
  ASSERT_TRUE(rows.ok()) << rows.status().message();
  ASSERT_EQ(rows->size(), 12u);
  const std::string csv = AblationCsv(*rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
  for (const auto& r : *rows) {
    EXPECT_EQ(r.updates, static_cast<std::uint64_t>(std::llround(r.ratio * RowsForMb(0.5))));
    EXPECT_GE(r.scan_ms_after, 0);
  }
}

TEST(Granularity, TasksStayUnderBound) {
  GranularityConfig cfg;
  cfg.G = 1ull << 20;
  cfg.T = 256ull << 10;
  cfg.segment_cap = 64ull << 10;
  cfg.rowtable_cap = 256ull << 10;
  auto g = RunGranularityExperiment(8, cfg, 1, 64);
  ASSERT_TRUE(g.ok()) << g.status().message();
  EXPECT_GT(g->tasks, 10u);
  EXPECT_EQ(g->over_bound, 0u);
  EXPECT_LE(g->max_task_bytes, g->bound);
  EXPECT_GT(g->traditional_over_5x, 0u);
}

}  // namespace
}  // namespace synchro::bench

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synchro/engine.hpp"

namespace synchro::bench {

// q1 insert, q2 single-row update, q3 sum, q4 max, q5 join.
enum class Op : std::uint8_t { kInsert = 0, kUpdate, kSum, kMax, kJoin };
inline constexpr std::size_t kOpKinds = 5;
const char* OpName(Op op);

struct Mix {
  std::array<double, kOpKinds> w{};
};
// "q1:3,q2:3,q3:2,q4:1,q5:1"; missing entries are 0.
StatusOr<Mix> ParseMix(std::string_view text);
std::string FormatMix(const Mix& mix);

struct WorkloadSpec {
  double data_mb = 100;
  Mix mix{{3, 3, 2, 1, 1}};
  double update_ratio = 1.0;
  std::size_t projection_k = 4;  // int columns read by q3/q4
  std::uint64_t range_rows = 1000;
  int client_threads = 4;
  double duration_s = 60;
  std::uint64_t op_count = 0;  // per thread; nonzero overrides duration_s
  std::uint64_t seed = 1;

  Status validate() const;
};

// Benchmark rows: 31 columns, 264-byte strings, 4096 payload bytes.
inline constexpr std::size_t kStringBytes = 264;
std::uint64_t BenchRowBytes();
std::uint64_t RowsForMb(double mb);
// Deterministic content. col_1 lies in [0, domain), col_2 in [0, 1000), other ints below 10^6.
Row BenchRow(Key key, std::uint64_t domain);

// Nearest-rank percentile, p in (0, 100]. Sorts a copy.
StatusOr<double> Percentile(std::vector<double> samples, double p);

struct OpLatency {
  std::string op;
  double p50 = 0, p75 = 0, p99 = 0, p999 = 0, p9999 = 0;
  std::uint64_t count = 0;
  double throughput = 0;
};

struct LatencyReport {
  std::array<std::vector<double>, kOpKinds> samples_ms;
  double seconds = 0;
  std::uint64_t op_log_hash = 0;
  std::uint64_t tasks = 0;
  std::uint64_t task_bytes = 0;
  std::uint64_t max_task_bytes = 0;
  std::uint64_t max_traditional_c = 0;
  std::uint64_t admissions = 0;
  std::uint64_t admission_violations = 0;
  std::uint64_t verify_checked = 0;
  std::uint64_t verify_mismatches = 0;

  // Per op kind with samples, then "all".
  std::vector<OpLatency> summarize() const;
  std::vector<double> all_samples() const;
};

std::string ReportCsv(const LatencyReport& r);
std::string ReportTable(const LatencyReport& r);
std::string ReportJson(const LatencyReport& r, const WorkloadSpec& spec, EngineMode mode);

// The op stream of one client thread. Pure function of (spec, loaded rows, thread).
class OpGenerator {
 public:
  // Inserted keys start at insert_base (0 means loaded_rows).
  OpGenerator(const WorkloadSpec& spec, std::uint64_t loaded_rows, int thread, std::uint64_t insert_base = 0);

  struct Next {
    Op op = Op::kInsert;
    Key key = 0;  // insert/update key or range start; -1 when the thread has nothing to update
    std::int64_t value = 0;
  };
  Next next();
  std::uint64_t hash() const { return hash_; }

 private:
  const WorkloadSpec spec_;
  std::uint64_t rows_;
  std::uint64_t insert_base_;
  int thread_;
  std::mt19937_64 rng_;
  std::discrete_distribution<int> pick_;
  std::uint64_t inserts_ = 0;
  std::uint64_t hash_ = 1469598103934665603ull;
};

// Hash of the first n ops of every thread.
std::uint64_t OpLogHash(const WorkloadSpec& spec, std::uint64_t loaded_rows, std::uint64_t n);

class Bench {
 public:
  explicit Bench(EngineOptions options);
  // Takes over a reopened engine; loaded_rows comes from the saved metadata.
  Bench(std::unique_ptr<Engine> engine, std::uint64_t loaded_rows);

  Status load(const WorkloadSpec& spec);
  StatusOr<LatencyReport> run(const WorkloadSpec& spec);
  // Random point gets against the driver's expectations. Returns (checked, mismatches).
  std::pair<std::uint64_t, std::uint64_t> verify(std::uint64_t n, std::uint64_t seed);

  Status save(const std::filesystem::path& dir, const WorkloadSpec& spec);
  static StatusOr<std::unique_ptr<Bench>> open(const std::filesystem::path& dir, EngineOptions options);

  Engine& engine() { return *engine_; }
  TableId t1() const { return t1_; }
  TableId t2() const { return t2_; }
  std::uint64_t loaded_rows() const { return rows_; }

 private:
  Status EnsureTables();
  std::optional<Row> Expected(Key k) const;

  std::unique_ptr<Engine> engine_;
  TableId t1_ = 0, t2_ = 0;
  bool loaded_ = false;
  std::uint64_t rows_ = 0;
  // Driver-side expectations, merged from the client threads after each run.
  std::map<Key, std::int64_t> updated_col3_;
  std::set<Key> inserted_;
};

// Update-path ablation: fresh engine per (ratio, mode) cell.
struct AblationRow {
  double ratio = 0;
  EngineMode mode = EngineMode::kSynchro;
  double update_seconds = 0;
  double scan_ms_before = 0;
  double scan_ms_after = 0;
  std::uint64_t updates = 0;
};

struct AblationOptions {
  double data_mb = 100;
  std::vector<double> ratios{0.01, 0.20, 1.00};
  std::vector<EngineMode> modes{EngineMode::kSynchro, EngineMode::kNoScheduler, EngineMode::kIncrementalRow,
                                EngineMode::kIncrementalCol};
  std::size_t projection_k = 4;
  int scan_repeats = 3;
  std::uint64_t seed = 1;
  EngineOptions engine;
};

// Median latency of a full-table projected scan.
double MeasureScanMs(Engine& e, TableId t, std::size_t projection_k, int repeats);
StatusOr<AblationRow> RunAblationCell(const AblationOptions& opt, double ratio, EngineMode mode);
StatusOr<std::vector<AblationRow>> RunAblation(const AblationOptions& opt);
std::string AblationCsv(const std::vector<AblationRow>& rows);

// Uniform single-row updates over every loaded key, background work run inline after each
// round. Checks every logged task against G + segment_cap.
struct GranularityResult {
  std::uint64_t rows = 0;
  std::uint64_t tasks = 0;
  std::uint64_t max_task_bytes = 0;
  std::uint64_t max_traditional_c = 0;
  std::uint64_t bound = 0;
  std::uint64_t over_bound = 0;  // tasks above the bound
  std::uint64_t traditional_over_5x = 0;  // tasks whose traditional counterpart exceeds 5x the bound
};
StatusOr<GranularityResult> RunGranularityExperiment(double data_mb, const GranularityConfig& cfg, std::uint64_t seed,
                                                     std::uint64_t round_updates);

}  // namespace synchro::bench

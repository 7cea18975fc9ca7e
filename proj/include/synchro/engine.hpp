#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "synchro/compaction.hpp"
#include "synchro/layout.hpp"
#include "synchro/scheduler.hpp"

namespace synchro {

enum class EngineMode {
  kSynchro,          // everything on
  kNoScheduler,      // background tasks launched greedily
  kIncrementalRow,   // no row-to-column conversion
  kIncrementalCol,   // small writes rebuild an open delta segment
};
const char* EngineModeName(EngineMode mode);
StatusOr<EngineMode> ParseEngineMode(std::string_view name);

enum class BackgroundMode {
  kThreads,  // monitor thread + executor
  kManual,   // nothing runs unless the caller asks
};

struct EngineOptions {
  EngineMode mode = EngineMode::kSynchro;
  BackgroundMode background = BackgroundMode::kThreads;
  GranularityConfig granularity;
  std::uint64_t batch_threshold = 4ull << 20;
  // Delta bytes that make delta compaction a candidate. 0 means G.
  std::uint64_t delta_trigger = 0;
  int cores = 0;  // 0 = hardware concurrency
  double tick_seconds = 0.1;
  double horizon_seconds = 5.0;
  // Scheduler unit; 0 calibrates at construction.
  double unit_seconds_per_cost = 1e-8;
  std::size_t expected_row_bytes = 4096;
  Clock* clock = nullptr;  // default steady clock
  std::ostream* stats = nullptr;
};

using TableId = std::size_t;

struct Assignment {
  std::size_t column = 0;
  Cell value;
};

enum class UpsertOutcome { kInserted, kUpdated };

// Projected rows in key order. rows[i][j] is projection[j] of keys[i].
struct ScanResult {
  std::vector<Key> keys;
  std::vector<std::vector<Cell>> rows;

  bool operator==(const ScanResult&) const = default;
};

struct JoinPair {
  std::int64_t t1_col0 = 0;
  std::int64_t t1_col1 = 0;

  bool operator==(const JoinPair&) const = default;
};

// Closed interval filter on t1.col_2, applied after the probe.
struct Col2Filter {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

// Consistent view over every table at one read version.
class ReadView {
 public:
  Version read_version() const { return read_v_; }
  const Snapshot& table(TableId t) const { return snaps_[t]; }
  bool valid() const { return !snaps_.empty(); }

 private:
  friend class Engine;
  Version read_v_;
  std::vector<Snapshot> snaps_;
};

struct EngineCounters {
  std::uint64_t segment_probes = 0;    // segments searched by key after Bloom
  std::uint64_t rowtable_probes = 0;
  std::uint64_t bytes_decoded = 0;     // segment column bytes read by scans
  std::uint64_t tasks_completed = 0;
  std::uint64_t tasks_stale = 0;
  std::uint64_t background_errors = 0;
};

struct LoggedTask {
  TableId table = 0;
  TaskRecord record;
};

class Engine : private BackgroundHost {
 public:
  explicit Engine(EngineOptions options = {});
  ~Engine() override;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  StatusOr<TableId> create_table(std::string name, Schema schema);
  std::optional<TableId> find_table(std::string_view name) const;
  std::size_t table_count() const { return table_count_.load(); }
  const Schema& schema(TableId t) const;
  const std::string& table_name(TableId t) const;

  // Writes. Each statement takes one fresh version.
  Status insert(TableId t, Row row);
  Status bulk_insert(TableId t, std::vector<Row> rows);
  StatusOr<UpsertOutcome> upsert(TableId t, Row row);
  StatusOr<std::uint64_t> update_where(TableId t, KeyRange range, const std::vector<Assignment>& assignments);
  StatusOr<std::uint64_t> delete_where(TableId t, KeyRange range);

  // Reads. Without a view, a fresh one is acquired for the call.
  ReadView snapshot();
  std::optional<Row> get(TableId t, Key key);
  std::optional<Row> get(const ReadView& view, TableId t, Key key);
  StatusOr<ScanResult> scan_project(TableId t, KeyRange range, const std::vector<std::size_t>& projection);
  StatusOr<ScanResult> scan_project(const ReadView& view, TableId t, KeyRange range,
                                    const std::vector<std::size_t>& projection);
  // Rows in range only; cheaper than scan_project with an empty projection.
  StatusOr<std::uint64_t> count(const ReadView& view, TableId t, KeyRange range);
  // Per visible row: (key, sum of cols).
  StatusOr<std::vector<std::pair<Key, std::int64_t>>> agg_sum(TableId t, KeyRange range,
                                                              const std::vector<std::size_t>& cols);
  StatusOr<std::vector<std::pair<Key, std::int64_t>>> agg_sum(const ReadView& view, TableId t, KeyRange range,
                                                              const std::vector<std::size_t>& cols);
  // Per column maximum; nullopt over an empty range.
  StatusOr<std::vector<std::optional<std::int64_t>>> agg_max(TableId t, KeyRange range,
                                                             const std::vector<std::size_t>& cols);
  StatusOr<std::vector<std::optional<std::int64_t>>> agg_max(const ReadView& view, TableId t, KeyRange range,
                                                             const std::vector<std::size_t>& cols);
  // t1.col_1 = t2.col_0, probing t1 rows in t1_range.
  StatusOr<std::vector<JoinPair>> join(TableId t1, KeyRange t1_range, TableId t2,
                                       std::optional<Col2Filter> filter = std::nullopt);
  StatusOr<std::vector<JoinPair>> join(const ReadView& view, TableId t1, KeyRange t1_range, TableId t2,
                                       std::optional<Col2Filter> filter = std::nullopt);

  // Background control.
  // Runs eligible tasks inline (thresholds respected) until none is left.
  Status run_background_until_idle();
  // Moves everything down as far as the mode allows: rowtables converted, delta compacted,
  // every bucket compacted regardless of T.
  Status drain();
  // One task of the given kind inline. Returns false when nothing was eligible or the
  // result went stale.
  StatusOr<bool> run_task(TableId t, TaskKind kind, bool force = false);

  // Stepwise form, for interleaving writes between planning and publishing.
  struct PendingTask {
    TableId table = 0;
    std::optional<PlannedTask> task;
    std::optional<TaskOutput> output;
    double seconds = 0;
  };
  std::optional<PendingTask> plan_task(TableId t, TaskKind kind, bool force = false);
  Status execute(PendingTask& p);
  // Publishes and releases. Returns false when the task went stale.
  StatusOr<bool> finish(PendingTask& p);
  void abandon(PendingTask& p);

  // Waits until the executor has no queued or running task.
  void wait_background_idle();
  void pause_background();
  void resume_background();

  // Persistence. save requires empty rowtables.
  Status save(const std::filesystem::path& dir);
  static StatusOr<std::unique_ptr<Engine>> open(const std::filesystem::path& dir, EngineOptions options = {});

  // Introspection.
  LayoutPtr layout(TableId t) const;
  LayoutManager& layout_manager(TableId t);
  VersionClock& clock() { return clock_; }
  const EngineOptions& options() const { return options_; }
  EngineCounters counters() const;
  std::vector<LoggedTask> task_log() const;
  ProfileTable& profiles() { return profiles_; }
  PlanRegistry& plans() { return plans_; }
  Scheduler* scheduler() { return scheduler_.get(); }
  int background_running() const { return running(); }
  std::uint64_t row_bytes(TableId t, const Row& row) const;

 private:
  struct Table;
  struct Located;
  class QueryScope;
  friend class QueryScope;

  Table& T(TableId t) const;
  RowTablePtr NewRowTable();
  Located Locate(Table& table, const Layout& layout, Key key);
  Status CheckedTable(TableId t) const;

  // Writers hold write_mu_.
  void PutLocked(Table& table, RowPtr row, Version v);
  void TombstoneLocked(Table& table, Key key, Version v);
  void RotateLocked(Table& table);
  Status WriteSmallLocked(Table& table, std::vector<RowPtr> rows, Version v);
  Status WriteDeltaLocked(Table& table, const std::vector<Row>& rows, Version v);
  Status RebuildOpenSegmentLocked(Table& table, std::vector<RowPtr> rows, Version v);
  Status MarkLocked(const std::vector<std::pair<SegmentPtr, std::uint32_t>>& occs, Version v);
  void Commit(Version v);

  template <typename F>
  Status VisitRange(const Layout& layout, Version read_v, KeyRange range, const std::vector<std::size_t>& projection,
                    F&& f) const;
  std::optional<Row> GetAt(const Layout& layout, Version read_v, Key key) const;
  double EstimateRangeRows(const Layout& layout, KeyRange range) const;

  // BackgroundHost.
  std::vector<Candidate> candidates() override;
  void launch(const Candidate& c) override;
  int running() const override { return inflight_.load(); }

  std::optional<PlannedTask> Plan(Table& table, TaskKind kind, bool force, std::optional<std::uint64_t> bucket);
  StatusOr<bool> RunInline(TableId t, TaskKind kind, bool force, std::optional<std::uint64_t> bucket);
  void Worker();
  void StartBackground();
  void StopBackground();
  bool ConversionEnabled() const { return options_.mode != EngineMode::kIncrementalRow; }

  EngineOptions options_;
  VersionClock clock_;
  IdSource rowtable_ids_;
  IdSource segment_ids_;
  static constexpr std::size_t kMaxTables = 64;
  std::vector<std::unique_ptr<Table>> tables_;  // reserved up front; never reallocates
  std::atomic<std::size_t> table_count_{0};
  std::mutex write_mu_;  // engine write lane; also covers publishes of background tasks

  SteadyClock steady_;
  Clock* time_;
  ProfileTable profiles_;
  PlanRegistry plans_;
  std::unique_ptr<Scheduler> scheduler_;

  // Executor.
  std::mutex q_mu_;
  std::condition_variable q_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::thread> workers_;
  bool stopping_ = false;
  std::atomic<int> inflight_{0};
  int pause_depth_ = 0;
  std::mutex pause_mu_;

  mutable std::mutex log_mu_;
  std::vector<LoggedTask> task_log_;

  mutable std::atomic<std::uint64_t> segment_probes_{0};
  mutable std::atomic<std::uint64_t> rowtable_probes_{0};
  mutable std::atomic<std::uint64_t> bytes_decoded_{0};
  std::atomic<std::uint64_t> tasks_completed_{0};
  std::atomic<std::uint64_t> tasks_stale_{0};
  std::atomic<std::uint64_t> background_errors_{0};
};

}  // namespace synchro

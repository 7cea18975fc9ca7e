#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "synchro/layout.hpp"

namespace synchro {

struct GranularityConfig {
  std::uint64_t G = 256ull << 20;
  std::uint64_t T = 64ull << 20;
  std::uint64_t segment_cap = kDefaultSegmentCap;
  std::uint64_t rowtable_cap = 64ull << 20;

  Status validate() const;
};

std::uint64_t compute_ct(std::span<const std::uint64_t> sizes);
std::uint64_t compute_ct(const std::vector<SegmentPtr>& segments);
std::uint64_t compute_ci(const ColumnBucket& bucket);
std::uint64_t compute_traditional_c(const Layout& layout);
// Negative means the bucket must split.
std::int64_t split_metric(const ColumnBucket& bucket, const GranularityConfig& cfg);

// Table ids currently owned by a background task.
class CompactionMarkSet {
 public:
  static std::uint64_t RowTableKey(std::uint64_t id) { return (std::uint64_t{1} << 62) | id; }
  static std::uint64_t SegmentKey(std::uint64_t id) { return (std::uint64_t{2} << 62) | id; }
  static std::uint64_t BucketKey(std::uint64_t id) { return (std::uint64_t{3} << 62) | id; }

  // All or nothing.
  Status mark(std::span<const std::uint64_t> keys);
  void unmark(std::span<const std::uint64_t> keys);
  bool is_marked(std::uint64_t key) const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::set<std::uint64_t> marked_;
};

// Oldest-first greedy prefix of unmarked delta segments with total <= G. A first segment
// larger than G is taken alone.
std::vector<SegmentPtr> select_omega(const Layout& layout, const GranularityConfig& cfg,
                                     const CompactionMarkSet* marks = nullptr);

// Oldest-first prefix of the bucket's segments such that prefix + beta <= G, at least one.
std::vector<SegmentPtr> select_bucket_inputs(const ColumnBucket& bucket, const GranularityConfig& cfg);

// First segment occurrence of key that is live at read_v: delta newest first, then the
// routed bucket newest first, then baseline. Bloom pruned.
struct Occurrence {
  SegmentPtr segment;
  std::uint32_t offset = 0;
};
std::optional<Occurrence> FindLiveInSegments(const Layout& layout, Key key, Version read_v);

enum class TaskKind { kRowToColumn, kDeltaToTransition, kBucketToBaseline };
const char* TaskKindName(TaskKind kind);

// A background task after planning: inputs fixed, marks held, snapshot pinned at the
// planning read version.
struct PlannedTask {
  TaskKind kind = TaskKind::kRowToColumn;
  Snapshot snap;
  std::vector<std::uint64_t> mark_keys;
  RowTablePtr frozen;
  std::vector<SegmentPtr> inputs;  // Omega, or the bucket prefix
  BucketPtr bucket;
  std::uint64_t input_bytes = 0;  // rowtable bytes, C_t, or prefix + beta
  std::uint64_t input_rows = 0;
  std::uint64_t traditional_c = 0;

  Version horizon() const { return snap.read_version(); }
  // Analytical cost in scheduler units.
  double cost_units(const Schema& schema) const;
};

struct TaskOutput {
  std::vector<SegmentPtr> segments;
  // DeltaToTransition only: id of the snapshot bucket each output was cut for.
  std::vector<std::uint64_t> target_bucket;
  // Per input segment, per row: output position (segment index, offset) or -1.
  std::vector<std::vector<std::int64_t>> placement;
  std::uint64_t output_rows = 0;
  std::uint64_t dropped_rows = 0;
};

struct TaskRecord {
  TaskKind kind = TaskKind::kRowToColumn;
  std::uint64_t input_bytes = 0;
  std::uint64_t output_bytes = 0;
  std::uint64_t traditional_c = 0;
  std::uint64_t input_rows = 0;
  std::uint64_t output_rows = 0;
  double seconds = 0;
  int splits = 0;
  std::vector<std::string> warnings;
};

// Planning. Returns nullopt when there is nothing eligible or the marks are contended.
std::optional<PlannedTask> plan_conversion(LayoutManager& mgr, CompactionMarkSet& marks);
std::optional<PlannedTask> plan_delta_compaction(LayoutManager& mgr, CompactionMarkSet& marks,
                                                 const GranularityConfig& cfg);
// bucket_id = nullopt picks the largest bucket with data above T.
std::optional<PlannedTask> plan_bucket_compaction(LayoutManager& mgr, CompactionMarkSet& marks,
                                                  const GranularityConfig& cfg,
                                                  std::optional<std::uint64_t> bucket_id = std::nullopt,
                                                  bool require_threshold = true);

// Heavy part; needs no locks.
StatusOr<TaskOutput> execute_task(const PlannedTask& task, const GranularityConfig& cfg, IdSource& segment_ids);

// Reconciles writes made after planning and installs the result. The caller must exclude
// foreground writers for the duration.
StatusOr<LayoutPtr> publish_task(const PlannedTask& task, TaskOutput& out, LayoutManager& mgr,
                                 const GranularityConfig& cfg, IdSource& segment_ids, TaskRecord* record);

void release_task(PlannedTask& task, CompactionMarkSet& marks);

// Direct forms operating on a given snapshot layout; they return the edit without
// reconciliation. Used by tests and as building blocks.
StatusOr<LayoutEdit> convert_row_to_column(const RowTable& frozen, const Layout& layout,
                                           const GranularityConfig& cfg, IdSource& ids, Version horizon);
StatusOr<LayoutEdit> compact_delta_to_transition(const std::vector<SegmentPtr>& omega, const Layout& layout,
                                                 const GranularityConfig& cfg, IdSource& ids, Version horizon);
StatusOr<LayoutEdit> compact_bucket_to_baseline(const ColumnBucket& bucket, const Layout& layout,
                                                const GranularityConfig& cfg, IdSource& ids, Version horizon);

// Applies edit, then splits any of the given buckets (recursively) whose split metric is
// negative.
StatusOr<Layout> ApplyWithSplits(const Layout& base, const LayoutEdit& edit, std::vector<std::uint64_t> check_buckets,
                                 const GranularityConfig& cfg, IdSource& bucket_ids, IdSource& segment_ids,
                                 Version horizon, int* splits, std::vector<std::string>* warnings);

}  // namespace synchro

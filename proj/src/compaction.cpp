#include "synchro/compaction.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>

namespace synchro {

Status GranularityConfig::validate() const {
  if (T == 0 || G <= T) return Status::InvalidArgument("granularity requires G > T > 0");
  if (segment_cap == 0) return Status::InvalidArgument("segment_cap must be positive");
  if (rowtable_cap == 0) return Status::InvalidArgument("rowtable_cap must be positive");
  return Status::Ok();
}

std::uint64_t compute_ct(std::span<const std::uint64_t> sizes) {
  std::uint64_t n = 0;
  for (auto s : sizes) n += s;
  return n;
}

std::uint64_t compute_ct(const std::vector<SegmentPtr>& segments) {
  std::uint64_t n = 0;
  for (const auto& s : segments) n += s->size_bytes();
  return n;
}

std::uint64_t compute_ci(const ColumnBucket& bucket) { return bucket.data_bytes() + bucket.baseline_bytes(); }

std::uint64_t compute_traditional_c(const Layout& layout) {
  std::uint64_t c = compute_ct(layout.delta);
  for (const auto& b : layout.buckets) c += compute_ci(*b);
  return c;
}

std::int64_t split_metric(const ColumnBucket& bucket, const GranularityConfig& cfg) {
  return static_cast<std::int64_t>(cfg.G) - static_cast<std::int64_t>(cfg.T) -
         static_cast<std::int64_t>(bucket.baseline_bytes());
}

// ---- Marks ----

Status CompactionMarkSet::mark(std::span<const std::uint64_t> keys) {
  std::lock_guard lock(mu_);
  for (auto k : keys) {
    if (marked_.count(k)) return Status::Contended("table already owned by another task");
  }
  marked_.insert(keys.begin(), keys.end());
  return Status::Ok();
}

void CompactionMarkSet::unmark(std::span<const std::uint64_t> keys) {
  std::lock_guard lock(mu_);
  for (auto k : keys) marked_.erase(k);
}

bool CompactionMarkSet::is_marked(std::uint64_t key) const {
  std::lock_guard lock(mu_);
  return marked_.count(key) > 0;
}

std::size_t CompactionMarkSet::size() const {
  std::lock_guard lock(mu_);
  return marked_.size();
}

std::vector<SegmentPtr> select_omega(const Layout& layout, const GranularityConfig& cfg,
                                     const CompactionMarkSet* marks) {
  std::vector<SegmentPtr> out;
  std::uint64_t total = 0;
  for (const auto& s : layout.delta) {
    if (marks && marks->is_marked(CompactionMarkSet::SegmentKey(s->id()))) continue;
    if (out.empty()) {
      out.push_back(s);
      total = s->size_bytes();
      if (total > cfg.G) break;
      continue;
    }
    if (total + s->size_bytes() > cfg.G) break;
    out.push_back(s);
    total += s->size_bytes();
  }
  return out;
}

std::vector<SegmentPtr> select_bucket_inputs(const ColumnBucket& bucket, const GranularityConfig& cfg) {
  std::vector<SegmentPtr> out;
  std::uint64_t total = bucket.baseline_bytes();
  for (const auto& s : bucket.segments) {
    if (!out.empty() && total + s->size_bytes() > cfg.G) break;
    out.push_back(s);
    total += s->size_bytes();
  }
  return out;
}

namespace {

std::optional<Occurrence> LiveIn(const SegmentPtr& s, Key key, Version read_v) {
  if (!s->maybe_contains(key)) return std::nullopt;
  auto off = s->find(key);
  if (!off || s->is_deleted(*off, read_v)) return std::nullopt;
  return Occurrence{s, *off};
}

}  // namespace

std::optional<Occurrence> FindLiveInSegments(const Layout& layout, Key key, Version read_v) {
  for (auto it = layout.delta.rbegin(); it != layout.delta.rend(); ++it) {
    if (auto o = LiveIn(*it, key, read_v)) return o;
  }
  const ColumnBucket& b = layout.route_bucket(key);
  for (auto it = b.segments.rbegin(); it != b.segments.rend(); ++it) {
    if (auto o = LiveIn(*it, key, read_v)) return o;
  }
  if (auto s = layout.baseline_for(key)) return LiveIn(s, key, read_v);
  return std::nullopt;
}

const char* TaskKindName(TaskKind kind) {
  switch (kind) {
    case TaskKind::kRowToColumn: return "row_to_column";
    case TaskKind::kDeltaToTransition: return "delta_to_transition";
    case TaskKind::kBucketToBaseline: return "bucket_to_baseline";
  }
  return "unknown";
}

double PlannedTask::cost_units(const Schema& schema) const {
  return static_cast<double>(input_rows) * schema.row_cost_weight();
}

// ---- Execution ----

namespace {

std::uint64_t RowCount(const std::vector<SegmentPtr>& segs) {
  std::uint64_t n = 0;
  for (const auto& s : segs) n += s->row_count();
  return n;
}

// Tables newer than frozen in layout, oldest first.
std::vector<RowTablePtr> NewerTables(const Layout& layout, const RowTable& frozen, bool* found) {
  std::vector<RowTablePtr> out;
  *found = false;
  for (const auto& t : layout.frozen) {
    if (*found) out.push_back(t);
    if (t.get() == &frozen) *found = true;
  }
  out.push_back(layout.active);
  return out;
}

StatusOr<TaskOutput> ExecConversion(const RowTable& frozen, const std::vector<RowTablePtr>& newer,
                                    const std::vector<CellType>& types, const GranularityConfig& cfg, IdSource& ids,
                                    Version horizon) {
  TaskOutput out;
  SegmentBuilder builder(types);
  for (auto cur = frozen.scan(KeyRange::All(), horizon); cur.valid(); cur.next()) {
    const RowEntry& e = cur.entry();
    if (e.is_tombstone()) {
      ++out.dropped_rows;
      continue;
    }
    bool superseded = false;
    for (const auto& t : newer) {
      if (t->maybe_contains(e.key) && t->get(e.key, horizon).kind != RowLookup::Kind::kAbsent) {
        superseded = true;
        break;
      }
    }
    if (superseded) {
      ++out.dropped_rows;
      continue;
    }
    const std::uint64_t rb = builder.row_bytes(*e.payload);
    if (!builder.fits(rb, cfg.segment_cap)) out.segments.push_back(builder.finish(ids.next(), horizon));
    SYNCHRO_RETURN_IF_ERROR(builder.append(*e.payload));
    ++out.output_rows;
  }
  if (builder.rows() > 0) out.segments.push_back(builder.finish(ids.next(), horizon));
  return out;
}

// Merges rows live at horizon. Among duplicate keys the input with the newer create
// version wins. partition(key) changes force a segment cut.
StatusOr<TaskOutput> ExecMerge(const std::vector<SegmentPtr>& inputs, const GranularityConfig& cfg, IdSource& ids,
                               Version horizon, const std::function<std::uint64_t(Key)>& partition) {
  TaskOutput out;
  if (inputs.empty()) return out;
  struct Ref {
    Key key;
    Version cv;
    std::uint32_t input;
    std::uint32_t offset;
  };
  std::vector<Ref> refs;
  Version create;
  out.placement.resize(inputs.size());
  for (std::uint32_t i = 0; i < inputs.size(); ++i) {
    const auto& s = *inputs[i];
    create = std::max(create, s.create_version());
    out.placement[i].assign(s.row_count(), -1);
    const VisibilityView vis = s.visible_rows(horizon);
    for (std::uint32_t r = 0; r < s.row_count(); ++r) {
      if (vis.visible(r)) refs.push_back(Ref{s.keys()[r], s.create_version(), i, r});
      else ++out.dropped_rows;
    }
  }
  std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.cv != b.cv) return a.cv > b.cv;
    return a.input > b.input;
  });

  SegmentBuilder builder(inputs.front()->types());
  std::optional<std::uint64_t> part;
  auto flush = [&] {
    if (builder.rows() == 0) return;
    out.segments.push_back(builder.finish(ids.next(), create));
    out.target_bucket.push_back(*part);
  };
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Ref& r = refs[i];
    if (i > 0 && refs[i - 1].key == r.key) {
      ++out.dropped_rows;
      continue;
    }
    const ColumnSegment& src = *inputs[r.input];
    const std::uint64_t p = partition(r.key);
    if (!part || *part != p || !builder.fits(src.row_bytes(r.offset), cfg.segment_cap)) {
      flush();
      part = p;
    }
    out.placement[r.input][r.offset] =
        (static_cast<std::int64_t>(out.segments.size()) << 32) | static_cast<std::int64_t>(builder.rows());
    SYNCHRO_RETURN_IF_ERROR(builder.append_from(src, r.offset));
    ++out.output_rows;
  }
  flush();
  return out;
}

struct PendingMark {
  Version v;
  std::size_t seg;
  std::uint32_t off;
};

// Applies marks in version order, batching per (version, segment).
Status ApplyMarks(std::vector<PendingMark> marks, const std::vector<SegmentPtr>& segs) {
  std::stable_sort(marks.begin(), marks.end(), [](const PendingMark& a, const PendingMark& b) {
    if (a.v != b.v) return a.v < b.v;
    return a.seg < b.seg;
  });
  std::size_t i = 0;
  std::vector<std::uint32_t> offs;
  while (i < marks.size()) {
    std::size_t j = i;
    offs.clear();
    while (j < marks.size() && marks[j].v == marks[i].v && marks[j].seg == marks[i].seg) offs.push_back(marks[j++].off);
    SYNCHRO_RETURN_IF_ERROR(segs[marks[i].seg]->mark_delete(offs, marks[i].v));
    i = j;
  }
  return Status::Ok();
}

// Re-applies deletions made on inputs after the horizon to their output rows.
Status ReconcileMerge(const std::vector<SegmentPtr>& inputs, const TaskOutput& out, Version horizon) {
  std::vector<PendingMark> marks;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (const auto& ev : inputs[i]->delete_chain().events_after(horizon)) {
      const std::int64_t p = out.placement[i][ev.offset];
      if (p < 0) continue;
      marks.push_back(PendingMark{ev.version, static_cast<std::size_t>(p >> 32),
                                  static_cast<std::uint32_t>(p & 0xFFFFFFFF)});
    }
  }
  return ApplyMarks(std::move(marks), out.segments);
}

// Output position of key among disjoint ascending segments.
std::optional<std::pair<std::size_t, std::uint32_t>> Locate(const std::vector<SegmentPtr>& segs, Key key) {
  auto it = std::upper_bound(segs.begin(), segs.end(), key, [](Key k, const SegmentPtr& s) { return k < s->min_key(); });
  if (it == segs.begin()) return std::nullopt;
  --it;
  auto off = (*it)->find(key);
  if (!off) return std::nullopt;
  return std::make_pair(static_cast<std::size_t>(it - segs.begin()), *off);
}

// Marks conversion outputs superseded by writes to newer tables after the horizon.
Status ReconcileConversion(const std::vector<RowTablePtr>& newer, const std::vector<SegmentPtr>& outputs,
                           Version horizon) {
  if (outputs.empty()) return Status::Ok();
  std::vector<PendingMark> marks;
  std::vector<Bits> scheduled;
  for (const auto& s : outputs) scheduled.emplace_back(s->row_count());
  for (const auto& t : newer) {
    const auto& log = t->write_log();
    auto it = std::upper_bound(log.begin(), log.end(), horizon,
                               [](Version v, const std::pair<Key, Version>& e) { return v < e.second; });
    for (; it != log.end(); ++it) {
      auto pos = Locate(outputs, it->first);
      if (!pos || scheduled[pos->first].test(pos->second)) continue;
      scheduled[pos->first].set(pos->second);
      marks.push_back(PendingMark{it->second, pos->first, pos->second});
    }
  }
  return ApplyMarks(std::move(marks), outputs);
}

// A tombstone that ends up newest for its key in the frozen table also invalidates the
// key's live lower-layer occurrence, if one older than the tombstone remains.
Status PropagateTombstones(const RowTable& frozen, const Layout& layout, Version horizon) {
  for (auto cur = frozen.scan(KeyRange::All(), horizon); cur.valid(); cur.next()) {
    const RowEntry& e = cur.entry();
    if (!e.is_tombstone()) continue;
    auto occ = FindLiveInSegments(layout, e.key, Version::Max());
    if (!occ) continue;
    const auto& seg = *occ->segment;
    if (seg.create_version() >= e.version || seg.delete_chain().last_version() >= e.version) continue;
    const std::uint32_t off = occ->offset;
    SYNCHRO_RETURN_IF_ERROR(occ->segment->mark_delete(std::span(&off, 1), e.version));
  }
  return Status::Ok();
}

std::vector<std::uint64_t> Ids(const std::vector<SegmentPtr>& segs) {
  std::vector<std::uint64_t> out;
  for (const auto& s : segs) out.push_back(s->id());
  return out;
}

StatusOr<TaskOutput> ExecDelta(const std::vector<SegmentPtr>& omega, const Layout& layout,
                               const GranularityConfig& cfg, IdSource& ids, Version horizon) {
  return ExecMerge(omega, cfg, ids, horizon,
                   [&](Key k) { return layout.buckets[layout.route_bucket_index(k)]->id; });
}

StatusOr<TaskOutput> ExecBucket(const std::vector<SegmentPtr>& prefix, const ColumnBucket& bucket,
                                const GranularityConfig& cfg, IdSource& ids, Version horizon) {
  std::vector<SegmentPtr> inputs = bucket.covered_baseline;
  inputs.insert(inputs.end(), prefix.begin(), prefix.end());
  return ExecMerge(inputs, cfg, ids, horizon, [](Key) { return std::uint64_t{0}; });
}

std::vector<SegmentPtr> BucketInputs(const PlannedTask& task) {
  std::vector<SegmentPtr> inputs = task.bucket->covered_baseline;
  inputs.insert(inputs.end(), task.inputs.begin(), task.inputs.end());
  return inputs;
}

}  // namespace

// ---- Planning ----

std::optional<PlannedTask> plan_conversion(LayoutManager& mgr, CompactionMarkSet& marks) {
  Snapshot snap = mgr.acquire();
  const Layout& l = snap.layout();
  if (l.frozen.empty()) return std::nullopt;
  const RowTablePtr& f = l.frozen.front();
  PlannedTask t;
  t.kind = TaskKind::kRowToColumn;
  t.mark_keys = {CompactionMarkSet::RowTableKey(f->id())};
  if (!marks.mark(t.mark_keys).ok()) return std::nullopt;
  t.frozen = f;
  t.input_bytes = f->size_bytes();
  t.input_rows = f->entry_count();
  t.traditional_c = compute_traditional_c(l);
  t.snap = std::move(snap);
  return t;
}

std::optional<PlannedTask> plan_delta_compaction(LayoutManager& mgr, CompactionMarkSet& marks,
                                                 const GranularityConfig& cfg) {
  Snapshot snap = mgr.acquire();
  const Layout& l = snap.layout();
  auto omega = select_omega(l, cfg, &marks);
  if (omega.empty()) return std::nullopt;
  PlannedTask t;
  t.kind = TaskKind::kDeltaToTransition;
  for (const auto& s : omega) t.mark_keys.push_back(CompactionMarkSet::SegmentKey(s->id()));
  if (!marks.mark(t.mark_keys).ok()) return std::nullopt;
  t.input_bytes = compute_ct(omega);
  t.input_rows = RowCount(omega);
  t.traditional_c = compute_traditional_c(l);
  t.inputs = std::move(omega);
  t.snap = std::move(snap);
  return t;
}

std::optional<PlannedTask> plan_bucket_compaction(LayoutManager& mgr, CompactionMarkSet& marks,
                                                  const GranularityConfig& cfg, std::optional<std::uint64_t> bucket_id,
                                                  bool require_threshold) {
  Snapshot snap = mgr.acquire();
  const Layout& l = snap.layout();
  BucketPtr pick;
  if (bucket_id) {
    pick = l.find_bucket(*bucket_id);
    if (pick && marks.is_marked(CompactionMarkSet::BucketKey(pick->id))) pick = nullptr;
  } else {
    for (const auto& b : l.buckets) {
      if (marks.is_marked(CompactionMarkSet::BucketKey(b->id))) continue;
      if (!pick || b->data_bytes() > pick->data_bytes()) pick = b;
    }
  }
  if (!pick || pick->segments.empty()) return std::nullopt;
  if (require_threshold && pick->data_bytes() <= cfg.T) return std::nullopt;
  PlannedTask t;
  t.kind = TaskKind::kBucketToBaseline;
  t.inputs = select_bucket_inputs(*pick, cfg);
  t.mark_keys.push_back(CompactionMarkSet::BucketKey(pick->id));
  for (const auto& s : t.inputs) t.mark_keys.push_back(CompactionMarkSet::SegmentKey(s->id()));
  for (const auto& s : pick->covered_baseline) t.mark_keys.push_back(CompactionMarkSet::SegmentKey(s->id()));
  if (!marks.mark(t.mark_keys).ok()) return std::nullopt;
  t.input_bytes = compute_ct(t.inputs) + pick->baseline_bytes();
  t.input_rows = RowCount(t.inputs) + RowCount(pick->covered_baseline);
  t.traditional_c = compute_traditional_c(l);
  t.bucket = std::move(pick);
  t.snap = std::move(snap);
  return t;
}

void release_task(PlannedTask& task, CompactionMarkSet& marks) {
  marks.unmark(task.mark_keys);
  task.mark_keys.clear();
  task.snap = Snapshot();
}

StatusOr<TaskOutput> execute_task(const PlannedTask& task, const GranularityConfig& cfg, IdSource& segment_ids) {
  const Layout& l = task.snap.layout();
  switch (task.kind) {
    case TaskKind::kRowToColumn: {
      bool found = false;
      auto newer = NewerTables(l, *task.frozen, &found);
      if (!found) return Status::Stale("frozen rowtable not in snapshot");
      std::vector<CellType> types;
      // The row schema is carried by the rows themselves.
      for (auto cur = task.frozen->scan(KeyRange::All(), task.horizon()); cur.valid(); cur.next()) {
        if (!cur.entry().is_tombstone()) {
          for (const auto& c : cur.entry().payload->cells) types.push_back(TypeOf(c));
          break;
        }
      }
      if (types.empty()) return TaskOutput{};
      return ExecConversion(*task.frozen, newer, types, cfg, segment_ids, task.horizon());
    }
    case TaskKind::kDeltaToTransition:
      return ExecDelta(task.inputs, l, cfg, segment_ids, task.horizon());
    case TaskKind::kBucketToBaseline:
      return ExecBucket(task.inputs, *task.bucket, cfg, segment_ids, task.horizon());
  }
  return Status::Internal("unknown task kind");
}

StatusOr<Layout> ApplyWithSplits(const Layout& base, const LayoutEdit& edit, std::vector<std::uint64_t> check_buckets,
                                 const GranularityConfig& cfg, IdSource& bucket_ids, IdSource& segment_ids,
                                 Version horizon, int* splits, std::vector<std::string>* warnings) {
  auto cur = ApplyEdit(base, edit, bucket_ids);
  if (!cur.ok()) return cur.status();
  Layout layout = std::move(*cur);
  while (!check_buckets.empty()) {
    const std::uint64_t id = check_buckets.back();
    check_buckets.pop_back();
    BucketPtr b = layout.find_bucket(id);
    if (!b || split_metric(*b, cfg) >= 0) continue;
    if (b->covered_baseline.size() < 2) {
      if (warnings) {
        warnings->push_back("bucket " + std::to_string(id) + " exceeds the split threshold with a single baseline segment");
      }
      continue;
    }
    const Key lo = b->range.lo;
    auto split_key = ChooseSplitKey(*b);
    auto se = split_bucket(layout, id, segment_ids, horizon);
    if (!se.ok()) return se.status();
    auto next = ApplyEdit(layout, *se, bucket_ids);
    if (!next.ok()) return next.status();
    layout = std::move(*next);
    if (splits) ++*splits;
    check_buckets.push_back(layout.buckets[layout.route_bucket_index(lo)]->id);
    check_buckets.push_back(layout.buckets[layout.route_bucket_index(*split_key)]->id);
  }
  return layout;
}

StatusOr<LayoutPtr> publish_task(const PlannedTask& task, TaskOutput& out, LayoutManager& mgr,
                                 const GranularityConfig& cfg, IdSource& segment_ids, TaskRecord* record) {
  const Version w = task.horizon();
  int splits = 0;
  std::vector<std::string> warnings;
  auto result = mgr.publish_with([&](const Layout& latest) -> StatusOr<Layout> {
    LayoutEdit edit;
    switch (task.kind) {
      case TaskKind::kRowToColumn: {
        bool found = false;
        auto newer = NewerTables(latest, *task.frozen, &found);
        if (!found) return Status::Stale("frozen rowtable already converted");
        SYNCHRO_RETURN_IF_ERROR(ReconcileConversion(newer, out.segments, w));
        SYNCHRO_RETURN_IF_ERROR(PropagateTombstones(*task.frozen, latest, w));
        edit.remove_frozen.push_back(task.frozen->id());
        edit.add_delta = out.segments;
        return ApplyEdit(latest, edit, mgr.bucket_ids());
      }
      case TaskKind::kDeltaToTransition: {
        for (const auto& s : out.segments) {
          const KeyRange& r = latest.route_bucket(s->min_key()).range;
          if (!r.contains(s->max_key())) return Status::Stale("bucket boundaries changed since planning");
        }
        SYNCHRO_RETURN_IF_ERROR(ReconcileMerge(task.inputs, out, w));
        edit.remove_delta = Ids(task.inputs);
        edit.add_bucket_segments = out.segments;
        return ApplyEdit(latest, edit, mgr.bucket_ids());
      }
      case TaskKind::kBucketToBaseline: {
        BucketPtr b = latest.find_bucket(task.bucket->id);
        if (!b) return Status::Stale("bucket no longer present");
        SYNCHRO_RETURN_IF_ERROR(ReconcileMerge(BucketInputs(task), out, w));
        edit.remove_bucket_segments = Ids(task.inputs);
        edit.remove_baseline = Ids(task.bucket->covered_baseline);
        edit.add_baseline = out.segments;
        return ApplyWithSplits(latest, edit, {task.bucket->id}, cfg, mgr.bucket_ids(), segment_ids,
                               mgr.clock().visible(), &splits, &warnings);
      }
    }
    return Status::Internal("unknown task kind");
  });
  if (record && result.ok()) {
    record->kind = task.kind;
    record->input_bytes = task.input_bytes;
    record->output_bytes = compute_ct(out.segments);
    record->traditional_c = task.traditional_c;
    record->input_rows = task.input_rows;
    record->output_rows = out.output_rows;
    record->splits = splits;
    record->warnings = std::move(warnings);
  }
  return result;
}

// ---- Direct forms ----

StatusOr<LayoutEdit> convert_row_to_column(const RowTable& frozen, const Layout& layout,
                                           const GranularityConfig& cfg, IdSource& ids, Version horizon) {
  bool found = false;
  auto newer = NewerTables(layout, frozen, &found);
  if (!found) return Status::Stale("frozen rowtable not in layout");
  std::vector<CellType> types;
  for (auto cur = frozen.scan(KeyRange::All(), horizon); cur.valid(); cur.next()) {
    if (!cur.entry().is_tombstone()) {
      for (const auto& c : cur.entry().payload->cells) types.push_back(TypeOf(c));
      break;
    }
  }
  LayoutEdit edit;
  edit.remove_frozen.push_back(frozen.id());
  if (!types.empty()) {
    auto out = ExecConversion(frozen, newer, types, cfg, ids, horizon);
    if (!out.ok()) return out.status();
    edit.add_delta = out->segments;
  }
  SYNCHRO_RETURN_IF_ERROR(PropagateTombstones(frozen, layout, horizon));
  return edit;
}

StatusOr<LayoutEdit> compact_delta_to_transition(const std::vector<SegmentPtr>& omega, const Layout& layout,
                                                 const GranularityConfig& cfg, IdSource& ids, Version horizon) {
  auto out = ExecDelta(omega, layout, cfg, ids, horizon);
  if (!out.ok()) return out.status();
  LayoutEdit edit;
  edit.remove_delta = Ids(omega);
  edit.add_bucket_segments = out->segments;
  return edit;
}

StatusOr<LayoutEdit> compact_bucket_to_baseline(const ColumnBucket& bucket, const Layout& layout,
                                                const GranularityConfig& cfg, IdSource& ids, Version horizon) {
  (void)layout;
  if (bucket.data_bytes() <= cfg.T) return Status::FailedPrecondition("bucket data does not exceed T");
  auto prefix = select_bucket_inputs(bucket, cfg);
  auto out = ExecBucket(prefix, bucket, cfg, ids, horizon);
  if (!out.ok()) return out.status();
  LayoutEdit edit;
  edit.remove_bucket_segments = Ids(prefix);
  edit.remove_baseline = Ids(bucket.covered_baseline);
  edit.add_baseline = out->segments;
  return edit;
}

}  // namespace synchro

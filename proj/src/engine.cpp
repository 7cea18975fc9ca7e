#include "synchro/engine.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <queue>
#include <unordered_set>

#include "engine_internal.hpp"

namespace synchro {

const char* EngineModeName(EngineMode mode) {
  switch (mode) {
    case EngineMode::kSynchro: return "synchro";
    case EngineMode::kNoScheduler: return "no_scheduler";
    case EngineMode::kIncrementalRow: return "incremental_row";
    case EngineMode::kIncrementalCol: return "incremental_col";
  }
  return "unknown";
}

StatusOr<EngineMode> ParseEngineMode(std::string_view name) {
  for (auto m : {EngineMode::kSynchro, EngineMode::kNoScheduler, EngineMode::kIncrementalRow,
                 EngineMode::kIncrementalCol}) {
    if (name == EngineModeName(m)) return m;
  }
  return Status::InvalidArgument("unknown mode '" + std::string(name) + "'");
}

namespace {

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// One sorted input of a merged range read: the resolved rowtable tier or one segment.
struct Source {
  const std::vector<RowPtr>* tier = nullptr;
  const SegmentPtr* seg = nullptr;
  std::optional<ProjectedRead> pr;
  std::size_t pos = 0;
  std::size_t end = 0;
  int prio = 0;  // lower wins on equal keys

  Key key() const { return tier ? (*tier)[pos]->key : (*seg)->keys()[pos]; }
  Key last() const { return tier ? (*tier)[end - 1]->key : (*seg)->keys()[end - 1]; }
  bool live() const { return tier || pr->visibility.visible(pos); }
  void settle() {
    while (pos < end && !live()) ++pos;
  }
  bool valid() const { return pos < end; }
};

std::uint64_t ProjectedBytes(const ProjectedRead& pr, std::uint32_t off) {
  std::uint64_t n = 0;
  for (const ColumnData* c : pr.columns) {
    if (const auto* s = std::get_if<Utf8Column>(c)) {
      n += 4 + (s->offsets[off + 1] - s->offsets[off]);
    } else {
      n += 8;
    }
  }
  return n;
}

}  // namespace

Cell Hit::cell(std::size_t j) const {
  if (row) return row->cells[(*projection)[j]];
  const ColumnData& c = *pr->columns[j];
  if (const auto* i = std::get_if<Int64Column>(&c)) return i->values[offset];
  return std::string(std::get<Utf8Column>(c).at(offset));
}

std::int64_t Hit::int_at(std::size_t j) const {
  if (row) return std::get<std::int64_t>(row->cells[(*projection)[j]]);
  return std::get<Int64Column>(*pr->columns[j]).values[offset];
}

Row Hit::materialize(const Schema& schema) const {
  Row r;
  r.key = key;
  r.cells.reserve(schema.column_count());
  for (std::size_t j = 0; j < projection->size(); ++j) r.cells.push_back(cell(j));
  return r;
}

// ---- Engine basics ----

Engine::Engine(EngineOptions options) : options_(std::move(options)) {
  if (options_.cores <= 0) options_.cores = std::max(1u, std::thread::hardware_concurrency());
  if (options_.delta_trigger == 0) options_.delta_trigger = options_.granularity.G;
  time_ = options_.clock ? options_.clock : &steady_;
  profiles_.set_unit_seconds_per_cost(options_.unit_seconds_per_cost > 0 ? options_.unit_seconds_per_cost
                                                                          : CalibrateUnitSecondsPerCost(0.2));
  tables_.reserve(kMaxTables);
  SchedulerOptions so;
  so.cores = options_.cores;
  so.tick_seconds = options_.tick_seconds;
  so.horizon_seconds = options_.horizon_seconds;
  so.greedy = options_.mode == EngineMode::kNoScheduler;
  scheduler_ = std::make_unique<Scheduler>(so, time_, &profiles_, &plans_, static_cast<BackgroundHost*>(this));
  scheduler_->set_stats_stream(options_.stats);
  if (options_.background == BackgroundMode::kThreads) StartBackground();
}

Engine::~Engine() { StopBackground(); }

Status Engine::CheckedTable(TableId t) const {
  if (t >= table_count()) return Status::InvalidArgument("no table " + std::to_string(t));
  return Status::Ok();
}

Engine::Table& Engine::T(TableId t) const { return *tables_[t]; }

RowTablePtr Engine::NewRowTable() {
  RowTableOptions o;
  o.capacity_bytes = options_.granularity.rowtable_cap;
  o.expected_row_bytes = options_.expected_row_bytes;
  return std::make_shared<RowTable>(rowtable_ids_.next(), o);
}

StatusOr<TableId> Engine::create_table(std::string name, Schema schema) {
  SYNCHRO_RETURN_IF_ERROR(options_.granularity.validate());
  if (schema.column_count() == 0 || schema.type(0) != CellType::kInt64) {
    return Status::InvalidArgument("column 0 must be the int64 key");
  }
  std::lock_guard lane(write_mu_);
  if (find_table(name)) return Status::InvalidArgument("table '" + name + "' exists");
  if (tables_.size() >= kMaxTables) return Status::InvalidArgument("too many tables");
  auto t = std::make_unique<Table>();
  t->name = std::move(name);
  t->types = TypesOf(schema);
  t->schema = std::move(schema);
  t->mgr = std::make_unique<LayoutManager>(&clock_, NewRowTable());
  tables_.push_back(std::move(t));
  table_count_.store(tables_.size());
  return tables_.size() - 1;
}

std::optional<TableId> Engine::find_table(std::string_view name) const {
  const std::size_t n = table_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (tables_[i]->name == name) return i;
  }
  return std::nullopt;
}

const Schema& Engine::schema(TableId t) const { return T(t).schema; }
const std::string& Engine::table_name(TableId t) const { return T(t).name; }
LayoutPtr Engine::layout(TableId t) const { return T(t).mgr->latest(); }
LayoutManager& Engine::layout_manager(TableId t) { return *T(t).mgr; }
std::uint64_t Engine::row_bytes(TableId, const Row& row) const { return row.payload_bytes(); }

EngineCounters Engine::counters() const {
  EngineCounters c;
  c.segment_probes = segment_probes_.load();
  c.rowtable_probes = rowtable_probes_.load();
  c.bytes_decoded = bytes_decoded_.load();
  c.tasks_completed = tasks_completed_.load();
  c.tasks_stale = tasks_stale_.load();
  c.background_errors = background_errors_.load();
  return c;
}

std::vector<LoggedTask> Engine::task_log() const {
  std::lock_guard lock(log_mu_);
  return task_log_;
}

// ---- Merged range reads ----

template <typename F>
Status Engine::VisitRange(const Layout& layout, Version read_v, KeyRange range,
                          const std::vector<std::size_t>& projection, F&& f) const {
  if (range.empty()) return Status::Ok();

  // Rowtable tier: per key the newest table decides; tombstones only hide tier rows.
  std::vector<RowPtr> tier;
  std::vector<const RowTable*> tabs;
  if (!layout.active->empty()) tabs.push_back(layout.active.get());
  for (auto it = layout.frozen.rbegin(); it != layout.frozen.rend(); ++it) {
    if (!(*it)->empty()) tabs.push_back(it->get());
  }
  if (tabs.size() == 1) {
    for (auto cur = tabs[0]->scan(range, read_v); cur.valid(); cur.next()) {
      if (!cur.entry().is_tombstone()) tier.push_back(cur.entry().payload);
    }
  } else if (tabs.size() > 1) {
    std::vector<RowTable::Cursor> curs;
    curs.reserve(tabs.size());
    for (const RowTable* t : tabs) curs.push_back(t->scan(range, read_v));
    for (;;) {
      const RowEntry* best = nullptr;
      for (auto& c : curs) {
        if (c.valid() && (!best || c.entry().key < best->key)) best = &c.entry();
      }
      if (!best) break;
      const Key k = best->key;
      RowPtr payload = best->payload;
      for (auto& c : curs) {
        if (c.valid() && c.entry().key == k) c.next();
      }
      if (payload) tier.push_back(std::move(payload));
    }
  }

  std::vector<Source> srcs;
  if (!tier.empty()) {
    Source s;
    s.tier = &tier;
    s.end = tier.size();
    s.prio = 0;
    srcs.push_back(std::move(s));
  }
  int prio = 1;
  auto add = [&](const SegmentPtr& seg) -> Status {
    if (!range.overlaps_closed(seg->min_key(), seg->max_key())) return Status::Ok();
    const std::size_t pos = seg->lower_bound(range.lo);
    const std::size_t end = range.hi ? seg->lower_bound(*range.hi) : seg->row_count();
    if (pos >= end) return Status::Ok();
    auto pr = seg->read(projection, read_v);
    if (!pr.ok()) return pr.status();
    Source s;
    s.seg = &seg;
    s.pr = std::move(*pr);
    s.pos = pos;
    s.end = end;
    s.prio = prio++;
    srcs.push_back(std::move(s));
    return Status::Ok();
  };
  for (auto it = layout.delta.rbegin(); it != layout.delta.rend(); ++it) SYNCHRO_RETURN_IF_ERROR(add(*it));
  for (std::size_t b = layout.route_bucket_index(range.lo); b < layout.buckets.size(); ++b) {
    const auto& bucket = *layout.buckets[b];
    if (range.hi && bucket.range.lo >= *range.hi) break;
    for (auto it = bucket.segments.rbegin(); it != bucket.segments.rend(); ++it) SYNCHRO_RETURN_IF_ERROR(add(*it));
  }
  auto bit = std::lower_bound(layout.baseline.begin(), layout.baseline.end(), range.lo,
                              [](const SegmentPtr& s, Key k) { return s->max_key() < k; });
  for (; bit != layout.baseline.end(); ++bit) {
    if (range.hi && (*bit)->min_key() >= *range.hi) break;
    SYNCHRO_RETURN_IF_ERROR(add(*bit));
  }

  for (auto& s : srcs) s.settle();
  srcs.erase(std::remove_if(srcs.begin(), srcs.end(), [](const Source& s) { return !s.valid(); }), srcs.end());
  std::sort(srcs.begin(), srcs.end(), [](const Source& a, const Source& b) { return a.key() < b.key(); });

  std::uint64_t decoded = 0;
  auto emit = [&](const Source& s) {
    Hit h;
    h.key = s.key();
    h.projection = &projection;
    if (s.tier) {
      h.row = (*s.tier)[s.pos].get();
    } else {
      h.segment = s.seg;
      h.pr = &*s.pr;
      h.offset = static_cast<std::uint32_t>(s.pos);
      decoded += ProjectedBytes(*s.pr, h.offset);
    }
    return f(h);
  };

  bool disjoint = true;
  for (std::size_t i = 1; i < srcs.size() && disjoint; ++i) disjoint = srcs[i - 1].last() < srcs[i].key();
  if (disjoint) {
    for (auto& s : srcs) {
      for (; s.valid(); ++s.pos, s.settle()) {
        if (!emit(s)) {
          bytes_decoded_.fetch_add(decoded);
          return Status::Ok();
        }
      }
    }
  } else {
    using Item = std::tuple<Key, int, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t i = 0; i < srcs.size(); ++i) heap.emplace(srcs[i].key(), srcs[i].prio, i);
    std::optional<Key> last;
    while (!heap.empty()) {
      auto [k, p, i] = heap.top();
      heap.pop();
      Source& s = srcs[i];
      if (!last || *last != k) {
        last = k;
        if (!emit(s)) break;
      }
      ++s.pos;
      s.settle();
      if (s.valid()) heap.emplace(s.key(), s.prio, i);
    }
  }
  bytes_decoded_.fetch_add(decoded);
  return Status::Ok();
}

double Engine::EstimateRangeRows(const Layout& layout, KeyRange range) const {
  double rows = static_cast<double>(layout.active->entry_count());
  for (const auto& f : layout.frozen) rows += static_cast<double>(f->entry_count());
  auto add = [&](const SegmentPtr& seg) {
    if (!range.overlaps_closed(seg->min_key(), seg->max_key())) return;
    const std::size_t pos = seg->lower_bound(range.lo);
    const std::size_t end = range.hi ? seg->lower_bound(*range.hi) : seg->row_count();
    if (end > pos) rows += static_cast<double>(end - pos);
  };
  for (const auto& s : layout.delta) add(s);
  for (const auto& b : layout.buckets) {
    for (const auto& s : b->segments) add(s);
  }
  for (const auto& s : layout.baseline) add(s);
  return rows;
}

// ---- Point reads ----

std::optional<Row> Engine::GetAt(const Layout& layout, Version read_v, Key key) const {
  auto probe_table = [&](const RowTable& t) -> std::optional<RowLookup> {
    if (!t.maybe_contains(key)) return std::nullopt;
    rowtable_probes_.fetch_add(1);
    return t.get(key, read_v);
  };
  std::optional<RowLookup> hit = probe_table(*layout.active);
  for (auto it = layout.frozen.rbegin(); it != layout.frozen.rend(); ++it) {
    if (hit && hit->kind != RowLookup::Kind::kAbsent) break;
    hit = probe_table(**it);
  }
  if (hit && hit->found()) return *hit->row;

  auto probe_seg = [&](const SegmentPtr& s) -> std::optional<Row> {
    if (!s->maybe_contains(key)) return std::nullopt;
    segment_probes_.fetch_add(1);
    auto off = s->find(key);
    if (!off || s->is_deleted(*off, read_v)) return std::nullopt;
    return s->row_at(*off);
  };
  for (auto it = layout.delta.rbegin(); it != layout.delta.rend(); ++it) {
    if (auto r = probe_seg(*it)) return r;
  }
  const ColumnBucket& b = layout.route_bucket(key);
  for (auto it = b.segments.rbegin(); it != b.segments.rend(); ++it) {
    if (auto r = probe_seg(*it)) return r;
  }
  if (auto s = layout.baseline_for(key)) return probe_seg(s);
  return std::nullopt;
}

ReadView Engine::snapshot() {
  ReadView v;
  const std::size_t n = table_count();
  v.snaps_.reserve(n);
  std::lock_guard lock(clock_.mutex());
  v.read_v_ = clock_.visible_locked();
  for (std::size_t i = 0; i < n; ++i) v.snaps_.push_back(tables_[i]->mgr->acquire_locked(v.read_v_));
  return v;
}

std::optional<Row> Engine::get(TableId t, Key key) {
  if (!CheckedTable(t).ok()) return std::nullopt;
  Snapshot snap = T(t).mgr->acquire();
  return GetAt(snap.layout(), snap.read_version(), key);
}

std::optional<Row> Engine::get(const ReadView& view, TableId t, Key key) {
  if (t >= view.snaps_.size()) return std::nullopt;
  const Snapshot& s = view.snaps_[t];
  return GetAt(s.layout(), s.read_version(), key);
}

namespace {

Status CheckProjection(const Schema& schema, const std::vector<std::size_t>& projection, bool ints_only) {
  if (projection.empty()) return Status::InvalidArgument("empty projection");
  for (auto c : projection) {
    if (c >= schema.column_count()) return Status::InvalidArgument("column " + std::to_string(c) + " out of range");
    if (ints_only && schema.type(c) != CellType::kInt64) {
      return Status::InvalidArgument("column " + schema.column(c).name + " is not int64");
    }
  }
  return Status::Ok();
}

}  // namespace

// Registers a foreground plan with the idle forecaster and feeds the profile afterwards.
class Engine::QueryScope {
 public:
  QueryScope(Engine* e, std::vector<ForecastEntry> entries) : e_(e), entries_(std::move(entries)) {
    double offset = 0;
    for (auto& en : entries_) {
      en.duration = e_->profiles_.estimate_duration(en.kind, en.cost);
      en.start_offset = offset;
      offset += en.duration;
    }
    id_ = e_->plans_.begin(PlanForecast{entries_}, e_->time_->now());
    start_ = std::chrono::steady_clock::now();
    stage_start_ = start_;
  }
  // Marks entry i done and records its duration.
  void done(std::size_t i) {
    const double secs = Seconds(stage_start_);
    stage_start_ = std::chrono::steady_clock::now();
    e_->plans_.progress(id_, i, 1.0);
    e_->profiles_.record_execution(entries_[i].kind, secs, entries_[i].cost);
  }
  ~QueryScope() { e_->plans_.end(id_); }

 private:
  Engine* e_;
  std::vector<ForecastEntry> entries_;
  std::uint64_t id_ = 0;
  std::chrono::steady_clock::time_point start_;
  std::chrono::steady_clock::time_point stage_start_;
};

namespace {

double ProjectionWeight(const Schema& schema, const std::vector<std::size_t>& cols) {
  double w = 0;
  for (auto c : cols) w += CostWeight(schema.type(c));
  return w;
}

}  // namespace

StatusOr<ScanResult> Engine::scan_project(TableId t, KeyRange range, const std::vector<std::size_t>& projection) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  ReadView v = snapshot();
  return scan_project(v, t, range, projection);
}

StatusOr<ScanResult> Engine::scan_project(const ReadView& view, TableId t, KeyRange range,
                                          const std::vector<std::size_t>& projection) {
  if (t >= view.snaps_.size()) return Status::InvalidArgument("table not in view");
  const Table& table = T(t);
  SYNCHRO_RETURN_IF_ERROR(CheckProjection(table.schema, projection, false));
  const Snapshot& s = view.snaps_[t];
  const double cost = EstimateRangeRows(s.layout(), range) * ProjectionWeight(table.schema, projection);
  QueryScope q(this, {ForecastEntry{OpKind::kScan, cost, 1, 0, 0}});
  ScanResult out;
  SYNCHRO_RETURN_IF_ERROR(VisitRange(s.layout(), s.read_version(), range, projection, [&](const Hit& h) {
    out.keys.push_back(h.key);
    std::vector<Cell> cells;
    cells.reserve(projection.size());
    for (std::size_t j = 0; j < projection.size(); ++j) cells.push_back(h.cell(j));
    out.rows.push_back(std::move(cells));
    return true;
  }));
  q.done(0);
  return out;
}

StatusOr<std::uint64_t> Engine::count(const ReadView& view, TableId t, KeyRange range) {
  if (t >= view.snaps_.size()) return Status::InvalidArgument("table not in view");
  const Snapshot& s = view.snaps_[t];
  std::uint64_t n = 0;
  SYNCHRO_RETURN_IF_ERROR(VisitRange(s.layout(), s.read_version(), range, {0}, [&](const Hit&) {
    ++n;
    return true;
  }));
  return n;
}

StatusOr<std::vector<std::pair<Key, std::int64_t>>> Engine::agg_sum(TableId t, KeyRange range,
                                                                    const std::vector<std::size_t>& cols) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  ReadView v = snapshot();
  return agg_sum(v, t, range, cols);
}

StatusOr<std::vector<std::pair<Key, std::int64_t>>> Engine::agg_sum(const ReadView& view, TableId t, KeyRange range,
                                                                    const std::vector<std::size_t>& cols) {
  if (t >= view.snaps_.size()) return Status::InvalidArgument("table not in view");
  const Table& table = T(t);
  SYNCHRO_RETURN_IF_ERROR(CheckProjection(table.schema, cols, true));
  const Snapshot& s = view.snaps_[t];
  const double cost = EstimateRangeRows(s.layout(), range) * ProjectionWeight(table.schema, cols);
  QueryScope q(this, {ForecastEntry{OpKind::kAggSum, cost, 1, 0, 0}});
  std::vector<std::pair<Key, std::int64_t>> out;
  std::optional<Key> overflow;
  SYNCHRO_RETURN_IF_ERROR(VisitRange(s.layout(), s.read_version(), range, cols, [&](const Hit& h) {
    std::int64_t acc = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (__builtin_add_overflow(acc, h.int_at(j), &acc)) {
        overflow = h.key;
        return false;
      }
    }
    out.emplace_back(h.key, acc);
    return true;
  }));
  if (overflow) return Status::Overflow("sum overflows int64 at key " + std::to_string(*overflow));
  q.done(0);
  return out;
}

StatusOr<std::vector<std::optional<std::int64_t>>> Engine::agg_max(TableId t, KeyRange range,
                                                                   const std::vector<std::size_t>& cols) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  ReadView v = snapshot();
  return agg_max(v, t, range, cols);
}

StatusOr<std::vector<std::optional<std::int64_t>>> Engine::agg_max(const ReadView& view, TableId t, KeyRange range,
                                                                   const std::vector<std::size_t>& cols) {
  if (t >= view.snaps_.size()) return Status::InvalidArgument("table not in view");
  const Table& table = T(t);
  SYNCHRO_RETURN_IF_ERROR(CheckProjection(table.schema, cols, true));
  const Snapshot& s = view.snaps_[t];
  const double cost = EstimateRangeRows(s.layout(), range) * ProjectionWeight(table.schema, cols);
  QueryScope q(this, {ForecastEntry{OpKind::kAggMax, cost, 1, 0, 0}});
  std::vector<std::optional<std::int64_t>> out(cols.size());
  SYNCHRO_RETURN_IF_ERROR(VisitRange(s.layout(), s.read_version(), range, cols, [&](const Hit& h) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const std::int64_t x = h.int_at(j);
      if (!out[j] || x > *out[j]) out[j] = x;
    }
    return true;
  }));
  q.done(0);
  return out;
}

StatusOr<std::vector<JoinPair>> Engine::join(TableId t1, KeyRange t1_range, TableId t2,
                                             std::optional<Col2Filter> filter) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t1));
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t2));
  ReadView v = snapshot();
  return join(v, t1, t1_range, t2, filter);
}

StatusOr<std::vector<JoinPair>> Engine::join(const ReadView& view, TableId t1, KeyRange t1_range, TableId t2,
                                             std::optional<Col2Filter> filter) {
  if (t1 >= view.snaps_.size() || t2 >= view.snaps_.size()) return Status::InvalidArgument("table not in view");
  const Schema& s1 = T(t1).schema;
  std::vector<std::size_t> probe_cols{0, 1};
  if (filter) probe_cols.push_back(2);
  SYNCHRO_RETURN_IF_ERROR(CheckProjection(s1, probe_cols, true));
  const Snapshot& a = view.snaps_[t1];
  const Snapshot& b = view.snaps_[t2];
  const double build_cost = EstimateRangeRows(b.layout(), KeyRange::All());
  const double probe_cost = EstimateRangeRows(a.layout(), t1_range) * ProjectionWeight(s1, probe_cols);
  QueryScope q(this, {ForecastEntry{OpKind::kJoinBuild, build_cost, 1, 0, 0},
                      ForecastEntry{OpKind::kJoinProbe, probe_cost, 1, 0, 0}});

  std::unordered_set<std::int64_t> build;
  SYNCHRO_RETURN_IF_ERROR(VisitRange(b.layout(), b.read_version(), KeyRange::All(), {0}, [&](const Hit& h) {
    build.insert(h.key);
    return true;
  }));
  q.done(0);
  std::vector<JoinPair> out;
  if (build.empty()) {
    q.done(1);
    return out;
  }
  SYNCHRO_RETURN_IF_ERROR(VisitRange(a.layout(), a.read_version(), t1_range, probe_cols, [&](const Hit& h) {
    const std::int64_t c1 = h.int_at(1);
    if (!build.count(c1)) return true;
    if (filter) {
      const std::int64_t c2 = h.int_at(2);
      if (c2 < filter->lo || c2 > filter->hi) return true;
    }
    out.push_back(JoinPair{h.key, c1});
    return true;
  }));
  q.done(1);
  return out;
}

// ---- Writes ----

Engine::Located Engine::Locate(Table&, const Layout& layout, Key key) {
  Located loc;
  std::optional<RowLookup> hit;
  auto probe = [&](const RowTable& t) {
    if (t.maybe_contains(key)) hit = t.get(key, Version::Max());
  };
  probe(*layout.active);
  for (auto it = layout.frozen.rbegin(); it != layout.frozen.rend(); ++it) {
    if (hit && hit->kind != RowLookup::Kind::kAbsent) break;
    probe(**it);
  }
  if (hit && hit->found()) {
    loc.kind = Located::kTier;
    loc.row = hit->row;
    return loc;
  }
  if (auto occ = FindLiveInSegments(layout, key, Version::Max())) {
    loc.kind = Located::kSegment;
    loc.occ = std::move(*occ);
  }
  return loc;
}

void Engine::Commit(Version v) { clock_.commit(v); }

void Engine::RotateLocked(Table& table) {
  LayoutPtr l = table.mgr->latest();
  l->active->freeze();
  LayoutEdit e;
  e.new_active = NewRowTable();
  auto r = table.mgr->publish(e);
  (void)r;  // adding a table cannot conflict
}

void Engine::PutLocked(Table& table, RowPtr row, Version v) {
  LayoutPtr l = table.mgr->latest();
  if (l->active->put(std::move(row), v) == WriteResult::kFull) RotateLocked(table);
}

void Engine::TombstoneLocked(Table& table, Key key, Version v) {
  LayoutPtr l = table.mgr->latest();
  if (l->active->delete_mark(key, v) == WriteResult::kFull) RotateLocked(table);
}

Status Engine::MarkLocked(const std::vector<std::pair<SegmentPtr, std::uint32_t>>& occs, Version v) {
  std::map<std::uint64_t, std::pair<SegmentPtr, std::vector<std::uint32_t>>> by_seg;
  for (const auto& [seg, off] : occs) {
    auto& slot = by_seg[seg->id()];
    slot.first = seg;
    slot.second.push_back(off);
  }
  for (auto& [id, entry] : by_seg) {
    auto& offs = entry.second;
    std::sort(offs.begin(), offs.end());
    offs.erase(std::unique(offs.begin(), offs.end()), offs.end());
    SYNCHRO_RETURN_IF_ERROR(entry.first->mark_delete(offs, v));
  }
  return Status::Ok();
}

Status Engine::WriteDeltaLocked(Table& table, const std::vector<Row>& rows, Version v) {
  BuildOptions bo;
  bo.cap_bytes = options_.granularity.segment_cap;
  bo.create_version = v;
  auto built = build_segments(rows, table.schema, segment_ids_, bo);
  if (!built.ok()) return built.status();
  LayoutEdit e;
  e.add_delta = std::move(built->segments);
  auto r = table.mgr->publish(e, v);
  if (!r.ok()) return r.status();
  return Status::Ok();
}

Status Engine::RebuildOpenSegmentLocked(Table& table, std::vector<RowPtr> rows, Version v) {
  // Copy-on-write: live rows of the open segment merged with the new ones.
  const std::uint64_t cap = options_.granularity.segment_cap;
  SegmentPtr old = table.open;
  std::vector<SegmentPtr> sealed;
  SegmentBuilder builder(table.types);
  std::size_t i = 0;
  std::uint32_t j = 0;
  const std::uint32_t old_rows = old ? static_cast<std::uint32_t>(old->row_count()) : 0;
  auto flush_if_needed = [&](std::uint64_t rb) {
    if (!builder.fits(rb, cap)) sealed.push_back(builder.finish(segment_ids_.next(), v));
  };
  while (i < rows.size() || j < old_rows) {
    if (j < old_rows && old->is_deleted(j, Version::Max())) {
      ++j;
      continue;
    }
    const bool take_old = j < old_rows && (i >= rows.size() || old->keys()[j] < rows[i]->key);
    if (take_old) {
      flush_if_needed(old->row_bytes(j));
      SYNCHRO_RETURN_IF_ERROR(builder.append_from(*old, j));
      ++j;
    } else {
      flush_if_needed(builder.row_bytes(*rows[i]));
      SYNCHRO_RETURN_IF_ERROR(builder.append(*rows[i]));
      ++i;
    }
  }
  SegmentPtr next_open;
  if (builder.rows() > 0) {
    SegmentPtr last = builder.finish(segment_ids_.next(), v);
    if (last->size_bytes() >= cap) {
      sealed.push_back(std::move(last));
    } else {
      next_open = std::move(last);
    }
  }
  LayoutEdit e;
  if (old) e.remove_delta.push_back(old->id());
  e.add_delta = sealed;
  if (next_open) {
    e.add_delta.push_back(next_open);
    const std::uint64_t k = CompactionMarkSet::SegmentKey(next_open->id());
    SYNCHRO_RETURN_IF_ERROR(table.marks.mark(std::span(&k, 1)));
  }
  auto r = table.mgr->publish(e, v);
  if (old) {
    const std::uint64_t k = CompactionMarkSet::SegmentKey(old->id());
    table.marks.unmark(std::span(&k, 1));
  }
  if (!r.ok()) {
    if (next_open) {
      const std::uint64_t k = CompactionMarkSet::SegmentKey(next_open->id());
      table.marks.unmark(std::span(&k, 1));
    }
    table.open = nullptr;
    return r.status();
  }
  table.open = std::move(next_open);
  return Status::Ok();
}

Status Engine::WriteSmallLocked(Table& table, std::vector<RowPtr> rows, Version v) {
  if (options_.mode == EngineMode::kIncrementalCol && !rows.empty()) {
    return RebuildOpenSegmentLocked(table, std::move(rows), v);
  }
  for (auto& r : rows) PutLocked(table, std::move(r), v);
  Commit(v);
  return Status::Ok();
}

Status Engine::insert(TableId t, Row row) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  Table& table = T(t);
  SYNCHRO_RETURN_IF_ERROR(validate_row(table.schema, row));
  std::lock_guard lane(write_mu_);
  LayoutPtr l = table.mgr->latest();
  if (Locate(table, *l, row.key).kind != Located::kNone) {
    return Status::DuplicateKey("key " + std::to_string(row.key) + " already exists");
  }
  const Version v = clock_.allocate();
  std::vector<RowPtr> rows{std::make_shared<const Row>(std::move(row))};
  return WriteSmallLocked(table, std::move(rows), v);
}

Status Engine::bulk_insert(TableId t, std::vector<Row> rows) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  Table& table = T(t);
  std::uint64_t bytes = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SYNCHRO_RETURN_IF_ERROR(validate_row(table.schema, rows[i]));
    if (i > 0 && rows[i].key <= rows[i - 1].key) {
      return Status::InvalidArgument("batch not strictly key-sorted at key " + std::to_string(rows[i].key));
    }
    bytes += rows[i].payload_bytes();
  }
  if (rows.empty()) return Status::Ok();
  std::lock_guard lane(write_mu_);
  LayoutPtr l = table.mgr->latest();
  for (const auto& r : rows) {
    if (Locate(table, *l, r.key).kind != Located::kNone) {
      return Status::DuplicateKey("key " + std::to_string(r.key) + " already exists");
    }
  }
  const Version v = clock_.allocate();
  if (bytes >= options_.batch_threshold) return WriteDeltaLocked(table, rows, v);
  std::vector<RowPtr> ptrs;
  ptrs.reserve(rows.size());
  for (auto& r : rows) ptrs.push_back(std::make_shared<const Row>(std::move(r)));
  return WriteSmallLocked(table, std::move(ptrs), v);
}

StatusOr<UpsertOutcome> Engine::upsert(TableId t, Row row) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  Table& table = T(t);
  SYNCHRO_RETURN_IF_ERROR(validate_row(table.schema, row));
  std::lock_guard lane(write_mu_);
  LayoutPtr l = table.mgr->latest();
  Located loc = Locate(table, *l, row.key);
  const Version v = clock_.allocate();
  const bool to_segment = options_.mode == EngineMode::kIncrementalCol;
  if (loc.kind == Located::kSegment) {
    SYNCHRO_RETURN_IF_ERROR(MarkLocked({{loc.occ.segment, loc.occ.offset}}, v));
  } else if (loc.kind == Located::kTier && to_segment) {
    TombstoneLocked(table, row.key, v);
  }
  std::vector<RowPtr> rows{std::make_shared<const Row>(std::move(row))};
  SYNCHRO_RETURN_IF_ERROR(WriteSmallLocked(table, std::move(rows), v));
  return loc.kind == Located::kNone ? UpsertOutcome::kInserted : UpsertOutcome::kUpdated;
}

namespace {

struct Occurrences {
  std::vector<Row> rows;  // materialized, key order
  std::vector<std::pair<SegmentPtr, std::uint32_t>> in_segments;
  std::vector<Key> in_tier;
};

}  // namespace

StatusOr<std::uint64_t> Engine::update_where(TableId t, KeyRange range, const std::vector<Assignment>& assignments) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  Table& table = T(t);
  for (const auto& a : assignments) {
    if (a.column == 0) return Status::InvalidArgument("the key column cannot be assigned");
    if (a.column >= table.schema.column_count()) {
      return Status::InvalidArgument("column " + std::to_string(a.column) + " out of range");
    }
    if (TypeOf(a.value) != table.schema.type(a.column)) {
      return Status::InvalidArgument("type mismatch for " + table.schema.column(a.column).name);
    }
  }
  std::vector<std::size_t> all(table.schema.column_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  std::lock_guard lane(write_mu_);
  LayoutPtr l = table.mgr->latest();
  Occurrences occ;
  std::uint64_t bytes = 0;
  SYNCHRO_RETURN_IF_ERROR(VisitRange(*l, Version::Max(), range, all, [&](const Hit& h) {
    Row r = h.materialize(table.schema);
    for (const auto& a : assignments) r.cells[a.column] = a.value;
    bytes += r.payload_bytes();
    occ.rows.push_back(std::move(r));
    if (h.segment) {
      occ.in_segments.emplace_back(*h.segment, h.offset);
    } else {
      occ.in_tier.push_back(h.key);
    }
    return true;
  }));
  const std::uint64_t n = occ.rows.size();
  if (n == 0) return std::uint64_t{0};
  const Version v = clock_.allocate();
  const bool big = bytes >= options_.batch_threshold;
  SYNCHRO_RETURN_IF_ERROR(MarkLocked(occ.in_segments, v));
  if (big || options_.mode == EngineMode::kIncrementalCol) {
    for (Key k : occ.in_tier) TombstoneLocked(table, k, v);
  }
  if (big) {
    SYNCHRO_RETURN_IF_ERROR(WriteDeltaLocked(table, occ.rows, v));
  } else {
    std::vector<RowPtr> ptrs;
    ptrs.reserve(n);
    for (auto& r : occ.rows) ptrs.push_back(std::make_shared<const Row>(std::move(r)));
    SYNCHRO_RETURN_IF_ERROR(WriteSmallLocked(table, std::move(ptrs), v));
  }
  return n;
}

StatusOr<std::uint64_t> Engine::delete_where(TableId t, KeyRange range) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  Table& table = T(t);
  std::lock_guard lane(write_mu_);
  LayoutPtr l = table.mgr->latest();
  Occurrences occ;
  std::uint64_t n = 0;
  SYNCHRO_RETURN_IF_ERROR(VisitRange(*l, Version::Max(), range, {0}, [&](const Hit& h) {
    ++n;
    if (h.segment) {
      occ.in_segments.emplace_back(*h.segment, h.offset);
    } else {
      occ.in_tier.push_back(h.key);
    }
    return true;
  }));
  if (n == 0) return std::uint64_t{0};
  const Version v = clock_.allocate();
  SYNCHRO_RETURN_IF_ERROR(MarkLocked(occ.in_segments, v));
  for (Key k : occ.in_tier) TombstoneLocked(table, k, v);
  Commit(v);
  return n;
}

}  // namespace synchro

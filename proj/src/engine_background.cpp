#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "engine_internal.hpp"

namespace synchro {

namespace {

constexpr int kTagTableShift = 56;
constexpr int kTagKindShift = 52;
constexpr std::uint64_t kTagBucketMask = (std::uint64_t{1} << kTagKindShift) - 1;

std::uint64_t MakeTag(TableId t, TaskKind kind, std::uint64_t bucket) {
  return (std::uint64_t{t} << kTagTableShift) | (static_cast<std::uint64_t>(kind) << kTagKindShift) |
         (bucket & kTagBucketMask);
}

struct DecodedTag {
  TableId table;
  TaskKind kind;
  std::optional<std::uint64_t> bucket;
};

DecodedTag Decode(std::uint64_t tag) {
  DecodedTag d;
  d.table = static_cast<TableId>(tag >> kTagTableShift);
  d.kind = static_cast<TaskKind>((tag >> kTagKindShift) & 0xf);
  const std::uint64_t b = tag & kTagBucketMask;
  if (b != 0) d.bucket = b;
  return d;
}

double Since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

// ---- Executor ----

void Engine::StartBackground() {
  const int workers = std::max(1, options_.cores - 1);
  {
    std::lock_guard lock(q_mu_);
    stopping_ = false;
  }
  for (int i = 0; i < workers; ++i) workers_.emplace_back([this] { Worker(); });
  scheduler_->start();
}

void Engine::StopBackground() {
  scheduler_->stop();
  {
    std::lock_guard lock(q_mu_);
    stopping_ = true;
  }
  q_cv_.notify_all();
  for (auto& w : workers_) w.join();
  workers_.clear();
  std::lock_guard lock(q_mu_);
  inflight_.fetch_sub(static_cast<int>(queue_.size()));
  queue_.clear();
  idle_cv_.notify_all();
}

void Engine::Worker() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(q_mu_);
      q_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    job();
  }
}

void Engine::wait_background_idle() {
  std::unique_lock lock(q_mu_);
  idle_cv_.wait(lock, [this] { return inflight_.load() == 0; });
}

void Engine::pause_background() {
  {
    std::lock_guard lock(pause_mu_);
    if (pause_depth_++ == 0) scheduler_->stop();
  }
  wait_background_idle();
}

void Engine::resume_background() {
  std::lock_guard lock(pause_mu_);
  if (pause_depth_ > 0 && --pause_depth_ == 0 && !workers_.empty()) scheduler_->start();
}

// ---- BackgroundHost ----

std::vector<Candidate> Engine::candidates() {
  std::vector<Candidate> conv;
  std::vector<Candidate> delta;
  std::vector<Candidate> bucket;
  const std::size_t n = table_count();
  const auto& cfg = options_.granularity;
  for (TableId ti = 0; ti < n; ++ti) {
    Table& t = T(ti);
    LayoutPtr l = t.mgr->latest();
    const double weight = t.schema.row_cost_weight();
    if (ConversionEnabled() && !l->frozen.empty()) {
      const auto& f = l->frozen.front();
      if (!t.marks.is_marked(CompactionMarkSet::RowTableKey(f->id()))) {
        const double cost = static_cast<double>(f->entry_count()) * weight;
        conv.push_back({TaskKind::kRowToColumn, profiles_.estimate_duration(OpKind::kRowToColumn, cost),
                        MakeTag(ti, TaskKind::kRowToColumn, 0)});
      }
    }
    std::uint64_t unmarked = 0;
    for (const auto& s : l->delta) {
      if (!t.marks.is_marked(CompactionMarkSet::SegmentKey(s->id()))) unmarked += s->size_bytes();
    }
    if (unmarked >= options_.delta_trigger) {
      auto omega = select_omega(*l, cfg, &t.marks);
      double rows = 0;
      for (const auto& s : omega) rows += static_cast<double>(s->row_count());
      if (!omega.empty()) {
        delta.push_back({TaskKind::kDeltaToTransition,
                         profiles_.estimate_duration(OpKind::kDeltaToTransition, rows * weight),
                         MakeTag(ti, TaskKind::kDeltaToTransition, 0)});
      }
    }
    BucketPtr pick;
    for (const auto& b : l->buckets) {
      if (b->data_bytes() <= cfg.T || t.marks.is_marked(CompactionMarkSet::BucketKey(b->id))) continue;
      if (!pick || b->data_bytes() > pick->data_bytes()) pick = b;
    }
    if (pick) {
      double rows = 0;
      for (const auto& s : select_bucket_inputs(*pick, cfg)) rows += static_cast<double>(s->row_count());
      for (const auto& s : pick->covered_baseline) rows += static_cast<double>(s->row_count());
      bucket.push_back({TaskKind::kBucketToBaseline,
                        profiles_.estimate_duration(OpKind::kBucketToBaseline, rows * weight),
                        MakeTag(ti, TaskKind::kBucketToBaseline, pick->id)});
    }
  }
  std::vector<Candidate> out = std::move(conv);
  out.insert(out.end(), delta.begin(), delta.end());
  out.insert(out.end(), bucket.begin(), bucket.end());
  return out;
}

void Engine::launch(const Candidate& c) {
  const DecodedTag d = Decode(c.tag);
  auto job = [this, d] {
    auto r = RunInline(d.table, d.kind, false, d.bucket);
    if (!r.ok()) {
      background_errors_.fetch_add(1);
      std::cerr << "background " << TaskKindName(d.kind) << " failed: " << r.status().ToString() << "\n";
    }
    {
      std::lock_guard lock(q_mu_);
      inflight_.fetch_sub(1);
    }
    idle_cv_.notify_all();
  };
  inflight_.fetch_add(1);
  if (workers_.empty()) {
    job();
    return;
  }
  {
    std::lock_guard lock(q_mu_);
    queue_.push_back(std::move(job));
  }
  q_cv_.notify_one();
}

// ---- Tasks ----

std::optional<PlannedTask> Engine::Plan(Table& table, TaskKind kind, bool force, std::optional<std::uint64_t> bucket) {
  const auto& cfg = options_.granularity;
  switch (kind) {
    case TaskKind::kRowToColumn:
      if (!ConversionEnabled()) return std::nullopt;
      return plan_conversion(*table.mgr, table.marks);
    case TaskKind::kDeltaToTransition:
      if (!force) {
        LayoutPtr l = table.mgr->latest();
        std::uint64_t unmarked = 0;
        for (const auto& s : l->delta) {
          if (!table.marks.is_marked(CompactionMarkSet::SegmentKey(s->id()))) unmarked += s->size_bytes();
        }
        if (unmarked < options_.delta_trigger) return std::nullopt;
      }
      return plan_delta_compaction(*table.mgr, table.marks, cfg);
    case TaskKind::kBucketToBaseline:
      return plan_bucket_compaction(*table.mgr, table.marks, cfg, bucket, !force);
  }
  return std::nullopt;
}

std::optional<Engine::PendingTask> Engine::plan_task(TableId t, TaskKind kind, bool force) {
  if (!CheckedTable(t).ok()) return std::nullopt;
  auto task = Plan(T(t), kind, force, std::nullopt);
  if (!task) return std::nullopt;
  PendingTask p;
  p.table = t;
  p.task = std::move(task);
  return p;
}

Status Engine::execute(PendingTask& p) {
  if (!p.task) return Status::FailedPrecondition("no planned task");
  const auto start = std::chrono::steady_clock::now();
  auto out = execute_task(*p.task, options_.granularity, segment_ids_);
  p.seconds = Since(start);
  if (!out.ok()) return out.status();
  p.output = std::move(*out);
  return Status::Ok();
}

void Engine::abandon(PendingTask& p) {
  if (p.task) release_task(*p.task, T(p.table).marks);
  p.task.reset();
  p.output.reset();
}

StatusOr<bool> Engine::finish(PendingTask& p) {
  if (!p.task || !p.output) return Status::FailedPrecondition("task not executed");
  Table& table = T(p.table);
  TaskRecord rec;
  const auto start = std::chrono::steady_clock::now();
  StatusOr<LayoutPtr> r = [&] {
    std::lock_guard lane(write_mu_);
    return publish_task(*p.task, *p.output, *table.mgr, options_.granularity, segment_ids_, &rec);
  }();
  if (!r.ok()) {
    abandon(p);
    if (r.status().code() == StatusCode::kStale) {
      tasks_stale_.fetch_add(1);
      return false;
    }
    return r.status();
  }
  rec.seconds = p.seconds + Since(start);
  profiles_.record_execution(OpKindFor(p.task->kind), p.seconds, p.task->cost_units(table.schema));
  {
    std::lock_guard lock(log_mu_);
    task_log_.push_back(LoggedTask{p.table, std::move(rec)});
  }
  tasks_completed_.fetch_add(1);
  abandon(p);
  return true;
}

StatusOr<bool> Engine::RunInline(TableId t, TaskKind kind, bool force, std::optional<std::uint64_t> bucket) {
  SYNCHRO_RETURN_IF_ERROR(CheckedTable(t));
  auto task = Plan(T(t), kind, force, bucket);
  if (!task) return false;
  PendingTask p;
  p.table = t;
  p.task = std::move(task);
  Status s = execute(p);
  if (!s.ok()) {
    abandon(p);
    if (s.code() == StatusCode::kStale) return false;
    return s;
  }
  return finish(p);
}

StatusOr<bool> Engine::run_task(TableId t, TaskKind kind, bool force) { return RunInline(t, kind, force, std::nullopt); }

Status Engine::run_background_until_idle() {
  for (;;) {
    bool progress = false;
    for (const auto& c : candidates()) {
      const DecodedTag d = Decode(c.tag);
      auto r = RunInline(d.table, d.kind, false, d.bucket);
      if (!r.ok()) return r.status();
      progress = progress || *r;
    }
    if (!progress) return Status::Ok();
  }
}

Status Engine::drain() {
  pause_background();
  struct Resume {
    Engine* e;
    ~Resume() { e->resume_background(); }
  } resume{this};

  constexpr int kMaxIdleRounds = 8;
  const std::size_t n = table_count();
  for (TableId ti = 0; ti < n; ++ti) {
    Table& t = T(ti);
    {
      std::lock_guard lane(write_mu_);
      if (ConversionEnabled() && !t.mgr->latest()->active->empty()) RotateLocked(t);
      if (t.open) {
        const std::uint64_t k = CompactionMarkSet::SegmentKey(t.open->id());
        t.marks.unmark(std::span(&k, 1));
        t.open = nullptr;
      }
    }
    auto loop = [&](TaskKind kind, const std::function<bool(const Layout&)>& pending,
                    const std::function<std::optional<std::uint64_t>(const Layout&)>& bucket) -> Status {
      int idle = 0;
      for (;;) {
        LayoutPtr l = t.mgr->latest();
        if (!pending(*l)) return Status::Ok();
        auto r = RunInline(ti, kind, true, bucket(*l));
        if (!r.ok()) return r.status();
        if (!*r && ++idle > kMaxIdleRounds) {
          return Status::Internal(std::string("drain made no progress on ") + TaskKindName(kind));
        }
      }
    };
    auto none = [](const Layout&) { return std::optional<std::uint64_t>{}; };
    if (ConversionEnabled()) {
      SYNCHRO_RETURN_IF_ERROR(loop(
          TaskKind::kRowToColumn, [](const Layout& l) { return !l.frozen.empty(); }, none));
    }
    SYNCHRO_RETURN_IF_ERROR(loop(
        TaskKind::kDeltaToTransition, [](const Layout& l) { return !l.delta.empty(); }, none));
    auto first_bucket = [](const Layout& l) -> std::optional<std::uint64_t> {
      for (const auto& b : l.buckets) {
        if (!b->segments.empty()) return b->id;
      }
      return std::nullopt;
    };
    SYNCHRO_RETURN_IF_ERROR(loop(
        TaskKind::kBucketToBaseline, [&](const Layout& l) { return first_bucket(l).has_value(); }, first_bucket));
  }
  return Status::Ok();
}

// ---- Persistence ----

namespace {

constexpr const char* kTablesFile = "TABLES";
constexpr const char* kClockFile = "CLOCK";
constexpr const char* kManifestFile = "MANIFEST";

std::string SegmentFileName(std::uint64_t id) { return std::to_string(id) + ".sseg"; }

Status WriteText(const std::filesystem::path& p, const std::string& text) {
  return WriteFileAtomic(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

StatusOr<std::string> ReadText(const std::filesystem::path& p) {
  auto bytes = ReadFile(p);
  if (!bytes.ok()) return bytes.status();
  return std::string(bytes->begin(), bytes->end());
}

}  // namespace

Status Engine::save(const std::filesystem::path& dir) {
  pause_background();
  struct Resume {
    Engine* e;
    ~Resume() { e->resume_background(); }
  } resume{this};
  std::lock_guard lane(write_mu_);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return Status::IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream tables;
  const std::size_t n = table_count();
  for (TableId ti = 0; ti < n; ++ti) {
    Table& t = T(ti);
    LayoutPtr l = t.mgr->latest();
    if (!l->active->empty() || !l->frozen.empty()) {
      return Status::FailedPrecondition("table " + t.name + " has rowtable data; drain before saving");
    }
    const auto tdir = dir / t.name;
    std::filesystem::create_directories(tdir, ec);
    if (ec) return Status::IoError("cannot create " + tdir.string() + ": " + ec.message());
    auto write_seg = [&](const SegmentPtr& s) { return WriteFileAtomic(tdir / SegmentFileName(s->id()), s->encode()); };
    for (const auto& s : l->delta) SYNCHRO_RETURN_IF_ERROR(write_seg(s));
    for (const auto& b : l->buckets) {
      for (const auto& s : b->segments) SYNCHRO_RETURN_IF_ERROR(write_seg(s));
    }
    for (const auto& s : l->baseline) SYNCHRO_RETURN_IF_ERROR(write_seg(s));
    SYNCHRO_RETURN_IF_ERROR(WriteManifest(tdir / kManifestFile, ManifestOf(*l)));
    tables << t.name;
    for (const auto& c : t.schema.columns()) tables << " " << c.name << ":" << (c.type == CellType::kInt64 ? "int64" : "utf8");
    tables << "\n";
  }
  SYNCHRO_RETURN_IF_ERROR(WriteText(dir / kTablesFile, tables.str()));
  return WriteText(dir / kClockFile, "visible " + std::to_string(clock_.visible().value) + "\n");
}

StatusOr<std::unique_ptr<Engine>> Engine::open(const std::filesystem::path& dir, EngineOptions options) {
  auto tables_text = ReadText(dir / kTablesFile);
  if (!tables_text.ok()) return tables_text.status();
  auto clock_text = ReadText(dir / kClockFile);
  if (!clock_text.ok()) return clock_text.status();

  const BackgroundMode wanted = options.background;
  options.background = BackgroundMode::kManual;
  auto e = std::make_unique<Engine>(options);

  std::istringstream lines(*tables_text);
  std::string line;
  std::uint64_t max_seg = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string name;
    in >> name;
    std::vector<ColumnDef> cols;
    std::string col;
    while (in >> col) {
      const auto colon = col.rfind(':');
      if (colon == std::string::npos) return Status::Corruption("bad column spec '" + col + "'");
      const std::string type = col.substr(colon + 1);
      if (type != "int64" && type != "utf8") return Status::Corruption("bad column type '" + type + "'");
      cols.push_back({col.substr(0, colon), type == "int64" ? CellType::kInt64 : CellType::kUtf8});
    }
    auto schema = Schema::Make(std::move(cols));
    if (!schema.ok()) return schema.status();
    auto id = e->create_table(name, std::move(*schema));
    if (!id.ok()) return id.status();

    const auto tdir = dir / name;
    auto manifest = ReadManifest(tdir / kManifestFile);
    if (!manifest.ok()) return manifest.status();
    Layout l;
    l.active = e->NewRowTable();
    std::map<std::uint64_t, ColumnBucket> buckets;
    for (const auto& [bid, range] : manifest->bucket_ranges) {
      ColumnBucket b;
      b.id = bid;
      b.range = range;
      buckets.emplace(bid, std::move(b));
    }
    for (const auto& r : manifest->records) {
      auto bytes = ReadFile(tdir / SegmentFileName(r.segment_id));
      if (!bytes.ok()) return bytes.status();
      auto seg = ColumnSegment::decode(r.segment_id, *bytes);
      if (!seg.ok()) return Status::Corruption("segment " + std::to_string(r.segment_id) + ": " + seg.status().message());
      if ((*seg)->min_key() != r.min_key || (*seg)->max_key() != r.max_key || (*seg)->size_bytes() != r.size_bytes) {
        return Status::Corruption("segment " + std::to_string(r.segment_id) + " does not match the manifest");
      }
      max_seg = std::max(max_seg, r.segment_id);
      if (r.layer == "DELTA") {
        l.delta.push_back(*seg);
      } else if (r.layer == "BASE") {
        l.baseline.push_back(*seg);
      } else if (r.layer.rfind("BUCKET:", 0) == 0) {
        auto it = buckets.find(std::stoull(r.layer.substr(7)));
        if (it == buckets.end()) return Status::Corruption("segment in unknown bucket " + r.layer);
        it->second.segments.push_back(*seg);
      } else {
        return Status::Corruption("unknown layer " + r.layer);
      }
    }
    for (auto& [bid, b] : buckets) {
      l.buckets.push_back(std::make_shared<const ColumnBucket>(std::move(b)));
      e->T(*id).mgr->bucket_ids().advance_past(bid);
    }
    std::sort(l.buckets.begin(), l.buckets.end(),
              [](const BucketPtr& a, const BucketPtr& b) { return a->range.lo < b->range.lo; });
    auto fixed = ApplyEdit(l, LayoutEdit{}, e->T(*id).mgr->bucket_ids());
    if (!fixed.ok()) return Status::Corruption("saved layout invalid: " + fixed.status().message());
    e->T(*id).mgr->reset(std::move(*fixed));
  }
  std::istringstream cin(*clock_text);
  std::string word;
  std::uint64_t visible = 0;
  if (!(cin >> word >> visible) || word != "visible") return Status::Corruption("bad CLOCK file");
  e->clock_.restore(Version{visible});
  e->segment_ids_.advance_past(max_seg);

  if (wanted == BackgroundMode::kThreads) {
    e->options_.background = wanted;
    e->StartBackground();
  }
  return e;
}

}  // namespace synchro

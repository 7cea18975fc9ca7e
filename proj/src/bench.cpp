#include "synchro/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace synchro::bench {
namespace {

using Clock = std::chrono::steady_clock;

double MsSince(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void Fnv(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 1099511628211ull;
  }
}

constexpr std::size_t kCol3 = 3;
constexpr std::uint64_t kLoadBatchRows = 2048;

std::vector<std::size_t> IntCols(std::size_t k) {
  std::vector<std::size_t> cols(k);
  std::iota(cols.begin(), cols.end(), 1);
  return cols;
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const char* OpName(Op op) {
  switch (op) {
    case Op::kInsert: return "q1_insert";
    case Op::kUpdate: return "q2_update";
    case Op::kSum: return "q3_sum";
    case Op::kMax: return "q4_max";
    case Op::kJoin: return "q5_join";
  }
  return "?";
}

StatusOr<Mix> ParseMix(std::string_view text) {
  Mix m;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const std::size_t colon = item.find(':');
    if (colon == std::string_view::npos || item.size() < 2 || item[0] != 'q') {
      return Status::InvalidArgument("bad mix entry '" + std::string(item) + "'");
    }
    int q = 0;
    double w = 0;
    try {
      q = std::stoi(std::string(item.substr(1, colon - 1)));
      std::size_t used = 0;
      const std::string ws(item.substr(colon + 1));
      w = std::stod(ws, &used);
      if (used != ws.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      return Status::InvalidArgument("bad mix entry '" + std::string(item) + "'");
    }
    if (q < 1 || q > static_cast<int>(kOpKinds)) return Status::InvalidArgument("unknown query q" + std::to_string(q));
    m.w[q - 1] = w;
  }
  return m;
}

std::string FormatMix(const Mix& mix) {
  std::string out;
  for (std::size_t i = 0; i < kOpKinds; ++i) {
    if (i) out += ',';
    std::ostringstream w;
    w << mix.w[i];
    out += "q" + std::to_string(i + 1) + ":" + w.str();
  }
  return out;
}

Status WorkloadSpec::validate() const {
  if (!(data_mb >= 0) || !std::isfinite(data_mb)) return Status::InvalidArgument("data_mb must be >= 0");
  double sum = 0;
  for (double w : mix.w) {
    if (!(w >= 0) || !std::isfinite(w)) return Status::InvalidArgument("mix weights must be >= 0");
    sum += w;
  }
  if (sum <= 0) return Status::InvalidArgument("mix weights sum to 0");
  if (!(update_ratio >= 0 && update_ratio <= 1)) return Status::InvalidArgument("update_ratio must be in [0, 1]");
  if (projection_k < 1 || projection_k > 15) return Status::InvalidArgument("projection must be in [1, 15]");
  if (range_rows < 1) return Status::InvalidArgument("range_rows must be >= 1");
  if (client_threads < 1) return Status::InvalidArgument("threads must be >= 1");
  if (op_count == 0 && !(duration_s > 0)) return Status::InvalidArgument("need a duration or an op count");
  return Status::Ok();
}

std::uint64_t BenchRowBytes() {
  static const std::uint64_t bytes = BenchRow(0, 1).payload_bytes();
  return bytes;
}

std::uint64_t RowsForMb(double mb) {
  return static_cast<std::uint64_t>(std::floor(mb * 1048576.0 / static_cast<double>(BenchRowBytes())));
}

Row BenchRow(Key key, std::uint64_t domain) {
  Row r;
  r.key = key;
  r.cells.reserve(31);
  r.cells.emplace_back(std::int64_t{key});
  const std::uint64_t h = Mix64(static_cast<std::uint64_t>(key));
  r.cells.emplace_back(static_cast<std::int64_t>(domain ? h % domain : 0));
  r.cells.emplace_back(static_cast<std::int64_t>(Mix64(h) % 1000));
  for (std::size_t c = 3; c <= 15; ++c) r.cells.emplace_back(static_cast<std::int64_t>(Mix64(h + c) % 1000000));
  for (std::size_t c = 16; c <= 30; ++c) r.cells.emplace_back(std::string(kStringBytes, static_cast<char>('a' + (h >> c) % 26)));
  return r;
}

StatusOr<double> Percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return Status::InvalidArgument("no samples");
  if (!(p > 0 && p <= 100)) return Status::InvalidArgument("percentile must be in (0, 100]");
  std::sort(samples.begin(), samples.end());
  // ceil(p/100 * n) with a little slack for decimal percentiles like 99.9
  const long double exact = static_cast<long double>(p) * samples.size() / 100.0L;
  auto rank = static_cast<std::size_t>(std::ceil(exact - 1e-9L));
  rank = std::clamp<std::size_t>(rank, 1, samples.size());
  return samples[rank - 1];
}

std::vector<double> LatencyReport::all_samples() const {
  std::vector<double> all;
  for (const auto& s : samples_ms) all.insert(all.end(), s.begin(), s.end());
  return all;
}

std::vector<OpLatency> LatencyReport::summarize() const {
  std::vector<OpLatency> out;
  auto one = [&](std::string name, const std::vector<double>& s) {
    OpLatency l;
    l.op = std::move(name);
    l.count = s.size();
    l.p50 = *Percentile(s, 50);
    l.p75 = *Percentile(s, 75);
    l.p99 = *Percentile(s, 99);
    l.p999 = *Percentile(s, 99.9);
    l.p9999 = *Percentile(s, 99.99);
    l.throughput = seconds > 0 ? s.size() / seconds : 0;
    out.push_back(std::move(l));
  };
  for (std::size_t i = 0; i < kOpKinds; ++i) {
    if (!samples_ms[i].empty()) one(OpName(static_cast<Op>(i)), samples_ms[i]);
  }
  auto all = all_samples();
  if (!all.empty()) one("all", all);
  return out;
}

std::string ReportCsv(const LatencyReport& r) {
  std::string out = "op,p50_ms,p75_ms,p99_ms,p999_ms,p9999_ms,count,throughput_ops\n";
  for (const auto& l : r.summarize()) {
    out += l.op + "," + Fmt(l.p50) + "," + Fmt(l.p75) + "," + Fmt(l.p99) + "," + Fmt(l.p999) + "," + Fmt(l.p9999) +
           "," + std::to_string(l.count) + "," + Fmt(l.throughput) + "\n";
  }
  return out;
}

std::string ReportTable(const LatencyReport& r) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %10s %10s %9s %11s\n", "op", "P50", "P75", "P99", "P99.9",
                "P99.99", "count", "ops/s");
  out += line;
  for (const auto& l : r.summarize()) {
    std::snprintf(line, sizeof line, "%-10s %10.3f %10.3f %10.3f %10.3f %10.3f %9llu %11.1f\n", l.op.c_str(), l.p50,
                  l.p75, l.p99, l.p999, l.p9999, static_cast<unsigned long long>(l.count), l.throughput);
    out += line;
  }
  std::snprintf(line, sizeof line, "tasks=%llu max_task_bytes=%llu max_traditional_c=%llu admission_violations=%llu\n",
                static_cast<unsigned long long>(r.tasks), static_cast<unsigned long long>(r.max_task_bytes),
                static_cast<unsigned long long>(r.max_traditional_c),
                static_cast<unsigned long long>(r.admission_violations));
  out += line;
  return out;
}

std::string ReportJson(const LatencyReport& r, const WorkloadSpec& spec, EngineMode mode) {
  nlohmann::json j;
  j["mode"] = EngineModeName(mode);
  j["mix"] = FormatMix(spec.mix);
  j["data_mb"] = spec.data_mb;
  j["update_ratio"] = spec.update_ratio;
  j["projection"] = spec.projection_k;
  j["range_rows"] = spec.range_rows;
  j["threads"] = spec.client_threads;
  j["seed"] = spec.seed;
  j["seconds"] = r.seconds;
  j["op_log_hash"] = r.op_log_hash;
  j["tasks"] = r.tasks;
  j["task_bytes"] = r.task_bytes;
  j["max_task_bytes"] = r.max_task_bytes;
  j["max_traditional_c"] = r.max_traditional_c;
  j["admissions"] = r.admissions;
  j["admission_violations"] = r.admission_violations;
  j["verify_checked"] = r.verify_checked;
  j["verify_mismatches"] = r.verify_mismatches;
  return j.dump(2) + "\n";
}

// ---- op generation ----

OpGenerator::OpGenerator(const WorkloadSpec& spec, std::uint64_t loaded_rows, int thread, std::uint64_t insert_base)
    : spec_(spec),
      rows_(loaded_rows),
      insert_base_(insert_base ? insert_base : loaded_rows),
      thread_(thread),
      rng_(Mix64(spec.seed) ^ Mix64(0x5151 + static_cast<std::uint64_t>(thread))),
      pick_(spec.mix.w.begin(), spec.mix.w.end()) {}

OpGenerator::Next OpGenerator::next() {
  Next n;
  n.op = static_cast<Op>(pick_(rng_));
  const auto threads = static_cast<std::uint64_t>(spec_.client_threads);
  const auto t = static_cast<std::uint64_t>(thread_);
  switch (n.op) {
    case Op::kInsert:
      // disjoint per thread, above the loaded keys
      n.key = static_cast<Key>(insert_base_ + t + threads * inserts_++);
      break;
    case Op::kUpdate: {
      // keys t, t+threads, ... below the update pool: one writer per key
      const auto pool = static_cast<std::uint64_t>(std::floor(spec_.update_ratio * static_cast<double>(rows_)));
      const std::uint64_t mine = pool > t ? (pool - t + threads - 1) / threads : 0;
      if (mine == 0) {
        n.key = -1;
      } else {
        n.key = static_cast<Key>(t + threads * std::uniform_int_distribution<std::uint64_t>(0, mine - 1)(rng_));
        n.value = static_cast<std::int64_t>(rng_() % 1000000);
      }
      break;
    }
    default: {
      const std::uint64_t top = rows_ > spec_.range_rows ? rows_ - spec_.range_rows : 0;
      n.key = static_cast<Key>(std::uniform_int_distribution<std::uint64_t>(0, top)(rng_));
      break;
    }
  }
  Fnv(hash_, static_cast<std::uint64_t>(n.op));
  Fnv(hash_, static_cast<std::uint64_t>(n.key));
  Fnv(hash_, static_cast<std::uint64_t>(n.value));
  return n;
}

std::uint64_t OpLogHash(const WorkloadSpec& spec, std::uint64_t loaded_rows, std::uint64_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (int t = 0; t < spec.client_threads; ++t) {
    OpGenerator g(spec, loaded_rows, t);
    for (std::uint64_t i = 0; i < n; ++i) g.next();
    Fnv(h, g.hash());
  }
  return h;
}

// ---- driver ----

Bench::Bench(EngineOptions options) : engine_(std::make_unique<Engine>(std::move(options))) {}

Bench::Bench(std::unique_ptr<Engine> engine, std::uint64_t loaded_rows)
    : engine_(std::move(engine)), loaded_(true), rows_(loaded_rows) {
  t1_ = engine_->find_table("table_1").value_or(0);
  t2_ = engine_->find_table("table_2").value_or(0);
}

Status Bench::EnsureTables() {
  if (auto t = engine_->find_table("table_1")) {
    t1_ = *t;
  } else {
    auto r = engine_->create_table("table_1", Schema::Benchmark());
    if (!r.ok()) return r.status();
    t1_ = *r;
  }
  if (auto t = engine_->find_table("table_2")) {
    t2_ = *t;
  } else {
    auto r = engine_->create_table("table_2", Schema::Benchmark());
    if (!r.ok()) return r.status();
    t2_ = *r;
  }
  return Status::Ok();
}

Status Bench::load(const WorkloadSpec& spec) {
  if (!(spec.data_mb >= 0)) return Status::InvalidArgument("data_mb must be >= 0");
  SYNCHRO_RETURN_IF_ERROR(EnsureTables());
  auto existing = engine_->count(engine_->snapshot(), t1_, KeyRange::All());
  if (loaded_ || !existing.ok() || *existing > 0) return Status::FailedPrecondition("engine already loaded");
  const std::uint64_t n = RowsForMb(spec.data_mb);
  for (std::uint64_t lo = 0; lo < n; lo += kLoadBatchRows) {
    std::vector<Row> batch;
    const std::uint64_t hi = std::min(n, lo + kLoadBatchRows);
    batch.reserve(hi - lo);
    for (std::uint64_t k = lo; k < hi; ++k) batch.push_back(BenchRow(static_cast<Key>(k), n));
    SYNCHRO_RETURN_IF_ERROR(engine_->bulk_insert(t1_, std::move(batch)));
  }
  // table_2: every tenth value of table_1.col_1's domain
  const std::uint64_t n2 = n / 10;
  for (std::uint64_t lo = 0; lo < n2; lo += kLoadBatchRows) {
    std::vector<Row> batch;
    const std::uint64_t hi = std::min(n2, lo + kLoadBatchRows);
    for (std::uint64_t i = lo; i < hi; ++i) batch.push_back(BenchRow(static_cast<Key>(10 * i), n));
    SYNCHRO_RETURN_IF_ERROR(engine_->bulk_insert(t2_, std::move(batch)));
  }
  SYNCHRO_RETURN_IF_ERROR(engine_->drain());
  rows_ = n;
  loaded_ = true;
  return Status::Ok();
}

std::optional<Row> Bench::Expected(Key k) const {
  if (k < 0) return std::nullopt;
  if (static_cast<std::uint64_t>(k) < rows_) {
    Row r = BenchRow(k, rows_);
    if (auto it = updated_col3_.find(k); it != updated_col3_.end()) r.cells[kCol3] = it->second;
    return r;
  }
  if (inserted_.count(k)) return BenchRow(k, rows_);
  return std::nullopt;
}

std::pair<std::uint64_t, std::uint64_t> Bench::verify(std::uint64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(Mix64(seed ^ 0xfeed));
  Key hi = static_cast<Key>(rows_);
  if (!inserted_.empty()) hi = std::max(hi, *inserted_.rbegin() + 1);
  hi += 16;  // a few keys that were never written
  std::uint64_t bad = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const Key k = std::uniform_int_distribution<Key>(0, hi - 1)(rng);
    if (engine_->get(t1_, k) != Expected(k)) ++bad;
  }
  return {n, bad};
}

StatusOr<LatencyReport> Bench::run(const WorkloadSpec& spec) {
  SYNCHRO_RETURN_IF_ERROR(spec.validate());
  if (!loaded_) return Status::FailedPrecondition("engine not loaded");
  struct Client {
    std::array<std::vector<double>, kOpKinds> ms;
    std::map<Key, std::int64_t> updates;
    std::vector<Key> inserts;
    std::uint64_t hash = 0;
    Status error;
  };
  const auto threads = static_cast<std::size_t>(spec.client_threads);
  std::vector<Client> clients(threads);
  const std::size_t log_start = engine_->task_log().size();
  std::uint64_t admissions0 = 0, violations0 = 0;
  if (auto* s = engine_->scheduler()) {
    admissions0 = s->admissions().size();
    violations0 = s->admission_violations();
  }
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(spec.duration_s > 0 ? spec.duration_s : 0));
  const std::vector<std::size_t> cols = IntCols(spec.projection_k);
  std::atomic<bool> go{false};
  // earlier runs already used some insert keys
  const std::uint64_t insert_base =
      inserted_.empty() ? rows_ : std::max<std::uint64_t>(rows_, static_cast<std::uint64_t>(*inserted_.rbegin()) + 1);

  auto body = [&](std::size_t t) {
    Client& c = clients[t];
    OpGenerator gen(spec, rows_, static_cast<int>(t), insert_base);
    while (!go.load()) std::this_thread::yield();
    for (std::uint64_t i = 0;; ++i) {
      if (spec.op_count ? i >= spec.op_count : Clock::now() >= deadline) break;
      const auto n = gen.next();
      const KeyRange range = KeyRange::Of(n.key, n.key + static_cast<Key>(spec.range_rows));
      Status s;
      const auto t0 = Clock::now();
      switch (n.op) {
        case Op::kInsert:
          s = engine_->insert(t1_, BenchRow(n.key, rows_));
          if (s.ok()) c.inserts.push_back(n.key);
          break;
        case Op::kUpdate:
          if (n.key < 0) continue;
          s = engine_->update_where(t1_, KeyRange::Of(n.key, n.key + 1), {{kCol3, n.value}}).status();
          if (s.ok()) c.updates[n.key] = n.value;
          break;
        case Op::kSum:
          s = engine_->agg_sum(t1_, range, cols).status();
          break;
        case Op::kMax:
          s = engine_->agg_max(t1_, range, cols).status();
          break;
        case Op::kJoin:
          s = engine_->join(t1_, range, t2_).status();
          break;
      }
      c.ms[static_cast<std::size_t>(n.op)].push_back(MsSince(t0));
      if (!s.ok() && c.error.ok()) c.error = s;
    }
    c.hash = gen.hash();
  };

  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(body, t);
  const auto start = Clock::now();
  go = true;
  for (auto& th : pool) th.join();

  LatencyReport r;
  r.seconds = MsSince(start) / 1000.0;
  r.op_log_hash = 1469598103934665603ull;
  for (auto& c : clients) {
    if (!c.error.ok()) return c.error;
    for (std::size_t i = 0; i < kOpKinds; ++i) r.samples_ms[i].insert(r.samples_ms[i].end(), c.ms[i].begin(), c.ms[i].end());
    for (const auto& [k, v] : c.updates) updated_col3_[k] = v;
    inserted_.insert(c.inserts.begin(), c.inserts.end());
    Fnv(r.op_log_hash, c.hash);
  }
  const auto log = engine_->task_log();
  for (std::size_t i = log_start; i < log.size(); ++i) {
    const auto& rec = log[i].record;
    ++r.tasks;
    r.task_bytes += rec.input_bytes;
    r.max_task_bytes = std::max(r.max_task_bytes, rec.input_bytes);
    r.max_traditional_c = std::max(r.max_traditional_c, rec.traditional_c);
  }
  if (auto* s = engine_->scheduler()) {
    r.admissions = s->admissions().size() - admissions0;
    r.admission_violations = s->admission_violations() - violations0;
  }
  const auto [checked, bad] = verify(1000, spec.seed);
  r.verify_checked = checked;
  r.verify_mismatches = bad;
  return r;
}

Status Bench::save(const std::filesystem::path& dir, const WorkloadSpec& spec) {
  if (!loaded_) return Status::FailedPrecondition("engine not loaded");
  SYNCHRO_RETURN_IF_ERROR(engine_->save(dir));
  nlohmann::json j;
  j["rows"] = rows_;
  j["data_mb"] = spec.data_mb;
  j["row_bytes"] = BenchRowBytes();
  const std::string text = j.dump(2) + "\n";
  return WriteFileAtomic(dir / "bench.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

StatusOr<std::unique_ptr<Bench>> Bench::open(const std::filesystem::path& dir, EngineOptions options) {
  auto meta = ReadFile(dir / "bench.json");
  if (!meta.ok()) return meta.status();
  std::uint64_t rows = 0;
  try {
    rows = nlohmann::json::parse(meta->begin(), meta->end()).at("rows").get<std::uint64_t>();
  } catch (const std::exception& e) {
    return Status::Corruption(std::string("bad bench.json: ") + e.what());
  }
  auto engine = Engine::open(dir, std::move(options));
  if (!engine.ok()) return engine.status();
  if (!(*engine)->find_table("table_1") || !(*engine)->find_table("table_2")) {
    return Status::Corruption("bench tables missing");
  }
  return std::make_unique<Bench>(std::move(*engine), rows);
}

// ---- update ablation ----

double MeasureScanMs(Engine& e, TableId t, std::size_t projection_k, int repeats) {
  std::vector<std::size_t> proj(projection_k + 1);
  std::iota(proj.begin(), proj.end(), 0);
  std::vector<double> ms;
  for (int i = 0; i < std::max(1, repeats); ++i) {
    const auto t0 = Clock::now();
    auto r = e.scan_project(t, KeyRange::All(), proj);
    ms.push_back(MsSince(t0));
    if (!r.ok()) return -1;
  }
  return *Percentile(ms, 50);
}

StatusOr<AblationRow> RunAblationCell(const AblationOptions& opt, double ratio, EngineMode mode) {
  EngineOptions eo = opt.engine;
  eo.mode = mode;
  Bench b(eo);
  WorkloadSpec spec;
  spec.data_mb = opt.data_mb;
  spec.seed = opt.seed;
  SYNCHRO_RETURN_IF_ERROR(b.load(spec));
  Engine& e = b.engine();
  AblationRow row;
  row.ratio = ratio;
  row.mode = mode;
  row.scan_ms_before = MeasureScanMs(e, b.t1(), opt.projection_k, opt.scan_repeats);

  const std::uint64_t n = b.loaded_rows();
  std::vector<Key> keys(n);
  std::iota(keys.begin(), keys.end(), 0);
  std::mt19937_64 rng(Mix64(opt.seed));
  std::shuffle(keys.begin(), keys.end(), rng);
  keys.resize(static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
  row.updates = keys.size();

  const auto t0 = Clock::now();
  for (Key k : keys) {
    auto r = e.update_where(b.t1(), KeyRange::Of(k, k + 1), {{kCol3, static_cast<std::int64_t>(rng() % 1000000)}});
    if (!r.ok()) return r.status();
    if (*r != 1) return Status::Internal("update of key " + std::to_string(k) + " touched " + std::to_string(*r));
  }
  row.update_seconds = MsSince(t0) / 1000.0;
  SYNCHRO_RETURN_IF_ERROR(e.drain());
  auto rows = e.count(e.snapshot(), b.t1(), KeyRange::All());
  if (!rows.ok()) return rows.status();
  if (*rows != n) return Status::Internal("row count changed during the update pass");
  row.scan_ms_after = MeasureScanMs(e, b.t1(), opt.projection_k, opt.scan_repeats);
  return row;
}

StatusOr<std::vector<AblationRow>> RunAblation(const AblationOptions& opt) {
  std::vector<AblationRow> out;
  for (double ratio : opt.ratios) {
    for (EngineMode mode : opt.modes) {
      auto r = RunAblationCell(opt, ratio, mode);
      if (!r.ok()) return r.status();
      out.push_back(*r);
    }
  }
  return out;
}

StatusOr<GranularityResult> RunGranularityExperiment(double data_mb, const GranularityConfig& cfg, std::uint64_t seed,
                                                     std::uint64_t round_updates) {
  EngineOptions eo;
  eo.mode = EngineMode::kSynchro;
  eo.background = BackgroundMode::kManual;
  eo.granularity = cfg;
  eo.batch_threshold = std::min<std::uint64_t>(eo.batch_threshold, cfg.rowtable_cap);
  eo.expected_row_bytes = BenchRowBytes();
  Bench b(eo);
  WorkloadSpec spec;
  spec.data_mb = data_mb;
  SYNCHRO_RETURN_IF_ERROR(b.load(spec));
  Engine& e = b.engine();
  const std::uint64_t n = b.loaded_rows();
  std::vector<Key> keys(n);
  std::iota(keys.begin(), keys.end(), 0);
  std::mt19937_64 rng(Mix64(seed));
  std::shuffle(keys.begin(), keys.end(), rng);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto r = e.update_where(b.t1(), KeyRange::Of(keys[i], keys[i] + 1), {{kCol3, static_cast<std::int64_t>(i)}});
    if (!r.ok()) return r.status();
    if ((i + 1) % std::max<std::uint64_t>(round_updates, 1) == 0) SYNCHRO_RETURN_IF_ERROR(e.run_background_until_idle());
  }
  SYNCHRO_RETURN_IF_ERROR(e.drain());
  GranularityResult g;
  g.rows = n;
  g.bound = cfg.G + cfg.segment_cap;
  for (const auto& t : e.task_log()) {
    if (t.table != b.t1()) continue;
    ++g.tasks;
    g.max_task_bytes = std::max(g.max_task_bytes, t.record.input_bytes);
    g.max_traditional_c = std::max(g.max_traditional_c, t.record.traditional_c);
    if (t.record.input_bytes > g.bound) ++g.over_bound;
    if (t.record.traditional_c > 5 * g.bound) ++g.traditional_over_5x;
  }
  // the data must survive intact
  auto count = e.count(e.snapshot(), b.t1(), KeyRange::All());
  if (!count.ok()) return count.status();
  if (*count != n) return Status::Internal("row count changed during the update pass");
  return g;
}

std::string AblationCsv(const std::vector<AblationRow>& rows) {
  std::string out = "update_ratio,mode,updates,update_seconds,scan_ms_before,scan_ms_after\n";
  for (const auto& r : rows) {
    out += Fmt(r.ratio) + "," + EngineModeName(r.mode) + "," + std::to_string(r.updates) + "," + Fmt(r.update_seconds) +
           "," + Fmt(r.scan_ms_before) + "," + Fmt(r.scan_ms_after) + "\n";
  }
  return out;
}

}  // namespace synchro::bench

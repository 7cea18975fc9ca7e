#include "synchro/scheduler.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace synchro {

const char* OpKindName(OpKind kind) {
  switch (kind) {
    case OpKind::kScan: return "scan";
    case OpKind::kFilter: return "filter";
    case OpKind::kProject: return "project";
    case OpKind::kAggSum: return "agg_sum";
    case OpKind::kAggMax: return "agg_max";
    case OpKind::kJoinBuild: return "join_build";
    case OpKind::kJoinProbe: return "join_probe";
    case OpKind::kRowToColumn: return "row_to_column";
    case OpKind::kDeltaToTransition: return "delta_to_transition";
    case OpKind::kBucketToBaseline: return "bucket_to_baseline";
  }
  return "unknown";
}

OpKind OpKindFor(TaskKind kind) {
  switch (kind) {
    case TaskKind::kRowToColumn: return OpKind::kRowToColumn;
    case TaskKind::kDeltaToTransition: return OpKind::kDeltaToTransition;
    case TaskKind::kBucketToBaseline: return OpKind::kBucketToBaseline;
  }
  return OpKind::kScan;
}

void OperatorProfile::add_sample(double sample) {
  ++n;
  phi += (sample - phi) / static_cast<double>(n);
}

double ProfileTable::estimate_duration(OpKind kind, double cost) const {
  if (cost <= 0) return 0;
  std::lock_guard lock(mu_);
  return cost * profiles_[static_cast<std::size_t>(kind)].phi * unit_.load();
}

double ProfileTable::record_execution(OpKind kind, double actual_seconds, double cost) {
  std::lock_guard lock(mu_);
  auto& p = profiles_[static_cast<std::size_t>(kind)];
  const double unit = unit_.load();
  if (cost <= 0 || unit <= 0 || actual_seconds < 0) return p.phi;
  const double sample = actual_seconds / (cost * unit);
  // Keep phi strictly positive even for zero-time samples.
  p.add_sample(std::max(sample, 1e-12));
  return p.phi;
}

OperatorProfile ProfileTable::profile(OpKind kind) const {
  std::lock_guard lock(mu_);
  return profiles_[static_cast<std::size_t>(kind)];
}

double CalibrateUnitSecondsPerCost(double budget_seconds) {
  std::vector<std::int64_t> col(1 << 20);
  std::iota(col.begin(), col.end(), 0);
  const auto start = std::chrono::steady_clock::now();
  double units = 0;
  volatile std::int64_t sink = 0;
  double elapsed = 0;
  do {
    std::int64_t acc = 0;
    for (auto v : col) acc += v;
    sink = sink + acc;
    units += static_cast<double>(col.size());
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  } while (elapsed < budget_seconds);
  return elapsed / units;
}

namespace {

struct Interval {
  double start;
  double end;
  int workers;
};

std::vector<Interval> Clip(const std::vector<PlanForecast>& plans, double horizon) {
  std::vector<Interval> out;
  for (const auto& p : plans) {
    for (const auto& e : p.entries) {
      const double s = std::max(0.0, e.start_offset);
      const double t = std::min(horizon, e.start_offset + e.duration);
      if (t > s && e.workers > 0) out.push_back({s, t, e.workers});
    }
  }
  return out;
}

// Usage per elementary interval between breakpoints.
std::vector<std::pair<std::pair<double, double>, int>> Timeline(const std::vector<PlanForecast>& plans, double horizon) {
  const auto iv = Clip(plans, horizon);
  std::set<double> cuts{0.0, horizon};
  for (const auto& i : iv) {
    cuts.insert(i.start);
    cuts.insert(i.end);
  }
  std::vector<std::pair<std::pair<double, double>, int>> out;
  for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
    const double a = *it;
    const double b = *std::next(it);
    if (b <= a || a >= horizon) continue;
    int used = 0;
    for (const auto& i : iv) {
      if (i.start <= a && a < i.end) used += i.workers;
    }
    out.push_back({{a, b}, used});
  }
  return out;
}

}  // namespace

std::vector<IdleWindow> forecast_idle(const std::vector<PlanForecast>& plans, CoreBudget budget, double horizon) {
  std::vector<IdleWindow> out;
  if (horizon <= 0) return out;
  for (const auto& [span, used] : Timeline(plans, horizon)) {
    const int free = budget.N - used - budget.g;
    if (free <= 0) continue;
    if (!out.empty() && out.back().free_cores == free && out.back().start + out.back().length == span.first) {
      out.back().length += span.second - span.first;
    } else {
      out.push_back({span.first, span.second - span.first, free});
    }
  }
  return out;
}

int PeakUsage(const std::vector<PlanForecast>& plans, double duration) {
  int peak = 0;
  const double d = std::max(duration, 1e-9);
  for (const auto& [span, used] : Timeline(plans, d)) peak = std::max(peak, used);
  return peak;
}

TickResult schedule_tick(double now, const std::vector<PlanForecast>& plans, CoreBudget budget,
                         const std::vector<Candidate>& candidates, double horizon) {
  TickResult r;
  r.windows = forecast_idle(plans, budget, horizon);
  r.free_now = (!r.windows.empty() && r.windows.front().start == 0) ? r.windows.front().free_cores : 0;
  for (const auto& c : candidates) {
    // The window at 0 must keep >= 1 free core for the whole duration (or to the horizon).
    const double d = std::min(std::max(c.est_seconds, 0.0), horizon);
    const int q = PeakUsage(plans, d);
    if (q + budget.g + 1 > budget.N) break;
    r.admissions.push_back(Admission{now, c.kind, q, budget.g, budget.N});
    r.launched.push_back(c);
    ++budget.g;
  }
  return r;
}

double SteadyClock::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void SteadyClock::sleep_for(double seconds) {
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

// ---- PlanRegistry ----

std::uint64_t PlanRegistry::begin(PlanForecast plan, double now) {
  std::lock_guard lock(mu_);
  const std::uint64_t id = next_id_++;
  Live l;
  l.start = now;
  l.progress.assign(plan.entries.size(), 0.0);
  l.plan = std::move(plan);
  live_.emplace(id, std::move(l));
  return id;
}

void PlanRegistry::progress(std::uint64_t id, std::size_t entry, double fraction) {
  std::lock_guard lock(mu_);
  auto it = live_.find(id);
  if (it == live_.end() || entry >= it->second.progress.size()) return;
  it->second.progress[entry] = std::clamp(fraction, 0.0, 1.0);
}

void PlanRegistry::end(std::uint64_t id) {
  std::lock_guard lock(mu_);
  live_.erase(id);
}

std::size_t PlanRegistry::live() const {
  std::lock_guard lock(mu_);
  return live_.size();
}

std::vector<PlanForecast> PlanRegistry::forecasts(double now, double min_residual) const {
  std::lock_guard lock(mu_);
  std::vector<PlanForecast> out;
  for (const auto& [id, l] : live_) {
    const double elapsed = now - l.start;
    PlanForecast f;
    int max_workers = 0;
    for (std::size_t i = 0; i < l.plan.entries.size(); ++i) {
      ForecastEntry e = l.plan.entries[i];
      max_workers = std::max(max_workers, e.workers);
      const double frac = l.progress[i];
      double start = e.start_offset - elapsed;
      double end = start + e.duration;
      if (frac >= 1.0) continue;
      if (frac > 0) {
        const double ran = std::max(elapsed - e.start_offset, 1e-9);
        start = 0;
        end = ran * (1 - frac) / frac;
      }
      if (end <= 0) continue;
      e.start_offset = std::max(0.0, start);
      e.duration = end - e.start_offset;
      f.entries.push_back(e);
    }
    if (f.entries.empty()) {
      // Still running past every estimate.
      f.entries.push_back(ForecastEntry{OpKind::kScan, 0, std::max(max_workers, 1), 0, min_residual});
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---- Scheduler ----

Scheduler::Scheduler(SchedulerOptions options, Clock* clock, ProfileTable* profiles, PlanRegistry* plans,
                     BackgroundHost* host)
    : options_(options), clock_(clock), profiles_(profiles), plans_(plans), host_(host) {
  options_.cores = std::max(options_.cores, 1);
}

Scheduler::~Scheduler() { stop(); }

TickResult Scheduler::tick() {
  std::lock_guard lock(tick_mu_);
  const double now = clock_->now();
  const auto plans = plans_->forecasts(now, options_.tick_seconds);
  const CoreBudget budget{options_.cores, host_->running()};
  auto candidates = host_->candidates();
  TickResult r;
  if (options_.greedy) {
    r.windows = forecast_idle(plans, budget, options_.horizon_seconds);
    int g = budget.g;
    for (const auto& c : candidates) {
      r.admissions.push_back(Admission{now, c.kind, PeakUsage(plans, std::min(c.est_seconds, options_.horizon_seconds)),
                                       g++, budget.N});
      r.launched.push_back(c);
    }
  } else {
    r = schedule_tick(now, plans, budget, candidates, options_.horizon_seconds);
  }
  for (const auto& c : r.launched) host_->launch(c);
  {
    std::lock_guard log(log_mu_);
    for (const auto& a : r.admissions) {
      if (!options_.greedy && a.q + a.g + 1 > a.N) violations_.fetch_add(1);
      admissions_.push_back(a);
    }
  }
  ticks_.fetch_add(1);
  if (stats_) {
    std::ostringstream line;
    line << std::fixed << std::setprecision(3) << "tick t=" << now << " free=" << r.free_now << " launched=";
    if (r.launched.empty()) line << "none";
    for (std::size_t i = 0; i < r.launched.size(); ++i) line << (i ? "," : "") << TaskKindName(r.launched[i].kind);
    line << " g=" << host_->running() << "\n";
    *stats_ << line.str();
  }
  return r;
}

void Scheduler::start() {
  std::lock_guard lock(run_mu_);
  if (running_) return;
  running_ = true;
  thread_ = std::thread([this] {
    std::unique_lock lk(run_mu_);
    while (running_) {
      lk.unlock();
      tick();
      lk.lock();
      run_cv_.wait_for(lk, std::chrono::duration<double>(options_.tick_seconds), [this] { return !running_; });
    }
  });
}

void Scheduler::stop() {
  {
    std::lock_guard lock(run_mu_);
    if (!running_) return;
    running_ = false;
  }
  run_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

std::vector<Admission> Scheduler::admissions() const {
  std::lock_guard lock(log_mu_);
  return admissions_;
}

}  // namespace synchro

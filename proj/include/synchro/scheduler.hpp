#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "synchro/compaction.hpp"

namespace synchro {

// Foreground operator kinds plus one profile per background task kind.
enum class OpKind {
  kScan,
  kFilter,
  kProject,
  kAggSum,
  kAggMax,
  kJoinBuild,
  kJoinProbe,
  kRowToColumn,
  kDeltaToTransition,
  kBucketToBaseline,
};
inline constexpr std::size_t kOpKindCount = 10;
const char* OpKindName(OpKind kind);
OpKind OpKindFor(TaskKind kind);

// Running-mean correction factor for one operator kind.
struct OperatorProfile {
  double phi = 1.0;
  std::uint64_t n = 0;

  // Incremental mean: phi += (sample - phi) / n.
  void add_sample(double sample);
};

class ProfileTable {
 public:
  explicit ProfileTable(double unit_seconds_per_cost = 1e-8) : unit_(unit_seconds_per_cost) {}

  double estimate_duration(OpKind kind, double cost) const;
  // Returns the updated phi. cost <= 0 skips the sample.
  double record_execution(OpKind kind, double actual_seconds, double cost);
  OperatorProfile profile(OpKind kind) const;
  double unit_seconds_per_cost() const { return unit_.load(); }
  void set_unit_seconds_per_cost(double u) { unit_.store(u); }

 private:
  std::atomic<double> unit_;
  mutable std::mutex mu_;
  std::array<OperatorProfile, kOpKindCount> profiles_{};
};

// Times the reference scan loop and returns seconds per cost unit.
double CalibrateUnitSecondsPerCost(double budget_seconds = 1.0);

struct ForecastEntry {
  OpKind kind = OpKind::kScan;
  double cost = 0;
  int workers = 1;
  double start_offset = 0;  // seconds from now
  double duration = 0;
};

struct PlanForecast {
  std::vector<ForecastEntry> entries;
};

struct CoreBudget {
  int N = 1;
  int g = 0;  // running background tasks
};

struct IdleWindow {
  double start = 0;
  double length = 0;
  int free_cores = 0;

  bool operator==(const IdleWindow&) const = default;
};

// Piecewise-constant free cores over [0, horizon); windows with no free core are omitted
// and equal neighbours merged.
std::vector<IdleWindow> forecast_idle(const std::vector<PlanForecast>& plans, CoreBudget budget, double horizon);

// Peak foreground cores in use over [0, duration).
int PeakUsage(const std::vector<PlanForecast>& plans, double duration);

struct Candidate {
  TaskKind kind = TaskKind::kRowToColumn;
  double est_seconds = 0;
  std::uint64_t tag = 0;  // host-defined identity
};

struct Admission {
  double now = 0;
  TaskKind kind = TaskKind::kRowToColumn;
  int q = 0;  // peak forecast foreground cores over the task's duration
  int g = 0;  // background tasks running before this launch
  int N = 0;
};

struct TickResult {
  std::vector<Candidate> launched;
  std::vector<Admission> admissions;
  std::vector<IdleWindow> windows;
  int free_now = 0;
};

// Launches candidates in priority order while each fits: the window starting now must
// have a free core for the task's estimated duration. A window that reaches the horizon
// counts as unbounded. Stops at the first candidate that does not fit.
TickResult schedule_tick(double now, const std::vector<PlanForecast>& plans, CoreBudget budget,
                         const std::vector<Candidate>& candidates, double horizon);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual void sleep_for(double seconds) = 0;
};

class SteadyClock final : public Clock {
 public:
  SteadyClock() : start_(std::chrono::steady_clock::now()) {}
  double now() const override;
  void sleep_for(double seconds) override;

 private:
  std::chrono::steady_clock::time_point start_;
};

// Deterministic clock for tests; sleep_for advances time.
class ManualClock final : public Clock {
 public:
  double now() const override { return now_.load(); }
  void sleep_for(double seconds) override { advance(seconds); }
  void advance(double seconds) { now_.store(now_.load() + seconds); }

 private:
  std::atomic<double> now_{0};
};

// Live foreground plans with progress, for idle forecasting.
class PlanRegistry {
 public:
  std::uint64_t begin(PlanForecast plan, double now);
  // fraction in [0, 1] of the entry's rows processed.
  void progress(std::uint64_t id, std::size_t entry, double fraction);
  void end(std::uint64_t id);
  std::size_t live() const;
  // Live plans re-expressed relative to now. Running entries with progress are
  // extrapolated linearly; overrunning entries keep a residual of min_residual seconds.
  std::vector<PlanForecast> forecasts(double now, double min_residual = 0.01) const;

 private:
  struct Live {
    double start = 0;
    PlanForecast plan;
    std::vector<double> progress;
  };
  mutable std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, Live> live_;
};

// Source of background work; implemented by the engine.
class BackgroundHost {
 public:
  virtual ~BackgroundHost() = default;
  // Candidates in priority order.
  virtual std::vector<Candidate> candidates() = 0;
  virtual void launch(const Candidate& c) = 0;
  virtual int running() const = 0;
};

struct SchedulerOptions {
  int cores = 1;
  double tick_seconds = 0.1;
  double horizon_seconds = 5.0;
  // Launch every candidate at once, ignoring the forecast.
  bool greedy = false;
};

class Scheduler {
 public:
  Scheduler(SchedulerOptions options, Clock* clock, ProfileTable* profiles, PlanRegistry* plans, BackgroundHost* host);
  ~Scheduler();

  // One monitor pass.
  TickResult tick();
  void start();
  void stop();

  void set_stats_stream(std::ostream* out) { stats_ = out; }
  std::vector<Admission> admissions() const;
  // Admissions that broke q + g + 1 <= N; greedy mode records but never checks.
  std::uint64_t admission_violations() const { return violations_.load(); }
  std::uint64_t ticks() const { return ticks_.load(); }
  const SchedulerOptions& options() const { return options_; }

 private:
  SchedulerOptions options_;
  Clock* clock_;
  ProfileTable* profiles_;
  PlanRegistry* plans_;
  BackgroundHost* host_;
  std::ostream* stats_ = nullptr;

  std::mutex tick_mu_;
  mutable std::mutex log_mu_;
  std::vector<Admission> admissions_;
  std::atomic<std::uint64_t> violations_{0};
  std::atomic<std::uint64_t> ticks_{0};

  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::thread thread_;
};

}  // namespace synchro

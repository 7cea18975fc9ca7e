#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "synchro/bench.hpp"

using namespace synchro;
using namespace synchro::bench;

namespace {

constexpr int kConfigError = 2;
constexpr int kVerifyError = 3;

struct EngineFlags {
  int cores = 0;
  double g_mb = 256, t_mb = 64, segment_mb = 4, rowtable_mb = 64, batch_mb = 4;
  double tick = 0.1;
};

void AddEngineFlags(CLI::App* app, EngineFlags& f) {
  app->add_option("--cores", f.cores, "core budget N (0 = hardware)");
  app->add_option("--G-mb", f.g_mb, "compaction granularity G");
  app->add_option("--T-mb", f.t_mb, "bucket threshold T");
  app->add_option("--segment-mb", f.segment_mb, "segment cap");
  app->add_option("--rowtable-mb", f.rowtable_mb, "row table capacity");
  app->add_option("--batch-mb", f.batch_mb, "writes at least this large go straight to delta segments");
  app->add_option("--tick", f.tick, "scheduler tick seconds");
}

std::uint64_t Mb(double mb) { return static_cast<std::uint64_t>(mb * 1048576.0); }

StatusOr<EngineOptions> Options(const EngineFlags& f, EngineMode mode) {
  EngineOptions o;
  o.mode = mode;
  o.cores = f.cores;
  o.granularity.G = Mb(f.g_mb);
  o.granularity.T = Mb(f.t_mb);
  o.granularity.segment_cap = Mb(f.segment_mb);
  o.granularity.rowtable_cap = Mb(f.rowtable_mb);
  o.batch_threshold = Mb(f.batch_mb);
  o.tick_seconds = f.tick;
  o.expected_row_bytes = BenchRowBytes();
  if (!(f.tick > 0)) return Status::InvalidArgument("tick must be > 0");
  if (auto s = o.granularity.validate(); !s.ok()) return s;
  return o;
}

std::filesystem::path ResolveDir(const std::string& flag) {
  if (const char* env = std::getenv("BENCH_DIR"); env && *env) return env;
  return flag;
}

int Fail(int code, const Status& s) {
  std::cerr << "bench: " << s.ToString() << "\n";
  return code;
}

bool WriteOut(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return true;
  }
  std::ofstream out(path);
  out << text;
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"workload driver for the synchro storage engine"};
  app.require_subcommand(1);

  EngineFlags ef;
  std::string dir = "bench_data";
  WorkloadSpec spec;
  std::string mode_name = "synchro", mix_text = "q1:3,q2:3,q3:2,q4:1,q5:1", out_path, format = "csv";
  std::string ratios_text = "1,20,100", modes_text = "synchro,no_scheduler,incremental_row,incremental_col";
  int reps = 1;

  auto* load = app.add_subcommand("load", "bulk-load table_1 and table_2, drain, and save");
  load->add_option("--data-mb", spec.data_mb, "table_1 size in MiB")->required();
  load->add_option("--dir", dir, "data directory (BENCH_DIR overrides)");
  AddEngineFlags(load, ef);

  auto* run = app.add_subcommand("run", "run a mixed workload against a loaded directory");
  run->add_option("--dir", dir, "data directory (BENCH_DIR overrides)");
  run->add_option("--mode", mode_name, "synchro|no_scheduler|incremental_row|incremental_col");
  run->add_option("--mix", mix_text, "weights, e.g. q1:3,q2:3,q3:2,q4:1,q5:1");
  run->add_option("--update-ratio", spec.update_ratio, "fraction of loaded keys eligible for q2");
  run->add_option("--projection", spec.projection_k, "int columns read by q3/q4");
  run->add_option("--range-rows", spec.range_rows, "rows per analytical range");
  run->add_option("--threads", spec.client_threads, "client threads");
  run->add_option("--seconds", spec.duration_s, "run length");
  run->add_option("--ops", spec.op_count, "ops per thread; overrides --seconds");
  run->add_option("--seed", spec.seed, "workload seed");
  run->add_option("--out", out_path, "report path ('-' for stdout)");
  run->add_option("--format", format, "csv|table")->check(CLI::IsMember({"csv", "table"}));
  AddEngineFlags(run, ef);

  auto* ablate = app.add_subcommand("ablate-updates", "update-path ablation, one CSV row per (ratio, mode)");
  ablate->add_option("--ratios", ratios_text, "update ratios in percent");
  ablate->add_option("--modes", modes_text, "modes to run");
  ablate->add_option("--data-mb", spec.data_mb, "table_1 size in MiB per cell");
  ablate->add_option("--projection", spec.projection_k, "int columns in the measured scan");
  ablate->add_option("--reps", reps, "repetitions");
  ablate->add_option("--seed", spec.seed, "seed");
  ablate->add_option("--out", out_path, "CSV path ('-' for stdout)");
  AddEngineFlags(ablate, ef);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  auto mode = ParseEngineMode(mode_name);
  if (!mode.ok()) return Fail(kConfigError, mode.status());
  auto opts = Options(ef, *mode);
  if (!opts.ok()) return Fail(kConfigError, opts.status());

  if (*load) {
    const auto path = ResolveDir(dir);
    if (!(spec.data_mb >= 0)) return Fail(kConfigError, Status::InvalidArgument("--data-mb must be >= 0"));
    if (std::filesystem::exists(path / "bench.json")) {
      return Fail(kConfigError, Status::FailedPrecondition(path.string() + " already holds a loaded engine"));
    }
    opts->background = BackgroundMode::kManual;
    Bench b(*opts);
    if (auto s = b.load(spec); !s.ok()) return Fail(1, s);
    if (auto s = b.save(path, spec); !s.ok()) return Fail(1, s);
    std::cout << "loaded " << b.loaded_rows() << " rows into " << path.string() << "\n";
    return 0;
  }

  if (*run) {
    auto mix = ParseMix(mix_text);
    if (!mix.ok()) return Fail(kConfigError, mix.status());
    spec.mix = *mix;
    if (auto s = spec.validate(); !s.ok()) return Fail(kConfigError, s);
    auto b = Bench::open(ResolveDir(dir), *opts);
    if (!b.ok()) return Fail(kConfigError, b.status());
    auto r = (*b)->run(spec);
    if (!r.ok()) return Fail(1, r.status());
    const std::string text = format == "csv" ? ReportCsv(*r) : ReportTable(*r);
    if (!WriteOut(out_path, text)) return Fail(1, Status::IoError("cannot write " + out_path));
    if (!out_path.empty() && out_path != "-") WriteOut(out_path + ".json", ReportJson(*r, spec, *mode));
    std::cerr << "verify: " << r->verify_mismatches << " mismatches in " << r->verify_checked << " gets\n";
    return r->verify_mismatches ? kVerifyError : 0;
  }

  // ablate-updates
  AblationOptions ao;
  ao.data_mb = spec.data_mb;
  ao.projection_k = spec.projection_k;
  ao.seed = spec.seed;
  ao.engine = *opts;
  ao.ratios.clear();
  ao.modes.clear();
  {
    std::stringstream ss(ratios_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        const double pct = std::stod(item);
        if (!(pct >= 0 && pct <= 100)) throw std::out_of_range("ratio");
        ao.ratios.push_back(pct / 100.0);
      } catch (const std::exception&) {
        return Fail(kConfigError, Status::InvalidArgument("bad ratio '" + item + "'"));
      }
    }
    std::stringstream ms(modes_text);
    while (std::getline(ms, item, ',')) {
      auto m = ParseEngineMode(item);
      if (!m.ok()) return Fail(kConfigError, m.status());
      ao.modes.push_back(*m);
    }
  }
  if (ao.ratios.empty() || ao.modes.empty() || reps < 1 || spec.projection_k < 1 || spec.projection_k > 15) {
    return Fail(kConfigError, Status::InvalidArgument("need ratios, modes, reps >= 1 and projection in [1, 15]"));
  }
  std::vector<AblationRow> all;
  for (int rep = 0; rep < reps; ++rep) {
    ao.seed = spec.seed + static_cast<std::uint64_t>(rep);
    auto rows = RunAblation(ao);
    if (!rows.ok()) return Fail(1, rows.status());
    all.insert(all.end(), rows->begin(), rows->end());
  }
  if (!WriteOut(out_path, AblationCsv(all))) return Fail(1, Status::IoError("cannot write " + out_path));
  return 0;
}

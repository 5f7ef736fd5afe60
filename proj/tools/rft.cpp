// rft: command-line front end. Generates supply-chain traces, runs the
// inference pipeline, the change detector, the smoothing baseline, the
// multi-site strategies, and the exposure monitors, and scores or sweeps
// them. Every command writes its outputs as files plus a JSON manifest
// (<out>.manifest.json) recording the exact configuration.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rftrack/distrib.hpp"
#include "rftrack/io.hpp"
#include "rftrack/metrics.hpp"
#include "rftrack/monitor.hpp"
#include "rftrack/smurf.hpp"

using namespace rft;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out = "rft_out";
  uint64_t seed = 1;
  bool seed_set = false;
  Epoch duration = 1500;
  int warehouses = 0;    // 0: keep config value
  double rr = -1.0;      // <0: keep config value
  double or_rate = -1.0;
  Epoch fa = -1;         // anomaly period; <0: keep config value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--out", args.out, "output path prefix");
  cmd->add_option("--seed", args.seed, "simulation seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--duration", args.duration, "simulated seconds");
  cmd->add_option("--warehouses", args.warehouses, "number of warehouses");
  cmd->add_option("--rr", args.rr, "reader detection rate");
  cmd->add_option("--or", args.or_rate, "adjacent-shelf cross-read rate");
  cmd->add_option("--fa", args.fa, "seconds between injected containment changes (0 = none)");
}

SupplyChainConfig build_config(const CommonArgs& args) {
  SupplyChainConfig cfg;
  if (!args.config_path.empty()) cfg = parse_config_text(read_file(args.config_path));
  if (args.seed_set || args.config_path.empty()) cfg.seed = args.seed;
  if (args.warehouses > 0) cfg.n_warehouses = args.warehouses;
  if (args.rr >= 0) cfg.warehouse.rr = args.rr;
  if (args.or_rate >= 0) cfg.warehouse.or_rate = args.or_rate;
  if (args.fa >= 0) cfg.anomaly_period = args.fa;
  return cfg;
}

void ensure_parent(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void write_output(RunManifest& manifest, const std::string& label, const std::string& path,
                  std::string_view content) {
  ensure_parent(path);
  write_file(path, content);
  manifest.outputs.push_back({label, path});
  std::printf("wrote %s\n", path.c_str());
}

void finish(RunManifest& manifest, const CommonArgs& args, const Stopwatch& watch) {
  manifest.seed = manifest.config.seed;
  manifest.wall_time_s = watch.seconds();
  std::string path = args.out + ".manifest.json";
  ensure_parent(path);
  write_file(path, manifest_json(manifest));
  std::printf("wrote %s\n", path.c_str());
}

// Calibrates on matched change-free traces: same deployment, no injected
// changes, fresh seeds.
Threshold calibrated_threshold(const SupplyChainConfig& cfg, Epoch duration, int n_samples) {
  SupplyChainConfig quiet = cfg;
  quiet.anomaly_period = 0;
  quiet.scripted_changes = false;
  std::vector<ObservationHistory> histories;
  TraceBundle first = generate(quiet, duration);
  histories.push_back(first.merged);
  for (int i = 1; i < n_samples; ++i) {
    quiet.seed = cfg.seed + 1000 + static_cast<uint64_t>(i);
    histories.push_back(generate(quiet, duration).merged);
  }
  return calibrate_threshold(first.rates, histories);
}

struct PipelineArgs {
  std::string mode = "cr";
  Epoch batch = 300;
  Epoch recent = 600;
  bool no_detect = false;
  double threshold = -1.0;  // <0: calibrate
  int calibrate_samples = 3;
};

void add_pipeline(CLI::App* cmd, PipelineArgs& args) {
  cmd->add_option("--mode", args.mode, "history retention: full|window|cr");
  cmd->add_option("--batch", args.batch, "batch period (s)");
  cmd->add_option("--recent", args.recent, "recent-history window (s)");
  cmd->add_flag("--no-detect", args.no_detect, "skip change detection");
  cmd->add_option("--threshold", args.threshold, "fixed detection threshold (default: calibrate)");
  cmd->add_option("--calibrate-samples", args.calibrate_samples,
                  "change-free traces used for calibration");
}

PipelineOptions pipeline_options(const PipelineArgs& args, const SupplyChainConfig& cfg,
                                 Epoch duration, RunManifest& manifest) {
  PipelineOptions opts;
  opts.mode = parse_mode(args.mode);
  opts.batch_period = args.batch;
  opts.recent_window = args.recent;
  opts.detect_changes = !args.no_detect;
  if (opts.detect_changes) {
    if (args.threshold >= 0) {
      opts.threshold.delta = args.threshold;
    } else {
      opts.threshold =
          calibrated_threshold(cfg, std::min<Epoch>(duration, 900), args.calibrate_samples);
      std::printf("calibrated threshold delta=%.5f\n", opts.threshold.delta);
    }
    manifest.threshold_delta = opts.threshold.delta;
    manifest.has_threshold = true;
  }
  return opts;
}

void print_report(const ScoreReport& r) {
  std::printf(
      "containment_error=%.3f%% location_error=%.3f%% end_containment=%.3f%% end_location=%.3f%%\n"
      "changes: precision=%.3f recall=%.3f f=%.3f | scored_pairs=%lld\n",
      r.containment_error, r.location_error, r.containment_error_end, r.location_error_end,
      r.changes.precision, r.changes.recall, r.changes.f,
      static_cast<long long>(r.scored_pairs));
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    if (next > pos) out.push_back(csv.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RFID stream inference toolkit"};
  app.require_subcommand(1);

  // generate ---------------------------------------------------------------
  CommonArgs gen_args;
  CLI::App* gen = app.add_subcommand("generate", "simulate a supply chain; write trace + truth");
  add_common(gen, gen_args);

  // infer ------------------------------------------------------------------
  CommonArgs infer_args;
  PipelineArgs infer_pipe;
  CLI::App* infer = app.add_subcommand("infer", "run the inference pipeline; write events + score");
  add_common(infer, infer_args);
  add_pipeline(infer, infer_pipe);

  // detect -----------------------------------------------------------------
  CommonArgs det_args;
  PipelineArgs det_pipe;
  CLI::App* det = app.add_subcommand("detect", "run inference and report containment changes");
  add_common(det, det_args);
  add_pipeline(det, det_pipe);

  // baseline ---------------------------------------------------------------
  CommonArgs base_args;
  CLI::App* base = app.add_subcommand("baseline", "run the smoothing baseline; write events + score");
  add_common(base, base_args);

  // distrib ----------------------------------------------------------------
  CommonArgs dist_args;
  std::string dist_strategy = "cr";
  PipelineArgs dist_pipe;
  CLI::App* dist = app.add_subcommand("distrib", "multi-site run under a state-transfer strategy");
  add_common(dist, dist_args);
  add_pipeline(dist, dist_pipe);
  dist->add_option("--strategy", dist_strategy, "centralized|none|cr");

  // monitor ----------------------------------------------------------------
  CommonArgs mon_args;
  PipelineArgs mon_pipe;
  std::string mon_query = "hybrid";
  double mon_temp = std::numeric_limits<double>::quiet_NaN();
  Epoch mon_exposure = 120;
  CLI::App* mon = app.add_subcommand("monitor", "exposure monitoring over inferred state");
  add_common(mon, mon_args);
  add_pipeline(mon, mon_pipe);
  mon->add_option("--query", mon_query, "hybrid (container-aware) | location (location-only)");
  mon->add_option("--threshold-temp", mon_temp, "exposure temperature (default 0 hybrid, 10 location)");
  mon->add_option("--exposure", mon_exposure, "seconds of exposure before an alert");

  // score ------------------------------------------------------------------
  CommonArgs score_args;
  PipelineArgs score_pipe;
  CLI::App* score_cmd = app.add_subcommand("score", "run inference and write a one-row score CSV");
  add_common(score_cmd, score_args);
  add_pipeline(score_cmd, score_pipe);

  // sweep ------------------------------------------------------------------
  CommonArgs sweep_args;
  std::string sweep_scenario = "sweep";
  std::string sweep_modes = "cr";
  std::vector<double> sweep_rr{0.8};
  std::vector<double> sweep_or{0.5};
  std::vector<Epoch> sweep_intervals{0};
  std::vector<Epoch> sweep_lengths{1500};
  std::vector<Epoch> sweep_windows{600};
  std::vector<uint64_t> sweep_seeds{1};
  int sweep_pallets = 4;
  double sweep_threshold = 50.0;
  bool sweep_detect = false;
  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs; one CSV row per point");
  add_common(sweep, sweep_args);
  sweep->add_option("--scenario", sweep_scenario, "label written into each row");
  sweep->add_option("--modes", sweep_modes, "comma list: full|window|cr|smurf");
  sweep->add_option("--rr-values", sweep_rr, "read rates")->delimiter(',');
  sweep->add_option("--or-values", sweep_or, "cross-read rates")->delimiter(',');
  sweep->add_option("--intervals", sweep_intervals, "change intervals (s), 0 = none")->delimiter(',');
  sweep->add_option("--lengths", sweep_lengths, "trace lengths (s)")->delimiter(',');
  sweep->add_option("--windows", sweep_windows, "recent-history windows (s)")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "seeds")->delimiter(',');
  sweep->add_option("--pallets", sweep_pallets, "pallets injected");
  sweep->add_option("--threshold", sweep_threshold, "fixed detection threshold");
  sweep->add_flag("--detect", sweep_detect, "enable change detection");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Stopwatch watch;
      SupplyChainConfig cfg = build_config(gen_args);
      TraceBundle bundle = generate(cfg, gen_args.duration);
      RunManifest manifest{.command = "generate", .config = cfg};
      write_output(manifest, "trace", gen_args.out + ".trace", trace_text(bundle.merged, bundle.tags));
      write_output(manifest, "truth", gen_args.out + ".truth", truth_text(bundle.truth, bundle.tags));
      write_output(manifest, "config", gen_args.out + ".config", config_text(cfg));
      std::printf("%zu readings, %d containers, %d objects, %zu hops, %zu injected changes\n",
                  bundle.merged.container_reads.size() + bundle.merged.object_reads.size(),
                  bundle.tags.n_containers(), bundle.tags.n_objects(), bundle.hops.size(),
                  bundle.anomalies.size());
      finish(manifest, gen_args, watch);
    } else if (infer->parsed() || det->parsed() || score_cmd->parsed()) {
      const CommonArgs& args = infer->parsed() ? infer_args : det->parsed() ? det_args : score_args;
      const PipelineArgs& pipe = infer->parsed() ? infer_pipe : det->parsed() ? det_pipe : score_pipe;
      Stopwatch watch;
      SupplyChainConfig cfg = build_config(args);
      TraceBundle bundle = generate(cfg, args.duration);
      RunManifest manifest{.command = infer->parsed() ? "infer" : det->parsed() ? "detect" : "score",
                           .config = cfg};
      PipelineOptions opts = pipeline_options(pipe, cfg, args.duration, manifest);
      SingleSiteRun run = drive_site(bundle, opts);
      if (infer->parsed()) {
        write_output(manifest, "events", args.out + ".events.csv",
                     events_csv(run.events, bundle.tags));
        write_output(manifest, "changes", args.out + ".changes.csv",
                     changes_csv(run.changes, bundle.tags));
      } else if (det->parsed()) {
        write_output(manifest, "changes", args.out + ".changes.csv",
                     changes_csv(run.changes, bundle.tags));
        std::printf("%zu truth changes, %zu reported\n", bundle.truth.change_points.size(),
                    run.changes.size());
      } else {
        SweepRow row;
        row.scenario = "score:" + pipe.mode;
        row.axes = {{"rr", cfg.warehouse.rr},
                    {"or", cfg.warehouse.or_rate},
                    {"seed", static_cast<double>(cfg.seed)}};
        row.report = run.report;
        write_output(manifest, "score", args.out + ".score.csv", sweep_csv({&row, 1}));
      }
      print_report(run.report);
      finish(manifest, args, watch);
    } else if (base->parsed()) {
      Stopwatch watch;
      SupplyChainConfig cfg = build_config(base_args);
      TraceBundle bundle = generate(cfg, base_args.duration);
      RunManifest manifest{.command = "baseline", .config = cfg};
      SingleSiteRun run = drive_site_smurf(bundle, {});
      write_output(manifest, "events", base_args.out + ".events.csv",
                   events_csv(run.events, bundle.tags));
      write_output(manifest, "changes", base_args.out + ".changes.csv",
                   changes_csv(run.changes, bundle.tags));
      print_report(run.report);
      finish(manifest, base_args, watch);
    } else if (dist->parsed()) {
      Stopwatch watch;
      SupplyChainConfig cfg = build_config(dist_args);
      if (cfg.n_warehouses < 2 && dist_args.warehouses == 0) cfg.n_warehouses = 2;
      auto strategy = parse_strategy(dist_strategy);
      if (!strategy) throw CLI::ValidationError("--strategy", "expected centralized|none|cr");
      TraceBundle bundle = generate(cfg, dist_args.duration);
      RunManifest manifest{.command = "distrib", .config = cfg};
      PipelineOptions opts = pipeline_options(dist_pipe, cfg, dist_args.duration, manifest);
      DistributedRun run = run_distributed(bundle, *strategy, opts);
      write_output(manifest, "ledger", dist_args.out + ".ledger.csv", ledger_csv(run.ledger));
      std::printf("strategy=%s bytes=%llu packets=%llu containment_error=%.3f%% (%d objects)\n",
                  strategy_name(run.strategy),
                  static_cast<unsigned long long>(run.ledger.total_bytes()),
                  static_cast<unsigned long long>(run.packets_sent), run.containment_error,
                  run.scored_objects);
      finish(manifest, dist_args, watch);
    } else if (mon->parsed()) {
      Stopwatch watch;
      SupplyChainConfig cfg = build_config(mon_args);
      TraceBundle bundle = generate(cfg, mon_args.duration);
      RunManifest manifest{.command = "monitor", .config = cfg};
      PipelineOptions opts = pipeline_options(mon_pipe, cfg, mon_args.duration, manifest);
      SingleSiteRun run = drive_site(bundle, opts);
      MonitorOptions mopts;
      if (mon_query == "hybrid") {
        mopts.query = MonitorQuery::HybridExposure;
        mopts.threshold_temp = std::isnan(mon_temp) ? 0.0 : mon_temp;
      } else if (mon_query == "location") {
        mopts.query = MonitorQuery::LocationExposure;
        mopts.threshold_temp = std::isnan(mon_temp) ? 10.0 : mon_temp;
      } else {
        throw CLI::ValidationError("--query", "expected hybrid|location");
      }
      mopts.exposure_duration = mon_exposure;
      MonitorRun monitor_run = run_monitor(bundle, run.events, 0, bundle.duration - 1, mopts);
      write_output(manifest, "alerts", mon_args.out + ".alerts.csv",
                   alerts_csv(monitor_run.alerts));
      std::printf("%zu alerts, %lld data-gap epochs\n", monitor_run.alerts.size(),
                  static_cast<long long>(monitor_run.data_gaps));
      finish(manifest, mon_args, watch);
    } else if (sweep->parsed()) {
      Stopwatch watch;
      SupplyChainConfig cfg = build_config(sweep_args);
      ExperimentSpec spec;
      spec.scenario = sweep_scenario;
      spec.modes = split_list(sweep_modes);
      spec.rr_values = sweep_rr;
      spec.or_values = sweep_or;
      spec.change_intervals = sweep_intervals;
      spec.trace_lengths = sweep_lengths;
      spec.recent_windows = sweep_windows;
      spec.seeds = sweep_seeds;
      spec.pallets = sweep_pallets;
      spec.detect_changes = sweep_detect;
      spec.threshold_delta = sweep_threshold;
      std::vector<SweepRow> rows = run_experiment(spec);
      RunManifest manifest{.command = "sweep", .config = cfg};
      write_output(manifest, "sweep", sweep_args.out + ".sweep.csv", sweep_csv(rows));
      int failed = 0;
      for (const SweepRow& r : rows) failed += r.failed ? 1 : 0;
      std::printf("%zu sweep points, %d failed\n", rows.size(), failed);
      finish(manifest, sweep_args, watch);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

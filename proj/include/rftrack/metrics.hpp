#pragma once

// Scoring: containment/location error rates over per-instant snapshots,
// change-report F-measure against ground truth, and ready-made experiment
// runners (single site, retention comparisons, change sweeps).

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rftrack/pipeline.hpp"
#include "rftrack/simulator.hpp"

namespace rft {

// Estimates for every object at one scoring instant (typically a batch end).
struct InstantSnapshot {
  Epoch t = 0;
  std::vector<int32_t> container_of;
  std::vector<LocationId> location_of;
};

struct ChangeScore {
  double precision = 1.0;
  double recall = 1.0;
  double f = 1.0;
  int matched = 0;
  int reported = 0;
  int actual = 0;
};

struct ScoreReport {
  // Percent of scored (object, instant) pairs with a wrong estimate. A pair
  // is scored only when the object is truly somewhere (not yet arrived /
  // already departed / removed instants are excluded). "none" matching
  // "none" counts as correct for containment.
  double containment_error = 0.0;
  double location_error = 0.0;
  // Same, over the final instant only.
  double containment_error_end = 0.0;
  double location_error_end = 0.0;
  ChangeScore changes;
  double wall_time_s = 0.0;
  uint64_t bytes_transferred = 0;
  int64_t scored_pairs = 0;
};

// Error rates over snapshots against the truth; change scores left at their
// defaults (fill via score_changes).
ScoreReport score_snapshots(std::span<const InstantSnapshot> snapshots, const GroundTruth& truth);

// Greedy one-to-one matching: a report matches an actual change of the same
// object within +-tolerance epochs (closest first). No reports and no actual
// changes scores F = 1; otherwise F = 2PR/(P+R) with empty-side conventions
// P=0 (spurious reports) / R=0 (missed changes).
ChangeScore score_changes(std::span<const ChangePointReport> reports,
                          std::span<const GroundTruth::Change> actual, Epoch tolerance);

// ---------------------------------------------------------------------------
// Experiment drivers.

struct SingleSiteRun {
  std::vector<InstantSnapshot> snapshots;  // one per batch end
  std::vector<StateEvent> events;
  std::vector<ChangePointReport> changes;
  std::vector<BatchResult> batches;
  ScoreReport report;  // errors + change F (tolerance = batch period) + wall
};

// Feed a generated trace through one SiteEngine batch-by-batch and score it.
SingleSiteRun drive_site(const TraceBundle& bundle, const PipelineOptions& opts);

// ---------------------------------------------------------------------------
// Sweeps: one row per (axis-point, seed), plus failure capture so a broken
// point doesn't abort the sweep.

struct SweepRow {
  std::string scenario;
  std::map<std::string, double> axes;  // e.g. {"rr": 0.7, "interval": 30}
  ScoreReport report;
  bool failed = false;
  std::string error;
};

struct ExperimentSpec {
  std::string scenario;  // stable | retention | changes | baseline
  std::vector<double> rr_values{0.8};
  std::vector<double> or_values{0.5};
  std::vector<Epoch> change_intervals{0};  // 0 = no anomalies
  std::vector<Epoch> trace_lengths{1500};
  std::vector<Epoch> recent_windows{600};
  std::vector<std::string> modes{"cr"};  // full | window | cr
  std::vector<uint64_t> seeds{1};
  int pallets = 4;
  int cases_per_pallet = 5;
  int items_per_case = 5;
  int n_shelves = 8;
  Epoch shelf_dwell = 1200;
  Epoch batch_period = 300;
  bool detect_changes = false;
  double threshold_delta = 50.0;
};

HistoryMode parse_mode(const std::string& name);  // throws on unknown name
std::vector<SweepRow> run_experiment(const ExperimentSpec& spec);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace rft

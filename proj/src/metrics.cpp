#include "rftrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rftrack/smurf.hpp"

namespace rft {

ScoreReport score_snapshots(std::span<const InstantSnapshot> snapshots, const GroundTruth& truth) {
  ScoreReport rep;
  int64_t pairs = 0, c_err = 0, l_err = 0;
  int64_t end_pairs = 0, end_c = 0, end_l = 0;
  const auto n_truth = truth.object_location.size();

  for (size_t si = 0; si < snapshots.size(); ++si) {
    const InstantSnapshot& s = snapshots[si];
    const size_t n = std::min(s.container_of.size(), n_truth);
    int64_t lp = 0, lc = 0, ll = 0;
    for (size_t o = 0; o < n; ++o) {
      LocationId truth_loc = truth.location_of(TagKind::Object, static_cast<TagIndex>(o), s.t);
      if (truth_loc == kNoLocation) continue;  // not on site: unscored
      ++lp;
      if (s.container_of[o] != truth.container_of(static_cast<TagIndex>(o), s.t)) ++lc;
      if (s.location_of[o] != truth_loc) ++ll;
    }
    pairs += lp;
    c_err += lc;
    l_err += ll;
    if (si + 1 == snapshots.size()) {
      end_pairs = lp;
      end_c = lc;
      end_l = ll;
    }
  }
  auto pct = [](int64_t bad, int64_t total) {
    return total > 0 ? 100.0 * static_cast<double>(bad) / static_cast<double>(total) : 0.0;
  };
  rep.scored_pairs = pairs;
  rep.containment_error = pct(c_err, pairs);
  rep.location_error = pct(l_err, pairs);
  rep.containment_error_end = pct(end_c, end_pairs);
  rep.location_error_end = pct(end_l, end_pairs);
  return rep;
}

ChangeScore score_changes(std::span<const ChangePointReport> reports,
                          std::span<const GroundTruth::Change> actual, Epoch tolerance) {
  ChangeScore s;
  s.reported = static_cast<int>(reports.size());
  s.actual = static_cast<int>(actual.size());

  // All feasible (report, actual) pairs, closest in time first; greedy
  // one-to-one selection. Ties break deterministically by index.
  struct Pair {
    Epoch dt;
    size_t r, a;
  };
  std::vector<Pair> feasible;
  for (size_t r = 0; r < reports.size(); ++r)
    for (size_t a = 0; a < actual.size(); ++a) {
      if (reports[r].object != actual[a].object) continue;
      Epoch dt = std::llabs(reports[r].t_change - actual[a].t);
      if (dt <= tolerance) feasible.push_back({dt, r, a});
    }
  std::sort(feasible.begin(), feasible.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.dt, x.r, x.a) < std::tie(y.dt, y.r, y.a);
  });
  std::vector<char> r_used(reports.size(), 0), a_used(actual.size(), 0);
  for (const Pair& p : feasible) {
    if (r_used[p.r] || a_used[p.a]) continue;
    r_used[p.r] = a_used[p.a] = 1;
    ++s.matched;
  }

  s.precision = s.reported > 0 ? static_cast<double>(s.matched) / s.reported : 1.0;
  s.recall = s.actual > 0 ? static_cast<double>(s.matched) / s.actual : 1.0;
  s.f = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                       : 0.0;
  return s;
}

SingleSiteRun drive_site(const TraceBundle& bundle, const PipelineOptions& opts) {
  SingleSiteRun run;
  SiteEngine engine(bundle.rates, bundle.tags.n_containers(), bundle.tags.n_objects(), opts);

  const auto& cont = bundle.merged.container_reads;
  const auto& obj = bundle.merged.object_reads;
  size_t ci = 0, oi = 0;
  for (Epoch b = 0; b < bundle.duration; b += opts.batch_period) {
    const Epoch b_end = std::min(b + opts.batch_period, bundle.duration) - 1;
    size_t c0 = ci, o0 = oi;
    while (ci < cont.size() && cont[ci].t <= b_end) ++ci;
    while (oi < obj.size() && obj[oi].t <= b_end) ++oi;
    engine.ingest(std::span(cont).subspan(c0, ci - c0), std::span(obj).subspan(o0, oi - o0));
    engine.process_batch(b, b_end);

    InstantSnapshot snap;
    snap.t = b_end;
    snap.container_of.assign(engine.containers().begin(), engine.containers().end());
    snap.location_of.assign(engine.locations().begin(), engine.locations().end());
    run.snapshots.push_back(std::move(snap));
  }

  run.events = engine.events();
  run.changes = engine.all_changes();
  run.batches = engine.batches();
  run.report = score_snapshots(run.snapshots, bundle.truth);
  run.report.changes = score_changes(run.changes, bundle.truth.change_points, opts.batch_period);
  for (const BatchResult& b : run.batches) run.report.wall_time_s += b.wall_s;
  return run;
}

HistoryMode parse_mode(const std::string& name) {
  if (name == "full") return HistoryMode::Full;
  if (name == "window") return HistoryMode::Window;
  if (name == "cr" || name == "critical") return HistoryMode::CriticalRegion;
  throw std::invalid_argument("unknown retention mode: " + name);
}

std::vector<SweepRow> run_experiment(const ExperimentSpec& spec) {
  std::vector<SweepRow> rows;
  for (const std::string& mode : spec.modes)
    for (double rr : spec.rr_values)
      for (double orr : spec.or_values)
        for (Epoch interval : spec.change_intervals)
          for (Epoch length : spec.trace_lengths)
            for (Epoch window : spec.recent_windows)
              for (uint64_t seed : spec.seeds) {
                SweepRow row;
                row.scenario = spec.scenario + ":" + mode;
                row.axes = {{"rr", rr},
                            {"or", orr},
                            {"interval", static_cast<double>(interval)},
                            {"length", static_cast<double>(length)},
                            {"window", static_cast<double>(window)},
                            {"seed", static_cast<double>(seed)}};
                try {
                  SupplyChainConfig cfg;
                  cfg.seed = seed;
                  cfg.max_pallets = spec.pallets;
                  cfg.cases_per_pallet = spec.cases_per_pallet;
                  cfg.items_per_case = spec.items_per_case;
                  cfg.anomaly_period = interval;
                  cfg.warehouse.n_shelves = spec.n_shelves;
                  cfg.warehouse.rr = rr;
                  cfg.warehouse.or_rate = orr;
                  cfg.warehouse.shelf_dwell = spec.shelf_dwell;
                  TraceBundle bundle = generate(cfg, length);

                  if (mode == "smurf") {
                    SmurfOptions sopts;
                    sopts.batch_period = spec.batch_period;
                    row.report = drive_site_smurf(bundle, sopts).report;
                  } else {
                    PipelineOptions opts;
                    opts.mode = parse_mode(mode);
                    opts.batch_period = spec.batch_period;
                    opts.recent_window = window;
                    opts.detect_changes = spec.detect_changes;
                    opts.threshold.delta = spec.threshold_delta;
                    row.report = drive_site(bundle, opts).report;
                  }
                } catch (const std::exception& e) {
                  row.failed = true;
                  row.error = e.what();
                }
                rows.push_back(std::move(row));
              }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::set<std::string> keys;
  for (const SweepRow& r : rows)
    for (const auto& [k, v] : r.axes) keys.insert(k);

  // Wall time is deliberately absent: rows must be bit-identical across
  // reruns of the same seed (timing lives in the run manifest instead).
  std::ostringstream out;
  out << "scenario";
  for (const std::string& k : keys) out << ',' << k;
  out << ",containment_error,containment_error_end,location_error,location_error_end"
      << ",precision,recall,f_measure,bytes_transferred,scored_pairs,failed,error\n";
  for (const SweepRow& r : rows) {
    out << r.scenario;
    for (const std::string& k : keys) {
      out << ',';
      auto it = r.axes.find(k);
      if (it != r.axes.end()) out << it->second;
    }
    const ScoreReport& m = r.report;
    out << ',' << m.containment_error << ',' << m.containment_error_end << ',' << m.location_error
        << ',' << m.location_error_end << ',' << m.changes.precision << ',' << m.changes.recall
        << ',' << m.changes.f << ',' << m.bytes_transferred << ',' << m.scored_pairs << ','
        << (r.failed ? 1 : 0) << ',' << r.error << '\n';
  }
  return out.str();
}

}  // namespace rft

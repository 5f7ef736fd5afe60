#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <rftrack/metrics.hpp>
#include <rftrack/pipeline.hpp>
#include <rftrack/simulator.hpp>

using namespace rft;

namespace {

// One shelf per case by default: cases co-located on a shelf read identically
// at steady state and only their arrival evidence tells them apart, so packing
// them together tests the entry log, not the tracker.
TraceBundle small_flow(uint64_t seed, double rr, Epoch duration, int pallets, bool scripted = false,
                       int shelves = 0) {
  SupplyChainConfig cfg;
  cfg.seed = seed;
  cfg.max_pallets = pallets;
  cfg.cases_per_pallet = 5;
  cfg.items_per_case = 5;
  cfg.scripted_changes = scripted;
  cfg.warehouse.n_shelves = shelves > 0 ? shelves : pallets * cfg.cases_per_pallet;
  cfg.warehouse.rr = rr;
  cfg.warehouse.or_rate = 0.5;
  cfg.warehouse.shelf_dwell = duration - 20;  // items stay shelved to the end
  return generate(cfg, duration);
}

// Replay an event log: state of every object at instant t.
struct Replayed {
  std::vector<int32_t> container_of;
  std::vector<LocationId> location_of;
};
Replayed replay(std::span<const StateEvent> events, int n_objects, Epoch t) {
  Replayed r;
  r.container_of.assign(static_cast<size_t>(n_objects), kNoContainer);
  r.location_of.assign(static_cast<size_t>(n_objects), kNoLocation);
  std::vector<StateEvent> sorted(events.begin(), events.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const StateEvent& a, const StateEvent& b) { return a.t < b.t; });
  for (const StateEvent& e : sorted) {
    if (e.t > t) break;
    r.container_of[static_cast<size_t>(e.object)] = e.container;
    r.location_of[static_cast<size_t>(e.object)] = e.location;
  }
  return r;
}

}  // namespace

TEST_CASE("stable flow: batched EM tracks containment and location accurately") {
  TraceBundle bundle = small_flow(7, 0.8, 1500, 4);
  PipelineOptions opts;
  opts.mode = HistoryMode::Full;
  opts.detect_changes = false;

  SingleSiteRun run = drive_site(bundle, opts);
  REQUIRE(run.snapshots.size() == 5);
  CHECK(run.report.scored_pairs >= 400);  // 100 items mostly resident

  std::cerr << "[pipeline quality rr=0.8] containment=" << run.report.containment_error
            << "% location=" << run.report.location_error
            << "% pairs=" << run.report.scored_pairs << "\n";
  CHECK(run.report.containment_error <= 5.0);
  CHECK(run.report.location_error <= 2.0);
  CHECK(run.report.containment_error_end <= 5.0);

  SUBCASE("the driver is deterministic") {
    SingleSiteRun again = drive_site(bundle, opts);
    CHECK(again.events == run.events);
    for (size_t i = 0; i < run.snapshots.size(); ++i) {
      CHECK(again.snapshots[i].container_of == run.snapshots[i].container_of);
      CHECK(again.snapshots[i].location_of == run.snapshots[i].location_of);
    }
  }

  SUBCASE("event replay reproduces every snapshot") {
    for (const InstantSnapshot& snap : run.snapshots) {
      Replayed r = replay(run.events, bundle.tags.n_objects(), snap.t);
      CHECK(r.container_of == snap.container_of);
      CHECK(r.location_of == snap.location_of);
    }
  }

  SUBCASE("per-object events are time-ordered deltas") {
    std::map<int32_t, std::vector<StateEvent>> by_object;
    for (const StateEvent& e : run.events) by_object[e.object].push_back(e);
    for (auto& [o, evs] : by_object) {
      for (size_t i = 1; i < evs.size(); ++i) {
        CHECK(evs[i - 1].t <= evs[i].t);
        bool differs = evs[i - 1].location != evs[i].location ||
                       evs[i - 1].container != evs[i].container;
        CHECK(differs);
      }
    }
  }
}

TEST_CASE("retention modes: critical-region keeps accuracy with a bounded buffer") {
  TraceBundle bundle = small_flow(11, 0.8, 1800, 3);

  PipelineOptions full;
  full.mode = HistoryMode::Full;
  full.detect_changes = false;
  PipelineOptions cr = full;
  cr.mode = HistoryMode::CriticalRegion;
  PipelineOptions window = full;
  window.mode = HistoryMode::Window;

  SingleSiteRun rf = drive_site(bundle, full);
  SingleSiteRun rc = drive_site(bundle, cr);
  SingleSiteRun rw = drive_site(bundle, window);

  std::cerr << "[retention] full=" << rf.report.containment_error
            << "% cr=" << rc.report.containment_error << "% window=" << rw.report.containment_error
            << "% | buffers full=" << rf.batches.back().buffer_readings
            << " cr=" << rc.batches.back().buffer_readings
            << " window=" << rw.batches.back().buffer_readings << "\n";

  // Full history accumulates; truncated modes stay bounded.
  CHECK(rf.batches.back().buffer_readings > rf.batches.front().buffer_readings);
  CHECK(rc.batches.back().buffer_readings < rf.batches.back().buffer_readings);
  CHECK(rw.batches.back().buffer_readings < rf.batches.back().buffer_readings);

  // Truncation must not hurt on a stable trace.
  CHECK(rc.report.containment_error <= rf.report.containment_error + 1.0);
  CHECK(rc.report.location_error <= rf.report.location_error + 1.0);
}

TEST_CASE("scripted moves are detected end to end and dated near the true instant") {
  TraceBundle bundle = small_flow(23, 0.85, 1800, 4, /*scripted=*/true);
  REQUIRE(bundle.truth.change_points.size() == 4);

  // Calibrate the detector on change-free traces with the same reader timing:
  // the null distribution of the split statistic depends on the scan cycle, so
  // matched traces give a far tighter (and still safe) threshold than
  // generic synthetic ones.
  std::vector<ObservationHistory> change_free;
  for (uint64_t s : {101, 102, 103})
    change_free.push_back(small_flow(s, 0.85, 900, 4).merged);

  PipelineOptions opts;
  opts.mode = HistoryMode::CriticalRegion;
  opts.detect_changes = true;
  opts.threshold = calibrate_threshold(bundle.rates, change_free);
  REQUIRE(opts.threshold.delta > 0.0);

  SingleSiteRun run = drive_site(bundle, opts);
  std::cerr << "[detect] threshold=" << opts.threshold.delta << " reported=" << run.changes.size()
            << " f=" << run.report.changes.f << " precision=" << run.report.changes.precision
            << " recall=" << run.report.changes.recall << "\n";

  CHECK(run.report.changes.recall >= 0.5);
  CHECK(run.report.changes.f >= 0.5);

  // The moved objects' containment events carry the new container.
  for (const auto& ch : bundle.truth.change_points) {
    if (ch.new_container == kNoContainer) continue;  // removal: no new case
    bool seen = false;
    for (const StateEvent& e : run.events)
      if (e.object == ch.object && e.container == ch.new_container) seen = true;
    CHECK_MESSAGE(seen, "object ", ch.object, " never reported in case ", ch.new_container);
  }
}

TEST_CASE("engine-level migration: collapse, admit, re-estimate") {
  // Global rate table: 8 locations read their own spot at 0.8.
  ReadRateTable rates(8, ReadRateTable::kClampEps);
  for (int a = 0; a < 8; ++a) rates.set(a, a, 0.8);

  PipelineOptions opts;
  opts.mode = HistoryMode::Full;
  opts.detect_changes = false;

  // Site A: object 0 co-located with case 0 at location 1 for 100 epochs.
  SiteEngine a(rates, 2, 1, opts);
  std::vector<Reading> ca, oa;
  for (Epoch t = 0; t < 100; ++t) {
    ca.push_back({t, 1, 0});
    oa.push_back({t, 1, 0});
  }
  a.ingest(ca, oa);
  a.process_batch(0, 99);
  REQUIRE(a.container_of(0) == 0);

  CollapsedObjectState packed = a.collapse_object(0);
  REQUIRE_FALSE(packed.weights.empty());
  double w_c0 = 0.0;
  for (auto& [c, w] : packed.weights)
    if (c == 0) w_c0 = w;
  // Log-scale evidence: with the posterior pinned at location 1, each of the
  // 100 object reads contributes ln(0.8) to the co-location weight.
  CHECK(w_c0 == doctest::Approx(100.0 * std::log(0.8)).epsilon(0.01));
  std::vector<Reading> shipped = a.extract_object_readings(0);
  REQUIRE(shipped.size() == 100);

  // Site B: admit, then observe strong fresh co-location with case 1 at
  // location 5. New evidence outweighs the carried weight eventually.
  SiteEngine b(rates, 2, 1, opts);
  b.admit(packed, shipped);
  std::vector<Reading> cb, ob;
  for (Epoch t = 100; t < 500; ++t) {
    cb.push_back({t, 5, 1});
    ob.push_back({t, 5, 0});
  }
  b.ingest(cb, ob);
  b.process_batch(100, 499);
  CHECK(b.container_of(0) == 1);

  // Collapsing at B chains: both the carried candidate and the new one are
  // in the outgoing weights, and the carried mass was preserved additively.
  CollapsedObjectState out = b.collapse_object(0);
  bool has0 = false, has1 = false;
  for (auto& [c, w] : out.weights) {
    has0 |= (c == 0);
    has1 |= (c == 1);
  }
  CHECK(has0);
  CHECK(has1);

  SUBCASE("admitting the same packet twice doubles nothing visible: idempotence is the caller's job") {
    // The engine itself is additive by contract; the distributed layer
    // deduplicates packet ids. Verify additivity here.
    SiteEngine c(rates, 2, 1, opts);
    c.admit(packed, shipped);
    c.admit(packed, {});
    // carried weight for case 0 doubled (readings deduplicate in the buffer)
    CollapsedObjectState cc = c.collapse_object(0);
    double w2 = 0.0;
    for (auto& [cid, w] : cc.weights)
      if (cid == 0) w2 = w;
    CHECK(w2 == doctest::Approx(2.0 * w_c0));
  }
}

TEST_CASE("retire purges an object's readings and reports it gone") {
  ReadRateTable rates(4, ReadRateTable::kClampEps);
  for (int a = 0; a < 4; ++a) rates.set(a, a, 0.9);
  PipelineOptions opts;
  opts.mode = HistoryMode::Full;
  opts.detect_changes = false;

  SiteEngine e(rates, 1, 1, opts);
  std::vector<Reading> cr, orr;
  for (Epoch t = 0; t < 50; ++t) {
    cr.push_back({t, 2, 0});
    orr.push_back({t, 2, 0});
  }
  e.ingest(cr, orr);
  e.process_batch(0, 49);
  REQUIRE(e.container_of(0) == 0);
  REQUIRE(e.location_of(0) == 2);

  e.retire(0, 50);
  CHECK(e.extract_object_readings(0).empty());
  CHECK(e.container_of(0) == kNoContainer);
  CHECK(e.location_of(0) == kNoLocation);
  CHECK(e.events().back().container == kNoContainer);

  // Later batches re-infer nothing for it.
  e.process_batch(50, 99);
  CHECK(e.container_of(0) == kNoContainer);
}

TEST_CASE("silent objects go absent after the timeout but keep their containment") {
  ReadRateTable rates(4, ReadRateTable::kClampEps);
  for (int a = 0; a < 4; ++a) rates.set(a, a, 0.9);
  PipelineOptions opts;
  opts.mode = HistoryMode::Full;
  opts.detect_changes = false;
  opts.absence_timeout = 50;

  SiteEngine e(rates, 1, 1, opts);
  std::vector<Reading> cr, orr;
  for (Epoch t = 0; t < 100; ++t) {
    cr.push_back({t, 1, 0});
    orr.push_back({t, 1, 0});
  }
  e.ingest(cr, orr);
  e.process_batch(0, 99);
  REQUIRE(e.location_of(0) == 1);

  e.process_batch(100, 199);  // no new readings: 100 epochs of silence
  CHECK(e.location_of(0) == kNoLocation);
  CHECK(e.container_of(0) == 0);  // containment estimate survives absence
}

TEST_CASE("batches must advance in time") {
  ReadRateTable rates(2, ReadRateTable::kClampEps);
  PipelineOptions opts;
  SiteEngine e(rates, 1, 1, opts);
  e.process_batch(0, 99);
  CHECK_THROWS_AS(e.process_batch(0, 99), std::invalid_argument);
  CHECK_THROWS_AS(e.process_batch(50, 40), std::invalid_argument);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <iostream>
#include <random>
#include <rftrack/metrics.hpp>
#include <rftrack/monitor.hpp>
#include <rftrack/pipeline.hpp>
#include <rftrack/simulator.hpp>

using namespace rft;

namespace {

ObjectQueryState fresh(uint32_t tag) {
  ObjectQueryState st;
  st.tag_id = tag;
  return st;
}

TemperatureStream two_zone(int n_locations, int cold_until) {
  TemperatureStream s(n_locations);
  for (LocationId l = 0; l < n_locations; ++l)
    s.set_baseline(l, l < cold_until ? -18.0 : 20.0);
  return s;
}

}  // namespace

TEST_CASE("automaton: exposure accumulates, resets on contiguity breaks, fires once") {
  MonitorOptions opts;
  opts.exposure_duration = 5;
  TemperatureStream temps = two_zone(4, 2);  // locations 0,1 cold; 2,3 warm
  ObjectQueryState st = fresh(42);

  SUBCASE("item inside a freezer container never alerts") {
    for (Epoch t = 0; t < 50; ++t) {
      StepResult r = step(st, t, 3, 7, /*container_is_freezer=*/true, temps, opts);
      CHECK_FALSE(r.alert.has_value());
    }
    CHECK(st.state == AutomatonState::Idle);
  }

  SUBCASE("uncontained item somewhere warm alerts with the full sequence") {
    std::optional<Alert> got;
    for (Epoch t = 10; t < 30; ++t) {
      StepResult r = step(st, t, 2, kNoContainer, false, temps, opts);
      if (r.alert.has_value()) {
        CHECK_FALSE(got.has_value());  // exactly one alert per episode
        got = r.alert;
      }
    }
    REQUIRE(got.has_value());
    CHECK(got->tag_id == 42);
    CHECK(got->t_alert == 14);  // 5th consecutive exposed epoch
    REQUIRE(got->temps.size() == 5);
    for (float v : got->temps) CHECK(v == doctest::Approx(20.0));
    CHECK(st.state == AutomatonState::Exposed);  // still exposed afterwards
  }

  SUBCASE("a single epoch back in the freezer resets the clock") {
    for (Epoch t = 0; t < 4; ++t)
      CHECK_FALSE(step(st, t, 2, kNoContainer, false, temps, opts).alert.has_value());
    CHECK_FALSE(step(st, 4, 7, 3, true, temps, opts).alert.has_value());  // re-boxed
    CHECK(st.state == AutomatonState::Idle);
    CHECK(st.temps.empty());
    for (Epoch t = 5; t < 9; ++t)
      CHECK_FALSE(step(st, t, 2, kNoContainer, false, temps, opts).alert.has_value());
    // 4 + 4 epochs, never 5 in a row: no alert either side of the break.
  }

  SUBCASE("cold location keeps the hybrid condition false") {
    for (Epoch t = 0; t < 20; ++t)
      CHECK_FALSE(step(st, t, 0, kNoContainer, false, temps, opts).alert.has_value());
    CHECK(st.state == AutomatonState::Idle);
  }

  SUBCASE("missing sensor reading: condition false and a data gap") {
    temps.mark_missing(2, 3);
    int gaps = 0;
    std::vector<Epoch> fired;
    std::optional<Alert> last;
    for (Epoch t = 0; t < 10; ++t) {
      StepResult r = step(st, t, 2, kNoContainer, false, temps, opts);
      gaps += r.data_gap ? 1 : 0;
      if (r.alert.has_value()) {
        fired.push_back(t);
        last = r.alert;
      }
    }
    CHECK(gaps == 1);
    // The gap at t=3 breaks the first run at length 3; the restarted run
    // spans t=4..8, crossing the 5-epoch duration at t=8 — one alert there.
    REQUIRE(fired.size() == 1);
    CHECK(fired[0] == 8);
    CHECK(last->t_alert == 8);
    CHECK(last->temps.size() == 5);
    // The episode continues past its alert without re-firing.
    StepResult r = step(st, 10, 2, kNoContainer, false, temps, opts);
    CHECK_FALSE(r.alert.has_value());
    CHECK(st.state == AutomatonState::Exposed);
    CHECK(st.exposure_start == 4);
  }

  SUBCASE("location-only query ignores the container") {
    MonitorOptions q2 = opts;
    q2.query = MonitorQuery::LocationExposure;
    q2.threshold_temp = 10.0;
    std::optional<Alert> got;
    for (Epoch t = 0; t < 10; ++t) {
      StepResult r = step(st, t, 3, 7, /*container_is_freezer=*/true, temps, q2);
      if (r.alert.has_value()) got = r.alert;
    }
    CHECK(got.has_value());  // frozen container, warm shelf: location query fires
  }

  SUBCASE("unknown location: condition false, no data gap") {
    StepResult r = step(st, 0, kNoLocation, kNoContainer, false, temps, opts);
    CHECK_FALSE(r.data_gap);
    CHECK(st.state == AutomatonState::Idle);
  }
}

TEST_CASE("state images round-trip byte-for-byte") {
  ObjectQueryState st = fresh(1000123);
  st.state = AutomatonState::Exposed;
  st.exposure_start = 777;
  st.temps = {20.0f, 19.5f, -3.25f};

  std::vector<uint8_t> img = st.image();
  CHECK(img.size() == 17 + 4 * 3);
  ObjectQueryState back = ObjectQueryState::from_image(img);
  CHECK(back.tag_id == st.tag_id);
  CHECK(back.state == st.state);
  CHECK(back.exposure_start == st.exposure_start);
  CHECK(back.temps == st.temps);

  SUBCASE("malformed images throw") {
    std::vector<uint8_t> bad = img;
    bad.pop_back();
    CHECK_THROWS(ObjectQueryState::from_image(bad));
    bad = img;
    bad[4] = 9;  // invalid automaton state byte
    CHECK_THROWS(ObjectQueryState::from_image(bad));
  }
}

TEST_CASE("centroid sharing: distances, oracle choice, lossless round-trip") {
  SUBCASE("two states differing in one byte have distance 1") {
    ObjectQueryState a = fresh(5), b = fresh(5);
    a.temps = {20.0f};
    b.temps = {20.0f};
    b.state = AutomatonState::Exposed;  // single differing byte
    CHECK(byte_distance(a.image(), b.image()) == 1);

    SharedStateBlock block = share(std::vector<ObjectQueryState>{a, b});
    REQUIRE(block.deltas.size() == 2);
    size_t delta_bytes = 0;
    for (const auto& d : block.deltas)
      for (const auto& r : d.runs) delta_bytes += r.bytes.size();
    CHECK(delta_bytes == 1);
  }

  SUBCASE("identical states: one image plus zero-length deltas") {
    std::vector<ObjectQueryState> states;
    for (int i = 0; i < 6; ++i) {
      ObjectQueryState st = fresh(100);  // same id so images are identical
      st.temps = {1.0f, 2.0f};
      states.push_back(st);
    }
    SharedStateBlock block = share(states);
    CHECK(block.deltas.size() == 6);
    for (const auto& d : block.deltas) CHECK(d.runs.empty());
    std::vector<ObjectQueryState> back = unshare(block);
    REQUIRE(back.size() == 6);
    for (const auto& st : back) CHECK(st.image() == states[0].image());
  }

  SUBCASE("chosen centroid matches the exhaustive-minimization oracle") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 30; ++rep) {
      std::vector<ObjectQueryState> states;
      int n = 3 + static_cast<int>(rng() % 6);
      for (int i = 0; i < n; ++i) {
        ObjectQueryState st = fresh(static_cast<uint32_t>(1000000 + i));
        st.state = (rng() & 1) ? AutomatonState::Exposed : AutomatonState::Idle;
        st.exposure_start = static_cast<Epoch>(rng() % 50);
        int nt = static_cast<int>(rng() % 5);
        for (int k = 0; k < nt; ++k) st.temps.push_back(static_cast<float>(rng() % 40) - 18.0f);
        states.push_back(st);
      }
      SharedStateBlock block = share(states);

      // Oracle: try every candidate, pick min total distance, ties smaller id.
      int64_t best_total = -1;
      std::vector<uint8_t> best_img;
      uint32_t best_tag = 0;
      for (const auto& cand : states) {
        int64_t total = 0;
        for (const auto& other : states) total += byte_distance(cand.image(), other.image());
        if (best_total < 0 || total < best_total ||
            (total == best_total && cand.tag_id < best_tag)) {
          best_total = total;
          best_img = cand.image();
          best_tag = cand.tag_id;
        }
      }
      CHECK(block.centroid == best_img);
    }
  }

  SUBCASE("share/unshare is lossless on random states") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<ObjectQueryState> states;
      int n = 1 + static_cast<int>(rng() % 8);
      for (int i = 0; i < n; ++i) {
        ObjectQueryState st = fresh(static_cast<uint32_t>(rng() % 1000000));
        st.state = (rng() & 1) ? AutomatonState::Exposed : AutomatonState::Idle;
        st.exposure_start = static_cast<Epoch>(rng() % 10000);
        int nt = static_cast<int>(rng() % 12);
        for (int k = 0; k < nt; ++k)
          st.temps.push_back(static_cast<float>(static_cast<double>(rng() % 1000) / 17.0));
        states.push_back(st);
      }
      std::vector<ObjectQueryState> back = unshare(share(states));
      REQUIRE(back.size() == states.size());
      for (size_t i = 0; i < states.size(); ++i)
        CHECK(back[i].image() == states[i].image());
    }
  }

  SUBCASE("similar states compress below 0.35x raw size") {
    // Shared long exposure history, tiny per-object differences.
    std::vector<ObjectQueryState> states;
    size_t raw = 0;
    for (int i = 0; i < 20; ++i) {
      ObjectQueryState st = fresh(static_cast<uint32_t>(1000000 + i));
      st.state = AutomatonState::Exposed;
      st.exposure_start = 500;
      for (int k = 0; k < 40; ++k) st.temps.push_back(20.0f);
      st.temps.push_back(static_cast<float>(i));  // per-object suffix
      raw += st.image().size();
      states.push_back(st);
    }
    std::vector<uint8_t> encoded = encode_block(share(states));
    std::cerr << "[share] raw=" << raw << "B encoded=" << encoded.size() << "B ratio="
              << static_cast<double>(encoded.size()) / static_cast<double>(raw) << "\n";
    CHECK(static_cast<double>(encoded.size()) < 0.35 * static_cast<double>(raw));
  }

  SUBCASE("block wire format round-trips and rejects corruption") {
    ObjectQueryState a = fresh(11), b = fresh(12);
    a.temps = {1.0f};
    b.temps = {2.0f, 3.0f};
    SharedStateBlock block = share(std::vector<ObjectQueryState>{a, b});
    std::vector<uint8_t> bytes = encode_block(block);
    SharedStateBlock back = decode_block(bytes);
    CHECK(back.centroid == block.centroid);
    REQUIRE(back.deltas.size() == block.deltas.size());
    std::vector<ObjectQueryState> states = unshare(back);
    CHECK(states[0].image() == a.image());
    CHECK(states[1].image() == b.image());

    std::vector<uint8_t> truncated(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS(decode_block(truncated));

    // A delta pointing outside its target names the object in the error.
    SharedStateBlock corrupt = block;
    corrupt.deltas[1].runs.push_back({10000, {0xff}});
    try {
      unshare(corrupt);
      FAIL("corrupt delta did not throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("12") != std::string::npos);
    }
  }

  SUBCASE("empty input: empty block") {
    SharedStateBlock block = share({});
    CHECK(block.centroid.empty());
    CHECK(block.deltas.empty());
    CHECK(unshare(block).empty());
  }
}

TEST_CASE("end to end: inferred alerts track truth alerts, location query is easier") {
  SupplyChainConfig cfg;
  cfg.seed = 31;
  cfg.max_pallets = 4;
  cfg.cases_per_pallet = 5;
  cfg.items_per_case = 5;
  cfg.scripted_changes = true;
  cfg.freezer_case_fraction = 0.45;
  cfg.warehouse.freezer_shelves = 8;
  cfg.warehouse.n_shelves = 20;
  cfg.warehouse.rr = 0.8;
  cfg.warehouse.or_rate = 0.5;
  cfg.warehouse.shelf_dwell = 1780;
  TraceBundle bundle = generate(cfg, 1800);

  // The script should have produced at least one frozen-to-ambient move.
  int exposures = 0;
  for (const auto& ch : bundle.truth.change_points)
    if (ch.new_container != kNoContainer &&
        bundle.container_is_freezer[static_cast<size_t>(ch.old_container)] &&
        !bundle.container_is_freezer[static_cast<size_t>(ch.new_container)])
      ++exposures;
  REQUIRE(exposures >= 1);

  MonitorOptions q1;
  q1.exposure_duration = 120;
  MonitorOptions q2 = q1;
  q2.query = MonitorQuery::LocationExposure;
  q2.threshold_temp = 10.0;

  // Ground-truth automaton runs.
  std::vector<StateEvent> truth_evts = truth_events(bundle);
  MonitorRun truth_q1 = run_monitor(bundle, truth_evts, 0, bundle.duration - 1, q1);
  MonitorRun truth_q2 = run_monitor(bundle, truth_evts, 0, bundle.duration - 1, q2);
  REQUIRE_FALSE(truth_q1.alerts.empty());
  CHECK(truth_q1.data_gaps == 0);

  // Tracked-state runs (with change detection so containment flips are seen).
  std::vector<ObservationHistory> change_free;
  for (uint64_t s : {301, 302}) {
    SupplyChainConfig c2 = cfg;
    c2.seed = s;
    c2.scripted_changes = false;
    c2.warehouse.shelf_dwell = 880;
    change_free.push_back(generate(c2, 900).merged);
  }
  PipelineOptions popts;
  popts.mode = HistoryMode::CriticalRegion;
  popts.detect_changes = true;
  popts.threshold = calibrate_threshold(bundle.rates, change_free);
  SingleSiteRun run = drive_site(bundle, popts);

  MonitorRun est_q1 = run_monitor(bundle, run.events, 0, bundle.duration - 1, q1);
  MonitorRun est_q2 = run_monitor(bundle, run.events, 0, bundle.duration - 1, q2);

  ChangeScore f1 = score_alerts(est_q1.alerts, truth_q1.alerts, 60);
  ChangeScore f2 = score_alerts(est_q2.alerts, truth_q2.alerts, 60);
  std::cerr << "[monitor] q1: truth=" << truth_q1.alerts.size() << " est=" << est_q1.alerts.size()
            << " f=" << f1.f << " | q2: truth=" << truth_q2.alerts.size()
            << " est=" << est_q2.alerts.size() << " f=" << f2.f << "\n";

  CHECK(f1.f >= 0.5);
  CHECK(f2.f >= f1.f);  // the location-only query never does worse here

  SUBCASE("alert CSV lists one row per alert") {
    std::string csv = alerts_csv(truth_q1.alerts);
    size_t rows = static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(rows == truth_q1.alerts.size() + 1);
    CHECK(csv.rfind("tag_id,t_alert,n_readings\n", 0) == 0);
  }
}

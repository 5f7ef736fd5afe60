#include "rftrack/simulator.hpp"

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <limits>
#include <random>
#include <stdexcept>
#include <tuple>
#include <unordered_set>
#include <vector>

namespace rft {

namespace {

constexpr Epoch kForever = std::numeric_limits<Epoch>::max();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Per-reader interrogation phase: a shelf reader fires once per period and
// inventories every tag in range in that same epoch, the way a real portal
// antenna does. Keying the phase on the reader (not the tag) keeps co-located
// tags co-read, which is what downstream co-location statistics rely on.
Epoch scan_phase(std::uint64_t key, Epoch period) {
  return static_cast<Epoch>(splitmix64(key) % static_cast<std::uint64_t>(period));
}

struct CaseHop {
  int from_site, to_site;
  Epoch exit_epoch;    // last epoch at the origin's exit door
  Epoch arrive_epoch;  // first epoch at the destination's entry door
};

void push_entry(std::vector<TimelineEntry>& tl, Epoch from, int32_t value) {
  if (!tl.empty() && tl.back().value == value) return;
  if (!tl.empty() && tl.back().from == from) {
    tl.back().value = value;
    return;
  }
  tl.push_back({from, value});
}

void validate(const SupplyChainConfig& cfg, Epoch duration) {
  const WarehouseConfig& w = cfg.warehouse;
  auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
  if (duration < 1) fail("duration must be positive");
  if (cfg.n_warehouses < 1) fail("need at least one warehouse");
  if (w.n_shelves < 1) fail("need at least one shelf");
  if (w.door_dwell < 1 || w.belt_time < 1 || w.exit_dwell < 1 || w.shelf_dwell < 1)
    fail("dwell times must be positive");
  if (w.shelf_period < 1 || w.mobile_seconds_per_shelf < 1) fail("scan periods must be positive");
  if (cfg.pallet_period < 1) fail("pallet period must be positive");
  if (cfg.cases_per_pallet < 1 || cfg.items_per_case < 1) fail("pallet composition must be positive");
  if (cfg.transit_time < 0) fail("transit time must be non-negative");
  if (!(w.rr > 0.0 && w.rr <= 1.0)) fail("read rate out of range");
  if (w.sample_rr && !(w.rr_min > 0.0 && w.rr_min <= w.rr_max && w.rr_max <= 1.0))
    fail("read-rate sampling range out of range");
  if (!(w.or_rate >= 0.0 && w.or_rate <= 1.0)) fail("cross-read rate out of range");
  if (w.freezer_shelves < 0 || w.freezer_shelves > w.n_shelves)
    fail("freezer shelf count out of range");
  if (cfg.freezer_case_fraction < 0.0 || cfg.freezer_case_fraction > 1.0)
    fail("freezer case fraction out of range");
  if (cfg.freezer_case_fraction > 0.0 && w.freezer_shelves == 0)
    fail("freezer cases need freezer shelves");
  if (cfg.scripted_changes && cfg.anomaly_period > 0)
    fail("scripted changes and periodic anomalies are mutually exclusive");
  if (cfg.anomaly_period < 0) fail("anomaly period must be non-negative");
  if (w.door_dwell + w.belt_time + w.shelf_dwell + w.exit_dwell > duration)
    fail("warehouse dwell exceeds the run duration");
  for (auto [a, b] : cfg.routes) {
    if (a < 0 || a >= cfg.n_warehouses || b < 0 || b >= cfg.n_warehouses)
      fail("route endpoint out of range");
    if (a == b) fail("route self-loop");
  }
}

// Successor lists for the warehouse DAG; throws on cycles or edges into the
// source warehouse 0.
std::vector<std::vector<int>> build_routes(const SupplyChainConfig& cfg) {
  std::vector<std::vector<int>> succ(static_cast<size_t>(cfg.n_warehouses));
  std::vector<int> indeg(static_cast<size_t>(cfg.n_warehouses), 0);
  if (cfg.routes.empty()) {
    for (int s = 0; s + 1 < cfg.n_warehouses; ++s) {
      succ[static_cast<size_t>(s)].push_back(s + 1);
      ++indeg[static_cast<size_t>(s) + 1];
    }
  } else {
    for (auto [a, b] : cfg.routes) {
      succ[static_cast<size_t>(a)].push_back(b);
      ++indeg[static_cast<size_t>(b)];
    }
  }
  if (cfg.n_warehouses > 1 && indeg[0] != 0)
    throw std::invalid_argument("warehouse 0 must be the route source");
  // Kahn's algorithm: every node must drain or there is a cycle.
  std::vector<int> deg = indeg, queue;
  for (int s = 0; s < cfg.n_warehouses; ++s)
    if (deg[static_cast<size_t>(s)] == 0) queue.push_back(s);
  size_t seen = 0;
  while (seen < queue.size()) {
    int s = queue[seen++];
    for (int n : succ[static_cast<size_t>(s)])
      if (--deg[static_cast<size_t>(n)] == 0) queue.push_back(n);
  }
  if (seen != static_cast<size_t>(cfg.n_warehouses))
    throw std::invalid_argument("warehouse routes contain a cycle");
  return succ;
}

}  // namespace

int locations_per_site(const WarehouseConfig& w) { return w.n_shelves + 3; }

LocationId door_location(const SupplyChainConfig& cfg, int site) {
  return static_cast<LocationId>(site * locations_per_site(cfg.warehouse));
}
LocationId belt_location(const SupplyChainConfig& cfg, int site) {
  return door_location(cfg, site) + 1;
}
LocationId shelf_location(const SupplyChainConfig& cfg, int site, int shelf) {
  return door_location(cfg, site) + 2 + shelf;
}
LocationId exit_location(const SupplyChainConfig& cfg, int site) {
  return door_location(cfg, site) + 2 + cfg.warehouse.n_shelves;
}

LocationInfo location_info(const SupplyChainConfig& cfg, LocationId loc) {
  int per = locations_per_site(cfg.warehouse);
  LocationInfo info;
  info.site = loc / per;
  int rel = loc % per;
  if (rel == 0) {
    info.kind = LocationKind::Door;
  } else if (rel == 1) {
    info.kind = LocationKind::Belt;
  } else if (rel < per - 1) {
    info.kind = LocationKind::Shelf;
    info.shelf = rel - 2;
  } else {
    info.kind = LocationKind::Exit;
  }
  return info;
}

double temperature_at(const SupplyChainConfig& cfg, LocationId loc) {
  if (loc == kNoLocation) return 20.0;
  LocationInfo info = location_info(cfg, loc);
  if (info.kind == LocationKind::Shelf && info.shelf < cfg.warehouse.freezer_shelves)
    return -18.0;
  return 20.0;
}

std::int64_t TraceBundle::interrogation_count(LocationId reader, TagIndex object) const {
  if (reader < 0 || reader >= n_locations) return 0;
  size_t idx = static_cast<size_t>(reader) * static_cast<size_t>(merged.n_objects) +
               static_cast<size_t>(object);
  if (object < 0 || idx >= interrogations.size()) return 0;
  return interrogations[idx];
}

TraceBundle generate(const SupplyChainConfig& cfg, Epoch duration) {
  validate(cfg, duration);
  const WarehouseConfig& w = cfg.warehouse;
  const int n_sites = cfg.n_warehouses;
  const int per_site_locs = locations_per_site(w);
  const int n_locations = n_sites * per_site_locs;
  auto succ = build_routes(cfg);

  std::mt19937_64 rng_rates(splitmix64(cfg.seed ^ 0xA5A5A5A5ull));
  std::mt19937_64 rng_motion(splitmix64(cfg.seed ^ 0x5A5A5A5Aull));
  std::mt19937_64 rng_read(splitmix64(cfg.seed ^ 0xC3C3C3C3ull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Per-reader read rates (per interrogation attempt).
  std::vector<double> rr_of(static_cast<size_t>(n_locations), w.rr);
  if (w.sample_rr) {
    std::uniform_real_distribution<double> rr_dist(w.rr_min, w.rr_max);
    for (auto& r : rr_of) r = rr_dist(rng_rates);
  }

  // ---- pallet injection -----------------------------------------------
  int n_pallets = 0;
  while ((cfg.max_pallets < 0 || n_pallets < cfg.max_pallets) &&
         static_cast<Epoch>(n_pallets) * cfg.pallet_period < duration)
    ++n_pallets;
  const int n_cases = n_pallets * cfg.cases_per_pallet;
  const int n_items = n_cases * cfg.items_per_case;

  TraceBundle out;
  out.config = cfg;
  out.duration = duration;
  out.n_locations = n_locations;
  out.tags = TagRegistry::dense(n_cases, n_items);
  out.site_of_location.resize(static_cast<size_t>(n_locations));
  out.site_locations.assign(static_cast<size_t>(n_sites), {});
  for (LocationId loc = 0; loc < n_locations; ++loc) {
    int site = loc / per_site_locs;
    out.site_of_location[static_cast<size_t>(loc)] = site;
    out.site_locations[static_cast<size_t>(site)].push_back(loc);
  }

  out.container_is_freezer.assign(static_cast<size_t>(n_cases), 0);
  if (cfg.freezer_case_fraction > 0.0)
    for (auto& f : out.container_is_freezer)
      f = unit(rng_motion) < cfg.freezer_case_fraction ? 1 : 0;

  // ---- case movement plans ---------------------------------------------
  std::vector<std::vector<TimelineEntry>> case_tl(static_cast<size_t>(n_cases));
  std::vector<std::vector<CaseHop>> case_hops(static_cast<size_t>(n_cases));
  std::vector<Epoch> belt_free(static_cast<size_t>(n_sites), 0);
  std::vector<int> dispatch_rr(static_cast<size_t>(n_sites), 0);
  std::vector<int> shelf_rr_frz(static_cast<size_t>(n_sites), 0);
  std::vector<int> shelf_rr_norm(static_cast<size_t>(n_sites), 0);

  auto pick_shelf = [&](int site, bool freezer) {
    int F = w.freezer_shelves, S = w.n_shelves;
    if (freezer && F > 0) return shelf_rr_frz[static_cast<size_t>(site)]++ % F;
    if (F < S) return F + shelf_rr_norm[static_cast<size_t>(site)]++ % (S - F);
    return shelf_rr_norm[static_cast<size_t>(site)]++ % S;  // everything is a freezer
  };

  for (int p = 0; p < n_pallets; ++p) {
    const int c0 = p * cfg.cases_per_pallet;
    const int nc = cfg.cases_per_pallet;
    bool pallet_frozen = false;
    for (int k = 0; k < nc; ++k)
      pallet_frozen = pallet_frozen || out.container_is_freezer[static_cast<size_t>(c0 + k)];

    Epoch arrive = static_cast<Epoch>(p) * cfg.pallet_period;
    int site = 0;
    bool first_site = true;
    while (true) {
      Epoch door_end = arrive + w.door_dwell;
      for (int k = 0; k < nc; ++k)
        push_entry(case_tl[static_cast<size_t>(c0 + k)], arrive, door_location(cfg, site));

      Epoch pallet_shelf_end = 0;
      if (first_site || cfg.unpack_at_every_hop) {
        // Unpack: each case rides the belt alone, then rests on its own shelf.
        for (int k = 0; k < nc; ++k) {
          auto& tl = case_tl[static_cast<size_t>(c0 + k)];
          Epoch belt_start = std::max(door_end, belt_free[static_cast<size_t>(site)]);
          belt_free[static_cast<size_t>(site)] = belt_start + w.belt_time;
          push_entry(tl, belt_start, belt_location(cfg, site));
          bool frz = out.container_is_freezer[static_cast<size_t>(c0 + k)] != 0;
          int shelf = pick_shelf(site, frz);
          Epoch belt_end = belt_start + w.belt_time;
          push_entry(tl, belt_end, shelf_location(cfg, site, shelf));
          pallet_shelf_end = std::max(pallet_shelf_end, belt_end + w.shelf_dwell);
        }
      } else {
        // Cross-dock: the intact pallet goes straight to one shelf.
        int shelf = pick_shelf(site, pallet_frozen);
        for (int k = 0; k < nc; ++k)
          push_entry(case_tl[static_cast<size_t>(c0 + k)], door_end,
                     shelf_location(cfg, site, shelf));
        pallet_shelf_end = door_end + w.shelf_dwell;
      }

      for (int k = 0; k < nc; ++k)
        push_entry(case_tl[static_cast<size_t>(c0 + k)], pallet_shelf_end,
                   exit_location(cfg, site));
      Epoch depart = pallet_shelf_end + w.exit_dwell;
      for (int k = 0; k < nc; ++k)
        push_entry(case_tl[static_cast<size_t>(c0 + k)], depart, kNoLocation);

      auto& next_sites = succ[static_cast<size_t>(site)];
      if (next_sites.empty() || depart >= duration) break;
      int next = next_sites[static_cast<size_t>(dispatch_rr[static_cast<size_t>(site)]++) %
                            next_sites.size()];
      Epoch next_arrive = depart + cfg.transit_time;
      if (depart - 1 < duration)
        for (int k = 0; k < nc; ++k)
          case_hops[static_cast<size_t>(c0 + k)].push_back({site, next, depart - 1, next_arrive});
      if (next_arrive >= duration) break;
      arrive = next_arrive;
      site = next;
      first_site = false;
    }
  }

  // ---- containment changes ----------------------------------------------
  std::vector<int32_t> item_case(static_cast<size_t>(n_items));
  for (int o = 0; o < n_items; ++o) item_case[static_cast<size_t>(o)] = o / cfg.items_per_case;
  std::vector<std::vector<int32_t>> case_items(static_cast<size_t>(n_cases));
  for (int o = 0; o < n_items; ++o)
    case_items[static_cast<size_t>(o / cfg.items_per_case)].push_back(o);
  std::vector<std::vector<TimelineEntry>> item_changes(static_cast<size_t>(n_items));

  auto shelved_site = [&](int32_t c, Epoch t) -> int {
    LocationId loc = timeline_at(case_tl[static_cast<size_t>(c)], t, kNoLocation);
    if (loc == kNoLocation) return -1;
    LocationInfo info = location_info(cfg, loc);
    return info.kind == LocationKind::Shelf ? info.site : -1;
  };
  auto detach = [&](int32_t o) {
    auto& members = case_items[static_cast<size_t>(item_case[static_cast<size_t>(o)])];
    members.erase(std::find(members.begin(), members.end(), o));
  };
  auto apply_change = [&](Epoch t, int32_t o, int32_t to_case, bool removal) {
    int32_t from_case = item_case[static_cast<size_t>(o)];
    detach(o);
    item_case[static_cast<size_t>(o)] = removal ? kNoContainer : to_case;
    if (!removal) case_items[static_cast<size_t>(to_case)].push_back(o);
    item_changes[static_cast<size_t>(o)].push_back({t, removal ? kNoContainer : to_case});
    out.truth.change_points.push_back({t, o, from_case, removal ? kNoContainer : to_case});
    out.anomalies.push_back({t, o, from_case, removal ? TagIndex{-1} : to_case, removal});
  };

  if (cfg.scripted_changes) {
    // Three item moves between six distinct cases plus one removal from a
    // seventh, evenly spread through the run. The destination is the shelved
    // case farthest from the source on the shelf axis: picking a neighbor
    // would leave the item inside the old reader's antenna overlap, which is
    // the one geometry where a move is near-invisible to any detector.
    const Epoch times[4] = {duration / 4, duration * 2 / 5, duration * 11 / 20,
                            duration * 7 / 10};
    auto shelf_of = [&](int32_t c, Epoch t) -> int {
      LocationId loc = timeline_at(case_tl[static_cast<size_t>(c)], t, kNoLocation);
      if (loc == kNoLocation) return -1;
      LocationInfo info = location_info(cfg, loc);
      return info.kind == LocationKind::Shelf ? info.shelf : -1;
    };
    // With frozen cases in play the script doubles as the cold-chain
    // violation generator: items leave a freezer case for an ambient one, so
    // exposure monitors have true positives to find.
    bool any_frozen = false;
    for (char f : out.container_is_freezer) any_frozen = any_frozen || f != 0;
    std::unordered_set<int32_t> used;
    for (int step = 0; step < 4; ++step) {
      Epoch t = times[step];
      bool removal = step == 3;
      int32_t src = -1, dst = -1;
      int site = -1;
      for (int pass = any_frozen ? 0 : 1; pass < 2 && src < 0; ++pass)
        for (int32_t c = 0; c < n_cases && src < 0; ++c) {
          if (pass == 0 && !out.container_is_freezer[static_cast<size_t>(c)]) continue;
          if (!used.count(c) && !case_items[static_cast<size_t>(c)].empty() &&
              (site = shelved_site(c, t)) >= 0)
            src = c;
        }
      if (src < 0) {
        std::cerr << "warning: scripted change " << step << " skipped (no shelved case)\n";
        continue;
      }
      if (!removal) {
        int src_shelf = shelf_of(src, t);
        int best_dist = -1;
        for (int pass = any_frozen ? 0 : 1; pass < 2 && dst < 0; ++pass) {
          for (int32_t c = 0; c < n_cases; ++c) {
            if (pass == 0 && out.container_is_freezer[static_cast<size_t>(c)]) continue;
            if (c == src || used.count(c) || shelved_site(c, t) != site) continue;
            int d = std::abs(shelf_of(c, t) - src_shelf);
            if (d > best_dist) {
              best_dist = d;
              dst = c;
            }
          }
        }
        if (dst < 0) {
          std::cerr << "warning: scripted change " << step << " skipped (no target case)\n";
          continue;
        }
      }
      int32_t o = *std::min_element(case_items[static_cast<size_t>(src)].begin(),
                                    case_items[static_cast<size_t>(src)].end());
      used.insert(src);
      if (!removal) used.insert(dst);
      apply_change(t, o, dst, removal);
    }
  } else if (cfg.anomaly_period > 0) {
    bool warned = false;
    for (Epoch t = cfg.anomaly_period; t < duration; t += cfg.anomaly_period) {
      // Eligible: items whose current case is on a shelf right now.
      std::vector<int32_t> items;
      for (int32_t o = 0; o < n_items; ++o) {
        int32_t c = item_case[static_cast<size_t>(o)];
        if (c != kNoContainer && shelved_site(c, t) >= 0) items.push_back(o);
      }
      if (items.empty()) continue;
      std::uniform_int_distribution<size_t> pick_item(0, items.size() - 1);
      int32_t o = items[pick_item(rng_motion)];
      int32_t src = item_case[static_cast<size_t>(o)];
      int site = shelved_site(src, t);
      std::vector<int32_t> targets;
      for (int32_t c = 0; c < n_cases; ++c)
        if (c != src && shelved_site(c, t) == site) targets.push_back(c);
      if (targets.empty()) {
        if (!warned)
          std::cerr << "warning: anomaly at t=" << t << " skipped (fewer than two shelved cases)\n";
        warned = true;
        continue;
      }
      std::uniform_int_distribution<size_t> pick_case(0, targets.size() - 1);
      apply_change(t, o, targets[pick_case(rng_motion)], false);
    }
  }

  // ---- ground-truth timelines -------------------------------------------
  out.truth.container_location = case_tl;
  out.truth.object_location.resize(static_cast<size_t>(n_items));
  out.truth.object_container.resize(static_cast<size_t>(n_items));
  for (int32_t o = 0; o < n_items; ++o) {
    std::vector<TimelineEntry> segs;
    segs.push_back({0, o / cfg.items_per_case});
    for (const auto& e : item_changes[static_cast<size_t>(o)]) segs.push_back(e);
    out.truth.object_container[static_cast<size_t>(o)] = segs;
    auto& loc_tl = out.truth.object_location[static_cast<size_t>(o)];
    for (size_t i = 0; i < segs.size(); ++i) {
      Epoch s = segs[i].from;
      Epoch e = i + 1 < segs.size() ? segs[i + 1].from : kForever;
      int32_t c = segs[i].value;
      if (c == kNoContainer) {
        push_entry(loc_tl, s, kNoLocation);
        continue;
      }
      const auto& ctl = case_tl[static_cast<size_t>(c)];
      push_entry(loc_tl, s, timeline_at(ctl, s, kNoLocation));
      for (const auto& entry : ctl)
        if (entry.from > s && entry.from < e) push_entry(loc_tl, entry.from, entry.value);
    }
    // Item hops: every inter-site hop of the case the item sat in at the time.
    for (size_t i = 0; i < segs.size(); ++i) {
      Epoch s = segs[i].from;
      Epoch e = i + 1 < segs.size() ? segs[i + 1].from : kForever;
      int32_t c = segs[i].value;
      if (c == kNoContainer) continue;
      for (const auto& hop : case_hops[static_cast<size_t>(c)])
        if (hop.exit_epoch >= s && hop.exit_epoch < e)
          out.hops.push_back({o, c, hop.from_site, hop.to_site, hop.exit_epoch, hop.arrive_epoch});
    }
  }
  std::sort(out.hops.begin(), out.hops.end(), [](const ItemHop& a, const ItemHop& b) {
    return std::tie(a.exit_epoch, a.object) < std::tie(b.exit_epoch, b.object);
  });

  // Count distinct cases touched by changes.
  {
    std::unordered_set<int32_t> touched;
    for (const auto& ch : out.truth.change_points) {
      if (ch.old_container != kNoContainer) touched.insert(ch.old_container);
      if (ch.new_container != kNoContainer) touched.insert(ch.new_container);
    }
    out.truth.changed_case_fraction =
        n_cases > 0 ? static_cast<double>(touched.size()) / n_cases : 0.0;
  }

  // ---- effective per-epoch rate table ------------------------------------
  out.rates = ReadRateTable(n_locations, 0.0);
  const double shelf_div =
      static_cast<double>(w.mobile_reader ? w.n_shelves : w.shelf_period);
  for (int site = 0; site < n_sites; ++site) {
    for (LocationId loc : {door_location(cfg, site), belt_location(cfg, site),
                           exit_location(cfg, site)})
      out.rates.set(loc, loc, rr_of[static_cast<size_t>(loc)]);
    for (int s = 0; s < w.n_shelves; ++s) {
      LocationId loc = shelf_location(cfg, site, s);
      out.rates.set(loc, loc, rr_of[static_cast<size_t>(loc)] / shelf_div);
      if (s > 0) out.rates.set(loc, loc - 1, w.or_rate / shelf_div);
      if (s + 1 < w.n_shelves) out.rates.set(loc, loc + 1, w.or_rate / shelf_div);
    }
  }

  // ---- reading emission ----------------------------------------------------
  auto make_history = [&](ObservationHistory& h) {
    h.t_begin = 0;
    h.t_end = duration - 1;
    h.n_locations = n_locations;
    h.n_containers = n_cases;
    h.n_objects = n_items;
  };
  make_history(out.merged);
  out.per_site.resize(static_cast<size_t>(n_sites));
  for (auto& h : out.per_site) make_history(h);
  out.interrogations.assign(
      static_cast<size_t>(n_locations) * static_cast<size_t>(n_items), 0);

  struct Cursor {
    const std::vector<TimelineEntry>* tl;
    size_t i = 0;
    LocationId loc = kNoLocation;
  };
  std::vector<Cursor> cur(static_cast<size_t>(n_cases + n_items));
  for (int32_t c = 0; c < n_cases; ++c)
    cur[static_cast<size_t>(c)].tl = &out.truth.container_location[static_cast<size_t>(c)];
  for (int32_t o = 0; o < n_items; ++o)
    cur[static_cast<size_t>(n_cases + o)].tl = &out.truth.object_location[static_cast<size_t>(o)];

  // One inventory cycle per site: every shelf portal in a warehouse fires in
  // the same epoch, so co-located tags land in the same read epochs.
  std::vector<Epoch> site_phase(static_cast<size_t>(n_sites));
  for (int s = 0; s < n_sites; ++s)
    site_phase[static_cast<size_t>(s)] =
        scan_phase(cfg.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(s + 1)),
                   w.shelf_period);

  auto emit = [&](Epoch t, LocationId reader, TagKind kind, TagIndex idx, double p) {
    if (kind == TagKind::Object)
      ++out.interrogations[static_cast<size_t>(reader) * static_cast<size_t>(n_items) +
                           static_cast<size_t>(idx)];
    if (unit(rng_read) >= p) return;
    Reading r{t, reader, idx};
    auto& merged_list =
        kind == TagKind::Container ? out.merged.container_reads : out.merged.object_reads;
    merged_list.push_back(r);
    auto& site_h = out.per_site[static_cast<size_t>(out.site_of_location[static_cast<size_t>(reader)])];
    (kind == TagKind::Container ? site_h.container_reads : site_h.object_reads).push_back(r);
  };

  for (Epoch t = 0; t < duration; ++t) {
    for (size_t slot = 0; slot < cur.size(); ++slot) {
      Cursor& c = cur[slot];
      while (c.i < c.tl->size() && (*c.tl)[c.i].from <= t) c.loc = (*c.tl)[c.i++].value;
      if (c.loc == kNoLocation) continue;
      TagKind kind = slot < static_cast<size_t>(n_cases) ? TagKind::Container : TagKind::Object;
      TagIndex idx = static_cast<TagIndex>(
          kind == TagKind::Container ? slot : slot - static_cast<size_t>(n_cases));
      LocationInfo info = location_info(cfg, c.loc);
      if (info.kind != LocationKind::Shelf) {
        emit(t, c.loc, kind, idx, rr_of[static_cast<size_t>(c.loc)]);
        continue;
      }
      if (w.mobile_reader) {
        int m = static_cast<int>((t / w.mobile_seconds_per_shelf) %
                                 static_cast<Epoch>(w.n_shelves));
        int d = m - info.shelf;
        if (d == 0) {
          emit(t, c.loc, kind, idx, rr_of[static_cast<size_t>(c.loc)]);
        } else if (d == -1 || d == 1) {
          LocationId reader = shelf_location(cfg, info.site, m);
          emit(t, reader, kind, idx, w.or_rate);
        }
        continue;
      }
      if (t % w.shelf_period != site_phase[static_cast<size_t>(info.site)]) continue;
      emit(t, c.loc, kind, idx, rr_of[static_cast<size_t>(c.loc)]);
      if (info.shelf > 0) emit(t, c.loc - 1, kind, idx, w.or_rate);
      if (info.shelf + 1 < w.n_shelves) emit(t, c.loc + 1, kind, idx, w.or_rate);
    }
  }

  out.merged.normalize();
  for (auto& h : out.per_site) h.normalize();
  return out;
}

std::vector<SupplyChainConfig> lab_scenarios() {
  const double rr_grid[2] = {0.85, 0.7};
  const double or_grid[2] = {0.25, 0.5};
  std::vector<SupplyChainConfig> out;
  for (int scripted = 0; scripted < 2; ++scripted) {
    for (double rr : rr_grid) {
      for (double orr : or_grid) {
        SupplyChainConfig c;
        c.n_warehouses = 1;
        c.pallet_period = 60;
        c.cases_per_pallet = 5;
        c.items_per_case = 5;
        c.max_pallets = 4;  // 20 cases, 100 items
        c.scripted_changes = scripted != 0;
        c.warehouse.n_shelves = 4;
        c.warehouse.rr = rr;
        c.warehouse.or_rate = orr;
        c.warehouse.door_dwell = 5;  // five interrogations per non-shelf reader
        c.warehouse.belt_time = 5;
        c.warehouse.exit_dwell = 5;
        c.warehouse.shelf_dwell = 1200;
        c.warehouse.shelf_period = 10;
        c.seed = 101 + static_cast<std::uint64_t>(out.size());
        out.push_back(c);
      }
    }
  }
  return out;
}

ReadRateTable estimate_read_rates(const ObservationHistory& history,
                                  std::span<const LocationId> object_reference_location,
                                  std::int64_t interrogations, int n_locations) {
  if (interrogations <= 0) throw std::invalid_argument("interrogation count must be positive");
  if (static_cast<int>(object_reference_location.size()) < history.n_objects)
    throw std::invalid_argument("reference location list too short");
  std::vector<std::int64_t> ref_tags_at(static_cast<size_t>(n_locations), 0);
  for (int o = 0; o < history.n_objects; ++o) {
    LocationId a = object_reference_location[static_cast<size_t>(o)];
    if (a == kNoLocation) continue;
    if (a < 0 || a >= n_locations) throw std::invalid_argument("reference location out of range");
    ++ref_tags_at[static_cast<size_t>(a)];
  }
  std::vector<std::int64_t> reads(static_cast<size_t>(n_locations) * n_locations, 0);
  for (const auto& r : history.object_reads) {
    LocationId a = object_reference_location[static_cast<size_t>(r.tag)];
    if (a == kNoLocation) continue;
    if (r.reader >= 0 && r.reader < n_locations)
      ++reads[static_cast<size_t>(r.reader) * n_locations + static_cast<size_t>(a)];
  }
  ReadRateTable table(n_locations, 0.0);
  for (LocationId a = 0; a < n_locations; ++a) {
    std::int64_t n_ref = ref_tags_at[static_cast<size_t>(a)];
    if (n_ref == 0) continue;
    double denom = static_cast<double>(interrogations) * static_cast<double>(n_ref);
    for (LocationId r = 0; r < n_locations; ++r)
      table.set(r, a,
                static_cast<double>(reads[static_cast<size_t>(r) * n_locations +
                                          static_cast<size_t>(a)]) /
                    denom);
  }
  return table;
}

}  // namespace rft

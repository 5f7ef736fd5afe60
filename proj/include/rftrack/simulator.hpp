#pragma once

// Supply-chain simulator: pallets of tagged cases and items flow through one
// or more warehouses (door -> conveyor belt -> shelf -> exit door), emitting
// noisy RFID readings plus the ground truth needed to score inference.
//
// Layout per warehouse: locations form one contiguous block
//   [door, belt, shelf 0 .. shelf S-1, exit]
// so warehouse w with S shelves owns location ids [w*(S+3), (w+1)*(S+3)).
//
// Reader behaviour:
//  - door / belt / exit readers interrogate every tag at their location once
//    per second and succeed with probability rr.
//  - each shelf has a portal reader that runs one inventory cycle every
//    shelf_period seconds (all shelf readers of a site fire in the same
//    epoch), detecting each tag on its shelf with probability rr; the readers
//    of the two adjacent shelves cross-read the tag in the same cycle with
//    probability or_rate.
//  - in mobile mode a single reader sweeps the shelves, spending
//    mobile_seconds_per_shelf on each; a tag is only interrogated while the
//    reader is at its shelf (own rate rr) or an adjacent one (or_rate).
//
// The rate table returned for inference holds *effective per-epoch* rates:
// attempt probability divided by the interrogation period (and by the sweep
// duty cycle in mobile mode), since the inference model treats every epoch
// as an independent Bernoulli emission.

#include "rftrack/core.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rft {

struct WarehouseConfig {
  int n_shelves = 16;
  // Read rate applied to every reader; if sample_rr is set, each reader
  // instead draws its rate uniformly from [rr_min, rr_max].
  double rr = 0.8;
  bool sample_rr = false;
  double rr_min = 0.6;
  double rr_max = 1.0;
  // Cross-read probability for adjacent-shelf readers.
  double or_rate = 0.5;
  Epoch door_dwell = 5;    // seconds a pallet sits at the entry door
  Epoch belt_time = 5;     // seconds each case spends alone on the belt
  Epoch exit_dwell = 5;    // seconds a repacked pallet sits at the exit door
  Epoch shelf_dwell = 600; // seconds a case rests on its shelf
  Epoch shelf_period = 10; // seconds between interrogations of a shelf tag
  bool mobile_reader = false;
  Epoch mobile_seconds_per_shelf = 10;
  // Shelves [0, freezer_shelves) are freezers (-18 C); everything else 20 C.
  int freezer_shelves = 0;
};

struct SupplyChainConfig {
  int n_warehouses = 1;
  // Directed edges (from, to). Empty means the chain 0 -> 1 -> ... -> n-1.
  // Must form a DAG with warehouse 0 the unique source; pallets finishing at
  // a warehouse with successors are dispatched round-robin among them.
  std::vector<std::pair<int, int>> routes;
  Epoch pallet_period = 60;  // seconds between pallet arrivals at the source
  int cases_per_pallet = 5;
  int items_per_case = 20;
  int max_pallets = -1;      // stop injecting after this many (-1: no cap)
  // Every anomaly_period seconds (0 = never) one random item is moved into a
  // different case in the same warehouse; requires >= 2 shelved cases or the
  // injection is skipped.
  Epoch anomaly_period = 0;
  Epoch transit_time = 120;  // seconds in transit between warehouses
  // When false, downstream warehouses cross-dock: pallets go door -> one
  // shelf (intact) -> exit without belt singulation.
  bool unpack_at_every_hop = true;
  // Fraction of cases flagged as frozen goods; they are shelved only on
  // freezer shelves (requires warehouse.freezer_shelves > 0).
  double freezer_case_fraction = 0.0;
  // When set, a fixed change script runs instead of random anomalies:
  // three items are moved between six distinct cases and one item is removed
  // from a seventh, at evenly spaced times mid-dwell.
  bool scripted_changes = false;
  WarehouseConfig warehouse;
  std::uint64_t seed = 1;
};

// Location-id helpers -------------------------------------------------------

enum class LocationKind { Door, Belt, Shelf, Exit };

struct LocationInfo {
  int site = 0;
  LocationKind kind = LocationKind::Door;
  int shelf = -1;  // valid when kind == Shelf
};

int locations_per_site(const WarehouseConfig& w);
LocationId door_location(const SupplyChainConfig& cfg, int site);
LocationId belt_location(const SupplyChainConfig& cfg, int site);
LocationId shelf_location(const SupplyChainConfig& cfg, int site, int shelf);
LocationId exit_location(const SupplyChainConfig& cfg, int site);
LocationInfo location_info(const SupplyChainConfig& cfg, LocationId loc);

// Ambient temperature at a location (freezer shelves -18 C, elsewhere 20 C).
double temperature_at(const SupplyChainConfig& cfg, LocationId loc);

// Simulation output ---------------------------------------------------------

struct ItemHop {
  TagIndex object = -1;   // dense object index
  TagIndex via_case = -1; // dense container index it travelled in
  int from_site = -1;
  int to_site = -1;
  Epoch exit_epoch = 0;    // last epoch at the origin's exit door
  Epoch arrive_epoch = 0;  // first epoch at the destination's entry door
};

struct AnomalyEvent {
  Epoch t = 0;
  TagIndex object = -1;
  TagIndex from_case = -1;
  TagIndex to_case = -1;  // -1 for removals
  bool removal = false;
};

struct TraceBundle {
  SupplyChainConfig config;
  Epoch duration = 0;
  TagRegistry tags;
  int n_locations = 0;
  ReadRateTable rates;                       // effective per-epoch rates
  ObservationHistory merged;                 // all sites combined
  std::vector<ObservationHistory> per_site;  // readings by owning warehouse
  GroundTruth truth;
  std::vector<int> site_of_location;
  std::vector<std::vector<LocationId>> site_locations;
  std::vector<char> container_is_freezer;    // per dense container index
  std::vector<ItemHop> hops;                 // inter-warehouse movements
  std::vector<AnomalyEvent> anomalies;
  // Interrogation attempts per (reader, dense object) pair, for calibration.
  std::vector<std::int64_t> interrogations;  // reader * n_objects + object
  std::int64_t interrogation_count(LocationId reader, TagIndex object) const;
};

// Runs the supply chain for `duration` seconds. Throws std::invalid_argument
// on inconsistent configuration (non-DAG routes, dwell longer than the run,
// freezer cases without freezer shelves, ...).
TraceBundle generate(const SupplyChainConfig& cfg, Epoch duration);

// Small-scale lab scenarios: 20 cases x 5 items through one warehouse with
// an entry reader, a belt reader, four shelves, and an exit reader, sized so
// each non-shelf reader interrogates every passing tag five times.
// Index 0..3: read rate/cross-read grid {0.85, 0.7} x {0.25, 0.5}, no
// changes. Index 4..7: same grid with the scripted change set (three moves
// plus one removal touching 35% of cases).
std::vector<SupplyChainConfig> lab_scenarios();

// Empirical read-rate calibration: reference objects pinned at known
// locations. object_reference_location[o] is the location of dense object o
// (kNoLocation for non-reference tags); `interrogations` is the number of
// attempts each (reader, reference tag) pair made. Unobserved pairs fall to
// the table's clamp floor.
ReadRateTable estimate_read_rates(const ObservationHistory& history,
                                  std::span<const LocationId> object_reference_location,
                                  std::int64_t interrogations,
                                  int n_locations);

}  // namespace rft

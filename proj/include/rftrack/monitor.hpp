#pragma once

// Exposure monitoring over tracked-state event streams: a per-object automaton
// watches for cold-chain items left outside a freezer container at ambient
// temperature for a continuous duration and raises an alert with the recorded
// temperature sequence. Query states are tiny fixed-layout byte images, and
// groups of similar states (objects sharing a container) compress via a
// centroid + byte-delta scheme for cheap migration.
//
// Two query flavors share the automaton and differ only in the condition:
//  - HybridExposure ("is the item outside any freezer container, somewhere
//    warm?") combines the containment estimate with the location's
//    temperature.
//  - LocationExposure ("is the item somewhere warm?") uses the location alone
//    with a higher temperature threshold, trading query expressiveness for
//    the location estimate's better accuracy.
// Both evaluate only cold-chain objects (items first packed in a freezer
// case — catalog metadata, not an inference output).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rftrack/core.hpp"
#include "rftrack/metrics.hpp"
#include "rftrack/pipeline.hpp"
#include "rftrack/simulator.hpp"

namespace rft {

// Per-(location, epoch) temperature readings: a constant per-location
// baseline plus sparse overrides; a location/epoch with no reading at all is
// a data gap (condition evaluates false and the gap is counted).
class TemperatureStream {
 public:
  TemperatureStream() = default;
  explicit TemperatureStream(int n_locations);

  // Baseline applies to every epoch unless overridden.
  void set_baseline(LocationId loc, double temp);
  void set(LocationId loc, Epoch t, double temp);  // one reading per sensor/epoch
  void mark_missing(LocationId loc, Epoch t);      // sensor gap at one epoch

  std::optional<double> at(LocationId loc, Epoch t) const;
  int n_locations() const { return static_cast<int>(baseline_.size()); }

  // Sensors mirroring the simulated deployment: freezer shelves cold,
  // everything else ambient.
  static TemperatureStream for_deployment(const SupplyChainConfig& cfg, int n_locations);

 private:
  std::vector<double> baseline_;  // NaN = no sensor
  std::unordered_map<uint64_t, double> overrides_;  // NaN value = gap
};

enum class AutomatonState : uint8_t { Idle = 0, Exposed = 1 };

struct Alert {
  uint32_t tag_id = 0;  // external tag id
  Epoch t_alert = 0;
  std::vector<float> temps;  // the recorded exposure sequence
  auto operator<=>(const Alert&) const = default;
};

// Automaton state for one monitored object. The byte image is the unit of
// migration and sharing; it round-trips exactly.
struct ObjectQueryState {
  uint32_t tag_id = 0;
  AutomatonState state = AutomatonState::Idle;
  Epoch exposure_start = 0;   // valid while state == Exposed
  std::vector<float> temps;   // readings accumulated this exposure

  // Layout: u32 tag_id | u8 state | i64 exposure_start | u32 n | f32 * n,
  // little-endian, no padding.
  std::vector<uint8_t> image() const;
  static ObjectQueryState from_image(std::span<const uint8_t> bytes);  // throws on malformed
};

enum class MonitorQuery { HybridExposure, LocationExposure };

struct MonitorOptions {
  MonitorQuery query = MonitorQuery::HybridExposure;
  double threshold_temp = 0.0;     // condition: temperature strictly above this
  Epoch exposure_duration = 120;   // continuous epochs before an alert fires
};

// One automaton step at epoch t with the object's current estimated location
// and container. Appends the temperature while the exposure condition holds,
// resets to idle the moment it fails, and fires exactly one alert per
// exposure episode when the accumulated run first reaches the duration.
struct StepResult {
  std::optional<Alert> alert;
  bool data_gap = false;  // location had no temperature reading this epoch
};
StepResult step(ObjectQueryState& state, Epoch t, LocationId location, int32_t container,
                bool container_is_freezer, const TemperatureStream& temps,
                const MonitorOptions& opts);

// Drive every cold-chain object's automaton over a (delta-encoded) event
// stream, expanding it to per-epoch steps across [t_begin, t_end].
struct MonitorRun {
  std::vector<Alert> alerts;
  int64_t data_gaps = 0;
  std::vector<ObjectQueryState> final_states;  // cold-chain objects only
};
MonitorRun run_monitor(const TraceBundle& bundle, std::span<const StateEvent> events,
                       Epoch t_begin, Epoch t_end, const MonitorOptions& opts);

// The same event stream the tracker would have produced with perfect
// knowledge: ground-truth location/containment deltas per object.
std::vector<StateEvent> truth_events(const TraceBundle& bundle);

// Cold-chain universe: objects whose first container is a freezer case.
std::vector<char> cold_chain_objects(const TraceBundle& bundle);

// Greedy one-to-one alert matching by tag id within +-tolerance epochs.
ChangeScore score_alerts(std::span<const Alert> reported, std::span<const Alert> actual,
                         Epoch tolerance);

std::string alerts_csv(std::span<const Alert> alerts);  // tag_id,t_alert,n_readings

// ---------------------------------------------------------------------------
// Centroid-based state sharing.
//
// A group of objects in one container tends to have near-identical query
// states; the block stores one full image (the centroid, the state with the
// smallest total byte distance to the rest) and per-state byte-run deltas
// against it. Distance pads the shorter image with zeros and counts differing
// byte positions.

struct DeltaRun {
  uint32_t offset = 0;
  std::vector<uint8_t> bytes;
};
struct StateDelta {
  uint32_t tag_id = 0;      // names the object in decode errors
  uint32_t target_len = 0;  // decoded image length
  std::vector<DeltaRun> runs;
};
struct SharedStateBlock {
  std::vector<uint8_t> centroid;  // full image of the representative state
  std::vector<StateDelta> deltas; // one per input state, input order
};

int64_t byte_distance(std::span<const uint8_t> a, std::span<const uint8_t> b);

SharedStateBlock share(std::span<const ObjectQueryState> states);
// Inverse. A block with no deltas decodes to just the centroid; a delta whose
// runs fall outside its target length (or whose decoded tag id does not match)
// throws, naming the object.
std::vector<ObjectQueryState> unshare(const SharedStateBlock& block);

// Wire format: u32 centroid_len | centroid | u32 n_deltas | per delta
// (u32 tag_id | u32 target_len | u32 n_runs | per run (u32 offset | u32 len |
// bytes)), little-endian.
std::vector<uint8_t> encode_block(const SharedStateBlock& block);
SharedStateBlock decode_block(std::span<const uint8_t> bytes);  // throws on malformed

}  // namespace rft

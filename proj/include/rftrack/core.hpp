#pragma once

// Core data model for RFID tracking: tags, readers, read-rate tables, the
// per-epoch emission model, and the marginal log-likelihood of a containment
// hypothesis given a trace.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rft {

using Epoch = int64_t;       // discrete time, one epoch per second
using LocationId = int32_t;  // dense reader/location index
using TagIndex = int32_t;    // dense per-kind tag index

constexpr LocationId kNoLocation = -1;  // absent / unknown
constexpr int32_t kNoContainer = -1;    // not inside any container

enum class TagKind : uint8_t { Container, Object };

// External tag ids encode the packaging level in their numeric range so flat
// trace files need no schema column.
constexpr uint64_t kContainerIdBase = 10000;
constexpr uint64_t kObjectIdBase = 1000000;

inline TagKind kind_of(uint64_t external_id) {
  return external_id >= kObjectIdBase ? TagKind::Object : TagKind::Container;
}

// Bidirectional external-id <-> dense-index map, one index space per kind.
class TagRegistry {
 public:
  TagIndex intern(uint64_t external_id);
  std::optional<TagIndex> find(uint64_t external_id) const;
  uint64_t external(TagKind kind, TagIndex idx) const;
  int n_containers() const { return static_cast<int>(container_ids_.size()); }
  int n_objects() const { return static_cast<int>(object_ids_.size()); }

  static TagRegistry dense(int n_containers, int n_objects);

 private:
  std::vector<uint64_t> container_ids_, object_ids_;
  std::unordered_map<uint64_t, TagIndex> index_;
};

// pi(r, l): probability reader r detects a tag at location l in one epoch.
// Entries are clamped to [kClampEps, 1 - kClampEps] so logs stay finite.
class ReadRateTable {
 public:
  static constexpr double kClampEps = 1e-6;

  ReadRateTable() : n_(0) {}
  ReadRateTable(int n_locations, double off_diagonal);
  static ReadRateTable diagonal(int n_locations, double on_rate);

  int n_locations() const { return n_; }
  double operator()(LocationId reader, LocationId at) const {
    return pi_[static_cast<size_t>(reader) * n_ + at];
  }
  void set(LocationId reader, LocationId at, double p);

 private:
  int n_;
  std::vector<double> pi_;
};

// Precomputed log tables used by every inner loop.
struct EmissionTables {
  int n_locations = 0;
  std::vector<double> log_read;   // [r*n + a] = log pi(r, a)
  std::vector<double> log_miss;   // [r*n + a] = log(1 - pi(r, a))
  std::vector<double> read_gain;  // log_read - log_miss
  std::vector<double> base_miss;  // [a] = sum_r log_miss(r, a)

  explicit EmissionTables(const ReadRateTable& rates);
  EmissionTables() = default;
};

// Log-probability of one (reader, tag-at-location, epoch) emission.
double emission_log_prob(double pi_entry, bool read);

struct Reading {
  Epoch t;
  LocationId reader;
  TagIndex tag;
  auto operator<=>(const Reading&) const = default;
};

// A trace: container and object readings over an inclusive epoch range,
// each list sorted by (t, reader, tag) and deduplicated.
struct ObservationHistory {
  Epoch t_begin = 0;
  Epoch t_end = -1;  // empty when t_end < t_begin
  int n_locations = 0;
  int n_containers = 0;
  int n_objects = 0;
  std::vector<Reading> container_reads;
  std::vector<Reading> object_reads;

  Epoch n_epochs() const { return t_end < t_begin ? 0 : t_end - t_begin + 1; }
  void normalize();  // sort + dedup both lists
};

// Containment hypothesis: container of each object, kNoContainer for none.
struct ContainmentMap {
  int n_containers = 0;
  std::vector<int32_t> container_of;  // size n_objects

  int n_objects() const { return static_cast<int>(container_of.size()); }
  static ContainmentMap none(int n_containers, int n_objects);
};

// Stepwise timeline: value holds from `from` until the next entry.
struct TimelineEntry {
  Epoch from;
  int32_t value;
};

int32_t timeline_at(const std::vector<TimelineEntry>& tl, Epoch t, int32_t before_first);

struct GroundTruth {
  std::vector<std::vector<TimelineEntry>> container_location;  // per container
  std::vector<std::vector<TimelineEntry>> object_location;     // per object
  std::vector<std::vector<TimelineEntry>> object_container;    // per object

  struct Change {
    Epoch t;
    int32_t object;
    int32_t old_container;
    int32_t new_container;  // kNoContainer for removals
  };
  std::vector<Change> change_points;
  double changed_case_fraction = 0.0;  // fraction of cases touched by changes

  LocationId location_of(TagKind kind, TagIndex idx, Epoch t) const;
  int32_t container_of(TagIndex object, Epoch t) const;
};

// Marginal log-likelihood of `containment` for the trace: per container and
// epoch, the unknown location is summed out under a uniform prior over the
// location support; objects assigned to a container share its location,
// unassigned objects carry their own location variable.
double log_likelihood(const ObservationHistory& history,
                      const ContainmentMap& containment,
                      const ReadRateTable& rates);

// Forward-sample a trace from the generative model: every tag follows a
// random location timeline (objects inherit their container's), and each
// reader fires per epoch with probability pi(reader, location).
struct SampleResult {
  ObservationHistory history;
  GroundTruth truth;
};
SampleResult sample_trace(const ReadRateTable& rates, const ContainmentMap& containment,
                          Epoch n_epochs, uint64_t seed);

// Compensated accumulator (Neumaier) for long log-prob sums.
struct NeumaierSum {
  double sum = 0.0, comp = 0.0;
  void add(double v);
  double value() const { return sum + comp; }
};

}  // namespace rft

#pragma once

// Batched inference pipeline for one site: readings stream in, and every
// batch_period seconds the engine re-runs EM over its retained buffer, scans
// for containment changes, emits location/containment events (delta records;
// each value holds until the next event for the same object), and truncates
// history according to the configured retention mode.
//
// Retention modes:
//  - Full: keep every reading (cost grows with trace length).
//  - Window: keep only the trailing recent_window seconds.
//  - CriticalRegion: keep each object's critical region plus the trailing
//    window; bounded cost with near-full accuracy.
//
// Migration support: collapse_object() packages an object's accumulated
// candidate weights (local evidence plus anything carried in), and
// extract_object_readings() returns its retained raw readings; admit() is
// the receiving side, seeding carried weights additively and registering the
// shipped readings.

#include <cstdint>
#include <span>
#include <vector>

#include "rftrack/changepoint.hpp"
#include "rftrack/core.hpp"
#include "rftrack/inference.hpp"
#include "rftrack/truncation.hpp"

namespace rft {

enum class HistoryMode { Full, Window, CriticalRegion };

struct PipelineOptions {
  Epoch batch_period = 300;
  Epoch recent_window = 600;  // trailing window kept by Window and CR modes
  HistoryMode mode = HistoryMode::CriticalRegion;
  bool detect_changes = true;
  Threshold threshold;  // change-detection threshold (calibrate or fix)
  DetectOptions detect;
  CriticalRegionOptions cr;
  CandidateOptions candidates;
  int em_max_iters = 50;
  // A group silent for longer than this (up to the batch end) is reported
  // absent; its containment estimate is kept.
  Epoch absence_timeout = 120;
  // Location estimates combine the posterior evidence of the trailing
  // location_window seconds (locations change slowly relative to scan
  // periods); a single epoch rarely separates a shelf from its cross-reading
  // neighbors, while a window catches hits from both adjacent readers, which
  // pins the true shelf. Match this to the scan period of the deployment
  // (several fixed-reader cycles; at least one full sweep for mobile readers).
  Epoch location_window = 25;
};

// Delta record: the object's estimated location/containment from epoch t
// until its next event.
struct StateEvent {
  Epoch t = 0;
  int32_t object = -1;
  LocationId location = kNoLocation;
  int32_t container = kNoContainer;
  auto operator<=>(const StateEvent&) const = default;
};

struct BatchResult {
  Epoch t_begin = 0, t_end = 0;  // inclusive epoch window of this batch
  double em_wall_s = 0.0;        // inference only
  double wall_s = 0.0;           // inference + detection + truncation
  std::size_t buffer_readings = 0;
  int em_iterations = 0;
  std::vector<ChangePointReport> changes;
};

class SiteEngine {
 public:
  SiteEngine(const ReadRateTable& rates, int n_containers, int n_objects,
             PipelineOptions opts);

  // Append readings (any order; they are normalized at the next batch).
  void ingest(std::span<const Reading> container_reads,
              std::span<const Reading> object_reads);

  // Receive a migrated object: carried weights add up, shipped readings join
  // the local buffer, the watermark advances. Unknown objects get fresh
  // state.
  void admit(const CollapsedObjectState& state, std::span<const Reading> object_readings);

  // Forget an object that migrated away: purge its readings and local state.
  void retire(int32_t object, Epoch t);

  // Run inference + detection + truncation over everything buffered up to
  // t_end (inclusive). Batches must be processed in increasing time order.
  const BatchResult& process_batch(Epoch t_begin, Epoch t_end);

  // Current estimates (value as of the latest processed batch).
  int32_t container_of(int32_t object) const { return cur_container_[static_cast<size_t>(object)]; }
  LocationId location_of(int32_t object) const { return cur_location_[static_cast<size_t>(object)]; }
  std::span<const int32_t> containers() const { return cur_container_; }
  std::span<const LocationId> locations() const { return cur_location_; }
  Epoch watermark_of(int32_t object) const { return watermarks_[static_cast<size_t>(object)]; }

  const std::vector<StateEvent>& events() const { return events_; }
  const std::vector<ChangePointReport>& all_changes() const { return all_changes_; }
  const std::vector<BatchResult>& batches() const { return batches_; }
  const ObservationHistory& buffer() const { return buffer_; }
  bool has_inference() const { return last_ != nullptr; }
  const InferenceResult& last_inference() const { return *last_; }

  // Migration accessors (valid after at least one processed batch).
  CollapsedObjectState collapse_object(int32_t object) const;
  std::vector<Reading> extract_object_readings(int32_t object) const;

 private:
  void emit(Epoch t, int32_t object, LocationId loc, int32_t container);
  void refresh_estimates(const InferenceResult& res, std::span<const ChangePointReport> reports,
                         Epoch t_begin, Epoch t_end);

  ReadRateTable rates_;
  EmissionTables tables_;
  PipelineOptions opts_;
  int n_containers_ = 0, n_objects_ = 0;
  ObservationHistory buffer_;
  bool buffer_started_ = false;
  Epoch processed_until_ = -1;
  std::vector<Epoch> watermarks_;
  CarriedWeights carried_;
  ContainmentMap prev_;  // warm start for the next batch
  bool has_prev_ = false;
  std::vector<int32_t> cur_container_;
  std::vector<LocationId> cur_location_;
  std::vector<Epoch> last_active_;  // latest epoch with evidence per object
  std::vector<StateEvent> events_;
  std::vector<ChangePointReport> all_changes_;
  std::vector<BatchResult> batches_;
  std::shared_ptr<const InferenceResult> last_;
};

}  // namespace rft

#pragma once

// Containment change detection: a generalized-likelihood-ratio scan over the
// per-object evidence series. The statistic is the gain of the best split
// (one container before, one after) over the best unsplit explanation; it is
// compared against a threshold calibrated offline on change-free traces.

#include <cstdint>
#include <vector>

#include "rftrack/inference.hpp"

namespace rft {

struct ThresholdCalibration {
  int n_samples = 0;
  Epoch horizon = 0;
  uint64_t seed = 0;
  double max_statistic = 0.0;  // largest split gain seen on change-free traces
  double margin = 0.0;
};

struct Threshold {
  double delta = 50.0;
  ThresholdCalibration calibration;  // how the value was obtained, if calibrated
};

struct ChangePointReport {
  int32_t object = -1;
  Epoch t_change = 0;  // first epoch of the new regime
  double delta = 0.0;
  int32_t new_container = kNoContainer;
};

struct SplitScan {
  double delta = 0.0;
  Epoch t_split = 0;
  int32_t pre_container = kNoContainer;
  int32_t post_container = kNoContainer;
  int64_t n_scanned = 0;  // candidate split epochs evaluated
};

// Evaluate all splits with the suffix starting at a domain epoch within
// [scan_lo, scan_hi]. Carried weights count toward every prefix. Split gain
// is max(prefix best + suffix best - unsplit best, 0).
SplitScan delta_statistic(const EvidenceSeries& series, Epoch scan_lo, Epoch scan_hi);

struct CalibrationOptions {
  int n_containers = 5;
  int objects_per_container = 4;
  double margin = 0.5;  // safety margin added to the max observed statistic
  EmOptions em;
};

// Sample `n_samples` change-free traces at these read rates, run inference
// and the split scan on each object, and return the maximum statistic plus
// the margin. Deterministic per seed.
Threshold calibrate_threshold(const ReadRateTable& rates, Epoch horizon, int n_samples,
                              uint64_t seed, const CalibrationOptions& opts = {});

// Calibrate on caller-supplied change-free traces instead of sampled ones.
// Use this when the deployment has reader timing structure (scan cycles) the
// generic sampler does not reproduce: feed it traces from the same source as
// the monitored stream, with no containment changes in them.
Threshold calibrate_threshold(const ReadRateTable& rates,
                              std::span<const ObservationHistory> change_free,
                              const CalibrationOptions& opts = {});

struct DetectOptions {
  Epoch scan_window = 600;        // how far back split points are considered
  int64_t min_domain_epochs = 5;  // skip objects with almost no retained data
};

// Scan every object of a finished inference. Epochs at or before an object's
// watermark are ignored; on detection the report's t_change starts the new
// regime and the watermark advances to t_change - 1.
std::vector<ChangePointReport> detect(const InferenceResult& inference, const Threshold& threshold,
                                      std::vector<Epoch>& watermark,
                                      const DetectOptions& opts = {});

}  // namespace rft

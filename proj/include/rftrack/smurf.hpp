#pragma once

// Per-tag smoothing baseline: each tag's location is the majority reader
// inside an adaptive window sized from its recent read rate, containment is
// the most frequently co-located case, and containment changes are flagged
// when the top-k co-located sets before and after a probe time are disjoint.
//
// This is a deliberately local, heuristic method: it smooths each tag in
// isolation and combines the results afterwards, with no feedback between
// location and containment estimates. It exists as a measuring stick for the
// model-based tracker, so its knobs default to values that make it as strong
// as reasonable (k = 3, 95% presence confidence, probe windows matching the
// batch period) and its driver emits the same event-stream/snapshot shapes so
// both are scored by identical code.

#include <cstdint>
#include <span>
#include <vector>

#include "rftrack/core.hpp"
#include "rftrack/metrics.hpp"

namespace rft {

struct SmurfOptions {
  int k = 3;                // size of the co-location sets compared at probes
  double delta_s = 0.05;    // tolerated miss probability for a present tag
  Epoch rate_window = 60;   // trailing epochs used to estimate the read rate
  Epoch max_window = 60;    // clamp on the smoothing window length
  double p_floor = 0.05;    // rate floor so windows stay finite
  Epoch probe_window = 300; // co-location counted this many epochs per side
  Epoch batch_period = 300; // probe grid (matches the tracker's batches)
};

// Smoothing window for one tag at epoch t: length = ceil(ln(1/delta_s)/p),
// where p is the fraction of trailing rate_window epochs with >= 1 read.
struct AdaptiveWindow {
  Epoch length = 1;    // >= 1
  double p_hat = 1.0;  // in (0, 1]
};
AdaptiveWindow adaptive_window(std::span<const Reading> tag_reads, Epoch t,
                               const SmurfOptions& opts);

// Majority reader inside the adaptive window centered at t (ties: smaller
// location id); kNoLocation when the window holds no readings. tag_reads must
// be sorted by epoch.
LocationId smooth_location_at(std::span<const Reading> tag_reads, Epoch t,
                              const SmurfOptions& opts);

// The per-epoch estimate over [t_begin, t_end].
std::vector<LocationId> smooth_location(std::span<const Reading> tag_reads, Epoch t_begin,
                                        Epoch t_end, const SmurfOptions& opts);

// Co-location evidence for one object around a probe time t. "Co-located" =
// the object and the case were read by the same reader in the same epoch.
struct SmurfState {
  Epoch t = 0;
  std::vector<int64_t> before;        // counts per case in [t - probe_window, t)
  std::vector<int64_t> after;         // counts per case in (t, t + probe_window]
  std::vector<int64_t> since;         // counts per case in [t, end of data]
  std::vector<int32_t> top_before;    // <= k cases, by count desc then id
  std::vector<int32_t> top_after;
  bool observed_before = false;       // object had >= 1 reading in the window
  bool observed_after = false;
};

SmurfState colocation_probe(const ObservationHistory& history, int32_t object, Epoch t,
                            const SmurfOptions& opts);

// The C.3 decision rule. Same top-1 before and after the probe: that case,
// unchanged. Disjoint top-k sets: containment change at t, container = the
// case most co-located from t to the present. Overlapping top-k sets with
// different top-1: the shared case with the highest combined count (missed
// readings can demote the true container to runner-up on one side). An object
// unobserved on either side keeps its previous estimate (changed = false,
// container = fallback). No co-located case at all: none.
struct SmurfDecision {
  int32_t container = kNoContainer;
  bool changed = false;
};
SmurfDecision infer_containment_smurf(const SmurfState& state, int k, int32_t fallback);

// Batch-grid driver over a generated trace: per-object location and
// containment estimates at every probe, delta events, change reports (probe
// time stamps, deduplicated per transition window), scored exactly like the
// tracker's runs.
SingleSiteRun drive_site_smurf(const TraceBundle& bundle, const SmurfOptions& opts);

}  // namespace rft

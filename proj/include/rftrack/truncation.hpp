#pragma once

// History truncation: find each object's critical region (the short window
// where the evidence decisively separates one candidate container from the
// rest), drop everything outside CR + recent history, and collapse inference
// state to per-candidate weight totals for migration.

#include <optional>
#include <span>

#include "rftrack/inference.hpp"

namespace rft {

struct CriticalRegionOptions {
  Epoch window = 30;     // CR spans [t - window, t]
  double margin = 10.0;  // required best-minus-second-best evidence gap
};

struct CriticalRegion {
  std::vector<std::optional<std::pair<Epoch, Epoch>>> per_object;
};

// Slide [t - window, t] over the object's domain; a window qualifies when the
// best candidate's summed evidence beats the runner-up by at least `margin`
// (single candidate: every non-empty window qualifies). The most recent
// qualifying window wins; nullopt when none qualifies.
std::optional<std::pair<Epoch, Epoch>> find_critical_region(const EvidenceSeries& series,
                                                            const CriticalRegionOptions& opts = {});

// All objects of a finished inference.
CriticalRegion find_critical_regions(const InferenceResult& inference,
                                     const CriticalRegionOptions& opts = {});

struct RecentHistory {
  Epoch t_begin = 0;
  Epoch t_end = -1;  // inclusive, [T - recent + 1, T]
};

// Keep object readings inside CR_o or recent; keep container readings inside
// recent or inside the CR of any object listing the container as candidate.
ObservationHistory truncate(const ObservationHistory& history, const CriticalRegion& cr,
                            const RecentHistory& recent, const CandidateSet& candidates);

struct CollapsedObjectState {
  int32_t object = -1;
  std::vector<std::pair<int32_t, double>> weights;  // sorted by container id
  Epoch watermark = 0;
};

struct CollapsedState {
  std::vector<CollapsedObjectState> per_object;
};

// Weight totals of a finished inference, ready for migration. Totals already
// include any weights carried into this site, so collapsing chains across
// hops. Watermarks default to `watermark` unless a per-object vector is given.
CollapsedState collapse(const WeightTable& weights, Epoch watermark,
                        std::span<const Epoch> per_object_watermark = {});

// Additive merge: weights for the same container add up; new containers are
// inserted (sorted). This is how a receiving site seeds its next inference.
void add_weights(std::vector<std::pair<int32_t, double>>& into,
                 std::span<const std::pair<int32_t, double>> from);

// Little-endian fixed-width binary, one record per object:
//   u64 object_id | i64 watermark | u32 n_candidates | n x (u64 container_id, f64 weight)
// Ids are external tag ids mapped through the registry.
std::vector<uint8_t> encode_collapsed(const CollapsedState& state, const TagRegistry& tags);
CollapsedState decode_collapsed(std::span<const uint8_t> bytes, TagRegistry& tags);

// Debug dump: header + one row per (object, candidate).
std::string collapsed_csv(const CollapsedState& state, const TagRegistry& tags);

}  // namespace rft

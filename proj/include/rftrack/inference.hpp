#pragma once

// EM engine: alternates location-posterior estimation (E) with containment
// re-estimation (M) over a trace. All inner math runs in log space over a
// configurable location support, with sparse per-epoch structures so cost
// scales with readings, not epochs x containers x objects.

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "rftrack/core.hpp"

namespace rft {

// Sorted, disjoint, non-adjacent inclusive epoch spans.
class EpochSet {
 public:
  EpochSet() = default;
  static EpochSet range(Epoch lo, Epoch hi);  // empty if hi < lo

  void add(Epoch lo, Epoch hi);  // union with [lo, hi], renormalizing
  void clip_below(Epoch lo);     // drop epochs < lo
  bool contains(Epoch t) const;
  int64_t size() const;
  int64_t count_leq(Epoch t) const;
  bool empty() const { return spans_.empty(); }
  Epoch first() const { return spans_.front().first; }
  Epoch last() const { return spans_.back().second; }
  const std::vector<std::pair<Epoch, Epoch>>& spans() const { return spans_; }

 private:
  std::vector<std::pair<Epoch, Epoch>> spans_;
};

struct CandidateSet {
  std::vector<std::vector<int32_t>> per_object;  // sorted unique container ids

  bool empty() const { return per_object.empty(); }
};

struct CandidateOptions {
  int k = 5;                 // candidates kept per object
  Epoch first_window = 60;   // co-location counted over the first epochs...
  Epoch recent_window = 600; // ...and the most recent ones
};

// Top-k co-located containers per object: count epochs where the object and
// the container were detected by the same reader in the same epoch, within
// the two windows. Ties break toward the smaller container id.
CandidateSet build_candidates(const ObservationHistory& history,
                              const CandidateOptions& opts = {});

// Most co-located container per object (kNoContainer when never co-located):
// the standard starting containment for the EM. Starting from such a full
// assignment keeps the per-iteration objective comparable; objects assigned
// to no container contribute an own-location term, so an all-none start is a
// different model structure and its first assignment pass may lower the
// reported objective.
ContainmentMap initial_containment(const ObservationHistory& history,
                                   const CandidateOptions& opts = {});

// Location posteriors per container: a dense row per "active" epoch (any
// reading of the container or a member) plus one default row used for all
// silent epochs. Columns follow `support`.
struct PosteriorTable {
  std::vector<LocationId> support;  // global location ids per column

  struct PerContainer {
    std::vector<Epoch> active;        // sorted active epochs
    std::vector<double> probs;        // active.size() x support.size()
    std::vector<double> default_q;    // support.size()
    std::vector<double> active_qb;    // dot(q_t, base_miss) per active row
    double default_qb = 0.0;          // dot(default_q, base_miss)
    int member_count = 0;
  };
  std::vector<PerContainer> per_container;

  int support_size() const { return static_cast<int>(support.size()); }
  // Row for (container, epoch); default row when the epoch is silent.
  std::span<const double> at(int32_t c, Epoch t) const;
};

// Containment weight w(c, o) per object over its candidate containers.
struct WeightTable {
  std::vector<std::vector<std::pair<int32_t, double>>> per_object;  // sorted by container
};

// Carried (collapsed) weights per object: evidence mass accumulated before
// the local history begins, e.g. shipped from an upstream site.
using CarriedWeights = std::vector<std::vector<std::pair<int32_t, double>>>;

struct EmOptions {
  int max_iters = 50;
  bool memorization = true;  // reuse per-container E/M results while the
                             // member set is unchanged (bit-identical output)
  CandidateOptions candidate_opts;
  CandidateSet candidates;            // empty => build_candidates(history)
  std::vector<EpochSet> object_domains;  // empty => full range per object
  CarriedWeights carried;             // empty => none
  std::vector<LocationId> support;    // empty => all locations
};

// Per-epoch containment evidence for one (object, candidate) pair, sparse:
// explicit points where the value differs from the silent-epoch default.
struct PairEvidence {
  int32_t container = kNoContainer;
  double carried = 0.0;
  double default_value = 0.0;
  std::vector<std::pair<Epoch, double>> points;  // sorted by epoch
  double total = 0.0;  // carried + sum of evidence over the whole domain
};

struct EvidenceSeries {
  int32_t object = -1;
  EpochSet domain;
  std::vector<PairEvidence> candidates;  // sorted by container id

  // Drop everything before `lo`: clips the domain, discards earlier points
  // and recomputes totals. When this actually removes local epochs the
  // carried mass is dropped too (it belongs to the discarded regime).
  void restrict_below(Epoch lo);
};

struct InferenceResult {
  ContainmentMap containment;
  PosteriorTable posterior;
  WeightTable weights;
  CandidateSet candidates;
  std::vector<EpochSet> object_domains;
  int iterations = 0;
  bool converged = false;
  // EM objective after each E-step (data log-likelihood plus any carried
  // weight of the current assignment; pure log-likelihood when no carried
  // weights are configured).
  std::vector<double> iteration_objective;
  double final_objective = -std::numeric_limits<double>::infinity();

  // Materialize the containment-evidence series for one object from the
  // final posterior. Valid while this result is alive.
  EvidenceSeries evidence_for(int32_t object) const;

  // Internal replay state (posterior dot products, filtered read index).
  struct Internals;
  std::shared_ptr<const Internals> internals;
};

// One E-step: posteriors under `containment` (options control support,
// domains and candidate handling exactly as in run_em).
PosteriorTable e_step(const ObservationHistory& history, const ReadRateTable& rates,
                      const ContainmentMap& containment, const EmOptions& opts = {});

// One M-step weight pass under a given posterior table.
WeightTable m_step_weights(const ObservationHistory& history, const ReadRateTable& rates,
                           const PosteriorTable& posterior, const EmOptions& opts = {});

// Assignment from weights: argmax candidate per object (ties: smaller id),
// kNoContainer for objects with no candidates.
ContainmentMap m_step_assign(const WeightTable& weights, int n_containers);

// Full EM loop from `init` until the assignment stops changing or max_iters.
InferenceResult run_em(const ObservationHistory& history, const ReadRateTable& rates,
                       const ContainmentMap& init, const EmOptions& opts = {});

}  // namespace rft

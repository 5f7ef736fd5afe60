#include "rftrack/smurf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace rft {

namespace {

// First index in `reads` (sorted by epoch) with t >= key.
size_t lower_epoch(std::span<const Reading> reads, Epoch key) {
  return static_cast<size_t>(
      std::lower_bound(reads.begin(), reads.end(), key,
                       [](const Reading& r, Epoch t) { return r.t < t; }) -
      reads.begin());
}

// Top-k case ids by count (desc), ties toward smaller id; zero counts skipped.
std::vector<int32_t> top_k(const std::vector<int64_t>& counts, int k) {
  std::vector<int32_t> ids;
  for (int32_t c = 0; c < static_cast<int32_t>(counts.size()); ++c)
    if (counts[static_cast<size_t>(c)] > 0) ids.push_back(c);
  std::sort(ids.begin(), ids.end(), [&](int32_t a, int32_t b) {
    int64_t ca = counts[static_cast<size_t>(a)], cb = counts[static_cast<size_t>(b)];
    return ca != cb ? ca > cb : a < b;
  });
  if (static_cast<int>(ids.size()) > k) ids.resize(static_cast<size_t>(k));
  return ids;
}

int32_t argmax_count(const std::vector<int64_t>& counts) {
  int32_t best = kNoContainer;
  int64_t best_n = 0;
  for (int32_t c = 0; c < static_cast<int32_t>(counts.size()); ++c) {
    int64_t n = counts[static_cast<size_t>(c)];
    if (n > best_n) {
      best_n = n;
      best = c;
    }
  }
  return best;
}

// (epoch, reader) -> cases read there, for O(1) co-location lookups.
struct ColocIndex {
  int64_t n_locations = 0;
  std::unordered_map<int64_t, std::vector<int32_t>> cases_at;
  std::vector<std::vector<Reading>> by_object;

  ColocIndex(const ObservationHistory& h) : n_locations(h.n_locations) {
    cases_at.reserve(h.container_reads.size());
    for (const Reading& r : h.container_reads)
      cases_at[r.t * n_locations + r.reader].push_back(r.tag);
    by_object.resize(static_cast<size_t>(h.n_objects));
    for (const Reading& r : h.object_reads)
      by_object[static_cast<size_t>(r.tag)].push_back(r);
    for (auto& v : by_object)
      std::sort(v.begin(), v.end());
  }

  // Add every case co-read with the object's readings in [lo, hi] to counts.
  // Returns whether the object had any reading in the range.
  bool accumulate(std::span<const Reading> obj_reads, Epoch lo, Epoch hi,
                  std::vector<int64_t>& counts) const {
    bool any = false;
    for (size_t i = lower_epoch(obj_reads, lo); i < obj_reads.size() && obj_reads[i].t <= hi;
         ++i) {
      any = true;
      auto it = cases_at.find(obj_reads[i].t * n_locations + obj_reads[i].reader);
      if (it == cases_at.end()) continue;
      for (int32_t c : it->second) ++counts[static_cast<size_t>(c)];
    }
    return any;
  }
};

SmurfState probe_with_index(const ColocIndex& idx, const ObservationHistory& history,
                            int32_t object, Epoch t, const SmurfOptions& opts) {
  SmurfState st;
  st.t = t;
  st.before.assign(static_cast<size_t>(history.n_containers), 0);
  st.after.assign(static_cast<size_t>(history.n_containers), 0);
  st.since.assign(static_cast<size_t>(history.n_containers), 0);
  std::span<const Reading> reads = idx.by_object[static_cast<size_t>(object)];
  st.observed_before = idx.accumulate(reads, t - opts.probe_window, t - 1, st.before);
  st.observed_after = idx.accumulate(reads, t + 1, t + opts.probe_window, st.after);
  idx.accumulate(reads, t, history.t_end, st.since);
  st.top_before = top_k(st.before, opts.k);
  st.top_after = top_k(st.after, opts.k);
  return st;
}

}  // namespace

AdaptiveWindow adaptive_window(std::span<const Reading> tag_reads, Epoch t,
                               const SmurfOptions& opts) {
  // Presence rate = fraction of trailing epochs with at least one read.
  int64_t covered = 0;
  Epoch last = t + 1;  // sentinel != any epoch in range
  for (size_t i = lower_epoch(tag_reads, t - opts.rate_window + 1);
       i < tag_reads.size() && tag_reads[i].t <= t; ++i) {
    if (tag_reads[i].t != last) ++covered;
    last = tag_reads[i].t;
  }
  AdaptiveWindow w;
  w.p_hat = std::min(
      1.0, std::max(opts.p_floor,
                    static_cast<double>(covered) / static_cast<double>(opts.rate_window)));
  w.length = static_cast<Epoch>(std::ceil(std::log(1.0 / opts.delta_s) / w.p_hat));
  w.length = std::clamp<Epoch>(w.length, 1, opts.max_window);
  return w;
}

LocationId smooth_location_at(std::span<const Reading> tag_reads, Epoch t,
                              const SmurfOptions& opts) {
  const AdaptiveWindow w = adaptive_window(tag_reads, t, opts);
  const Epoch lo = t - w.length / 2;
  const Epoch hi = lo + w.length - 1;
  // Majority reader by read count; ties toward the smaller location id.
  std::unordered_map<LocationId, int> votes;
  for (size_t i = lower_epoch(tag_reads, lo); i < tag_reads.size() && tag_reads[i].t <= hi; ++i)
    ++votes[tag_reads[i].reader];
  LocationId best = kNoLocation;
  int best_n = 0;
  for (auto [loc, n] : votes)
    if (n > best_n || (n == best_n && best != kNoLocation && loc < best)) {
      best = loc;
      best_n = n;
    }
  return best;
}

std::vector<LocationId> smooth_location(std::span<const Reading> tag_reads, Epoch t_begin,
                                        Epoch t_end, const SmurfOptions& opts) {
  std::vector<LocationId> out;
  out.reserve(static_cast<size_t>(std::max<Epoch>(0, t_end - t_begin + 1)));
  for (Epoch t = t_begin; t <= t_end; ++t)
    out.push_back(smooth_location_at(tag_reads, t, opts));
  return out;
}

SmurfState colocation_probe(const ObservationHistory& history, int32_t object, Epoch t,
                            const SmurfOptions& opts) {
  return probe_with_index(ColocIndex(history), history, object, t, opts);
}

SmurfDecision infer_containment_smurf(const SmurfState& state, int k, int32_t fallback) {
  if (!state.observed_before || !state.observed_after) return {fallback, false};

  const int32_t top1b = state.top_before.empty() ? kNoContainer : state.top_before.front();
  const int32_t top1a = state.top_after.empty() ? kNoContainer : state.top_after.front();
  if (top1b == top1a) return {top1b, false};

  const size_t kk = static_cast<size_t>(k);
  auto in_after = [&](int32_t c) {
    for (size_t i = 0; i < state.top_after.size() && i < kk; ++i)
      if (state.top_after[i] == c) return true;
    return false;
  };
  bool disjoint = !state.top_before.empty() && !state.top_after.empty();
  for (size_t i = 0; disjoint && i < state.top_before.size() && i < kk; ++i)
    if (in_after(state.top_before[i])) disjoint = false;

  if (disjoint) {
    // Clean handover: pick whatever the object has travelled with since t.
    return {argmax_count(state.since), true};
  }

  // Overlapping sets: a case present on both sides of t could be the true
  // container that missed readings on one side; take the strongest shared one.
  int32_t best = kNoContainer;
  int64_t best_n = -1;
  for (size_t i = 0; i < state.top_before.size() && i < kk; ++i) {
    int32_t c = state.top_before[i];
    if (!in_after(c)) continue;
    int64_t n = state.before[static_cast<size_t>(c)] + state.after[static_cast<size_t>(c)];
    if (n > best_n || (n == best_n && c < best)) {
      best = c;
      best_n = n;
    }
  }
  if (best != kNoContainer) return {best, false};
  // No shared case (one side never co-located at all): keep the estimate.
  return {fallback, false};
}

SingleSiteRun drive_site_smurf(const TraceBundle& bundle, const SmurfOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  SingleSiteRun run;
  const int n_objects = bundle.tags.n_objects();
  const ColocIndex idx(bundle.merged);

  constexpr Epoch kNeverReported = std::numeric_limits<Epoch>::min();
  std::vector<LocationId> cur_loc(static_cast<size_t>(n_objects), kNoLocation);
  std::vector<int32_t> cur_cont(static_cast<size_t>(n_objects), kNoContainer);
  std::vector<Epoch> last_report(static_cast<size_t>(n_objects), kNeverReported);

  for (Epoch b = 0; b < bundle.duration; b += opts.batch_period) {
    const Epoch t = std::min(b + opts.batch_period, bundle.duration) - 1;
    for (int32_t o = 0; o < n_objects; ++o) {
      const auto& reads = idx.by_object[static_cast<size_t>(o)];
      LocationId loc = smooth_location_at(reads, t, opts);
      if (loc == kNoLocation) loc = cur_loc[static_cast<size_t>(o)];  // hold last value

      SmurfState st = probe_with_index(idx, bundle.merged, o, t, opts);
      SmurfDecision d = infer_containment_smurf(st, opts.k, cur_cont[static_cast<size_t>(o)]);

      const Epoch last = last_report[static_cast<size_t>(o)];
      if (d.changed && (last == kNeverReported || t - last > opts.probe_window)) {
        run.changes.push_back({o, t, 0.0, d.container});
        last_report[static_cast<size_t>(o)] = t;
      }
      if (loc != cur_loc[static_cast<size_t>(o)] || d.container != cur_cont[static_cast<size_t>(o)]) {
        run.events.push_back({t, o, loc, d.container});
        cur_loc[static_cast<size_t>(o)] = loc;
        cur_cont[static_cast<size_t>(o)] = d.container;
      }
    }
    InstantSnapshot snap;
    snap.t = t;
    snap.container_of = cur_cont;
    snap.location_of = cur_loc;
    run.snapshots.push_back(std::move(snap));
  }

  run.report = score_snapshots(run.snapshots, bundle.truth);
  run.report.changes = score_changes(run.changes, bundle.truth.change_points, opts.batch_period);
  run.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace rft

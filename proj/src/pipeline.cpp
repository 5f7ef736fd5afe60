#include "rftrack/pipeline.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace rft {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SiteEngine::SiteEngine(const ReadRateTable& rates, int n_containers, int n_objects,
                       PipelineOptions opts)
    : rates_(rates),
      tables_(rates),
      opts_(std::move(opts)),
      n_containers_(n_containers),
      n_objects_(n_objects) {
  if (n_containers < 0 || n_objects < 0) throw std::invalid_argument("negative tag count");
  buffer_.n_locations = rates_.n_locations();
  buffer_.n_containers = n_containers;
  buffer_.n_objects = n_objects;
  buffer_.t_begin = 0;
  buffer_.t_end = -1;
  watermarks_.assign(static_cast<size_t>(n_objects), -1);
  carried_.assign(static_cast<size_t>(n_objects), {});
  prev_ = ContainmentMap::none(n_containers, n_objects);
  cur_container_.assign(static_cast<size_t>(n_objects), kNoContainer);
  cur_location_.assign(static_cast<size_t>(n_objects), kNoLocation);
  last_active_.assign(static_cast<size_t>(n_objects), std::numeric_limits<Epoch>::min());
}

void SiteEngine::ingest(std::span<const Reading> container_reads,
                        std::span<const Reading> object_reads) {
  auto take = [&](std::span<const Reading> in, std::vector<Reading>& out) {
    for (const Reading& r : in) {
      out.push_back(r);
      if (!buffer_started_ || r.t < buffer_.t_begin) {
        buffer_.t_begin = r.t;
        buffer_started_ = true;
      }
    }
  };
  take(container_reads, buffer_.container_reads);
  take(object_reads, buffer_.object_reads);
}

void SiteEngine::admit(const CollapsedObjectState& state,
                       std::span<const Reading> object_readings) {
  if (state.object < 0 || state.object >= n_objects_) throw std::out_of_range("admit: unknown object id");
  auto o = static_cast<size_t>(state.object);
  add_weights(carried_[o], state.weights);
  watermarks_[o] = std::max(watermarks_[o], state.watermark);
  ingest({}, object_readings);
}

void SiteEngine::retire(int32_t object, Epoch t) {
  if (object < 0 || object >= n_objects_) throw std::out_of_range("retire: unknown object id");
  auto o = static_cast<size_t>(object);
  std::erase_if(buffer_.object_reads, [&](const Reading& r) { return r.tag == object; });
  carried_[o].clear();
  prev_.container_of[o] = kNoContainer;
  emit(t, object, kNoLocation, kNoContainer);
}

CollapsedObjectState SiteEngine::collapse_object(int32_t object) const {
  auto o = static_cast<size_t>(object);
  CollapsedObjectState s;
  s.object = object;
  s.watermark = watermarks_[o];
  if (last_ && o < last_->weights.per_object.size() && !last_->weights.per_object[o].empty()) {
    s.weights = last_->weights.per_object[o];  // already includes carried mass
  } else {
    s.weights = carried_[o];
  }
  // Log weights are defined only up to an additive constant (raw sums embed
  // history-length base terms). Pin best = 0 so candidates unknown to the
  // receiving engine start level with the carried best, not ahead of it.
  if (!s.weights.empty()) {
    double best = s.weights.front().second;
    for (const auto& [c, w] : s.weights) best = std::max(best, w);
    for (auto& [c, w] : s.weights) w -= best;
  }
  return s;
}

std::vector<Reading> SiteEngine::extract_object_readings(int32_t object) const {
  std::vector<Reading> out;
  for (const Reading& r : buffer_.object_reads)
    if (r.tag == object) out.push_back(r);
  std::sort(out.begin(), out.end());
  return out;
}

void SiteEngine::emit(Epoch t, int32_t object, LocationId loc, int32_t container) {
  auto o = static_cast<size_t>(object);
  if (loc == cur_location_[o] && container == cur_container_[o]) return;
  events_.push_back(StateEvent{t, object, loc, container});
  cur_location_[o] = loc;
  cur_container_[o] = container;
}

const BatchResult& SiteEngine::process_batch(Epoch t_begin, Epoch t_end) {
  if (t_end < t_begin) throw std::invalid_argument("process_batch: t_end < t_begin");
  if (t_end <= processed_until_) throw std::invalid_argument("process_batch: batches must advance");
  auto wall0 = std::chrono::steady_clock::now();

  BatchResult batch;
  batch.t_begin = t_begin;
  batch.t_end = t_end;

  if (!buffer_started_) {
    buffer_.t_begin = t_begin;
    buffer_started_ = true;
  }
  buffer_.t_begin = std::min(buffer_.t_begin, t_begin);
  buffer_.t_end = t_end;
  buffer_.normalize();

  EmOptions em;
  em.max_iters = opts_.em_max_iters;
  em.candidate_opts = opts_.candidates;
  em.carried = carried_;
  em.object_domains.resize(static_cast<size_t>(n_objects_));
  for (int o = 0; o < n_objects_; ++o) {
    Epoch lo = std::max(buffer_.t_begin, watermarks_[static_cast<size_t>(o)] + 1);
    em.object_domains[static_cast<size_t>(o)] = EpochSet::range(std::min(lo, t_end), t_end);
  }

  // Warm start: previous assignment, first-seen objects from co-location.
  ContainmentMap init = initial_containment(buffer_, opts_.candidates);
  if (has_prev_) {
    for (int o = 0; o < n_objects_; ++o)
      if (prev_.container_of[static_cast<size_t>(o)] != kNoContainer)
        init.container_of[static_cast<size_t>(o)] = prev_.container_of[static_cast<size_t>(o)];
  }

  auto em0 = std::chrono::steady_clock::now();
  auto res = std::make_shared<InferenceResult>(run_em(buffer_, rates_, init, em));
  batch.em_wall_s = seconds_since(em0);
  batch.em_iterations = res->iterations;

  std::vector<ChangePointReport> reports;
  if (opts_.detect_changes) {
    reports = detect(*res, opts_.threshold, watermarks_, opts_.detect);
    if (!reports.empty()) {
      // Re-estimate with the post-change domains so current estimates track
      // the new regime instead of averaging across it.
      for (const auto& rep : reports) {
        auto o = static_cast<size_t>(rep.object);
        em.object_domains[o] =
            EpochSet::range(std::min(std::max(buffer_.t_begin, watermarks_[o] + 1), t_end), t_end);
        init.container_of[o] = rep.new_container;
      }
      for (int o = 0; o < n_objects_; ++o)
        if (res->containment.container_of[static_cast<size_t>(o)] != kNoContainer)
          init.container_of[static_cast<size_t>(o)] = res->containment.container_of[static_cast<size_t>(o)];
      auto em1 = std::chrono::steady_clock::now();
      res = std::make_shared<InferenceResult>(run_em(buffer_, rates_, init, em));
      batch.em_wall_s += seconds_since(em1);
      batch.em_iterations += res->iterations;
    }
  }
  batch.changes = reports;
  all_changes_.insert(all_changes_.end(), reports.begin(), reports.end());

  refresh_estimates(*res, reports, t_begin, t_end);

  // Retention.
  if (opts_.mode == HistoryMode::Window) {
    Epoch lo = t_end - opts_.recent_window + 1;
    if (lo > buffer_.t_begin) {
      std::erase_if(buffer_.container_reads, [&](const Reading& r) { return r.t < lo; });
      std::erase_if(buffer_.object_reads, [&](const Reading& r) { return r.t < lo; });
      buffer_.t_begin = lo;
    }
  } else if (opts_.mode == HistoryMode::CriticalRegion) {
    CriticalRegion cr = find_critical_regions(*res, opts_.cr);
    RecentHistory recent{t_end - opts_.recent_window + 1, t_end};
    buffer_ = truncate(buffer_, cr, recent, res->candidates);
  }
  batch.buffer_readings = buffer_.container_reads.size() + buffer_.object_reads.size();

  prev_ = res->containment;
  has_prev_ = true;
  last_ = std::move(res);
  processed_until_ = t_end;
  batch.wall_s = seconds_since(wall0);
  batches_.push_back(std::move(batch));
  return batches_.back();
}

void SiteEngine::refresh_estimates(const InferenceResult& res,
                                   std::span<const ChangePointReport> reports, Epoch t_begin,
                                   Epoch t_end) {
  const PosteriorTable& post = res.posterior;
  const int n_support = post.support_size();

  // Own readings per object inside the batch window, grouped later by epoch.
  std::vector<std::vector<std::pair<Epoch, int32_t>>> own(static_cast<size_t>(n_objects_));
  for (const Reading& r : buffer_.object_reads)
    if (r.t >= t_begin && r.t <= t_end) own[static_cast<size_t>(r.tag)].emplace_back(r.t, r.reader);

  const size_t ns = static_cast<size_t>(n_support);
  auto sum_argmax = [&](const std::vector<double>& sum) {
    size_t best = 0;
    for (size_t a = 1; a < ns; ++a)
      if (sum[a] > sum[best]) best = a;
    return post.support[best];
  };

  // Location estimate at an active epoch t: argmax of the summed per-epoch
  // log posterior over (t - location_window, t]. A single epoch rarely
  // separates a shelf from a cross-reading neighbor (their effective rates
  // are close), but a window catches hits from both adjacent readers, and a
  // hit two shelves away from a hypothesis is near-impossible under it.
  const Epoch lw = std::max<Epoch>(1, opts_.location_window);
  std::vector<double> win_sum(ns);

  // Per-container location delta sequence from a given epoch on (normally the
  // batch start; from a detected change point when one backdates further).
  auto build_container_seq = [&](int32_t c, Epoch from) {
    std::vector<std::pair<Epoch, LocationId>> seq;
    auto ci = static_cast<size_t>(c);
    if (ci >= post.per_container.size()) return seq;
    const auto& pc = post.per_container[ci];
    const auto first = static_cast<size_t>(
        std::lower_bound(pc.active.begin(), pc.active.end(), from) - pc.active.begin());
    size_t lo = 0;
    for (size_t i = first; i < pc.active.size() && pc.active[i] <= t_end; ++i) {
      while (pc.active[lo] <= pc.active[i] - lw) ++lo;
      std::fill(win_sum.begin(), win_sum.end(), 0.0);
      for (size_t j = lo; j <= i; ++j) {
        const double* row = pc.probs.data() + j * ns;
        for (size_t a = 0; a < ns; ++a) win_sum[a] += std::log(std::max(row[a], 1e-300));
      }
      LocationId loc = sum_argmax(win_sum);
      if (seq.empty() || seq.back().second != loc) seq.emplace_back(pc.active[i], loc);
    }
    return seq;
  };
  std::vector<char> seq_done(static_cast<size_t>(n_containers_), 0);
  std::vector<std::vector<std::pair<Epoch, LocationId>>> seqs(static_cast<size_t>(n_containers_));
  auto container_seq = [&](int32_t c) -> const std::vector<std::pair<Epoch, LocationId>>& {
    auto ci = static_cast<size_t>(c);
    if (!seq_done[ci]) {
      seq_done[ci] = 1;
      seqs[ci] = build_container_seq(c, t_begin);
    }
    return seqs[ci];
  };

  // Same trailing-window estimate for unassigned objects, whose per-epoch
  // log score is base_miss plus that epoch's read gains.
  const auto n_loc = static_cast<size_t>(tables_.n_locations);
  auto own_seq_of = [&](const std::vector<std::pair<Epoch, int32_t>>& reads) {
    std::vector<std::pair<Epoch, LocationId>> seq;
    std::vector<std::pair<Epoch, std::vector<double>>> rows;
    for (size_t i = 0; i < reads.size();) {
      std::vector<double> row(ns);
      for (size_t a = 0; a < ns; ++a)
        row[a] = tables_.base_miss[static_cast<size_t>(post.support[a])];
      size_t j = i;
      while (j < reads.size() && reads[j].first == reads[i].first) {
        for (size_t a = 0; a < ns; ++a)
          row[a] += tables_.read_gain[static_cast<size_t>(reads[j].second) * n_loc +
                                      static_cast<size_t>(post.support[a])];
        ++j;
      }
      rows.emplace_back(reads[i].first, std::move(row));
      i = j;
    }
    size_t lo = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
      while (rows[lo].first <= rows[i].first - lw) ++lo;
      std::fill(win_sum.begin(), win_sum.end(), 0.0);
      for (size_t j = lo; j <= i; ++j)
        for (size_t a = 0; a < ns; ++a) win_sum[a] += rows[j].second[a];
      LocationId loc = sum_argmax(win_sum);
      if (seq.empty() || seq.back().second != loc) seq.emplace_back(rows[i].first, loc);
    }
    return seq;
  };

  // Detected change points of this batch, by object: these date the
  // containment event precisely instead of at the batch boundary.
  std::vector<std::pair<Epoch, char>> cont_point(static_cast<size_t>(n_objects_), {0, 0});
  for (const auto& rep : reports) cont_point[static_cast<size_t>(rep.object)] = {rep.t_change, 1};

  for (int32_t o = 0; o < n_objects_; ++o) {
    auto oi = static_cast<size_t>(o);
    int32_t c = res.containment.container_of[oi];

    // Containment change point (detected time, or batch boundary fallback).
    bool cont_differs = c != cur_container_[oi];
    Epoch cont_t = t_begin;
    if (cont_point[oi].second) cont_t = cont_point[oi].first;

    // Location points for this object over the window. A change detected in
    // this batch can date back before the batch start (detection lags the
    // change by up to one batch); the retained history still holds those
    // epochs, so the new container's sequence is built from the change point
    // and the object's location follows its new container from the moment
    // the containment event says it moved.
    const std::vector<std::pair<Epoch, LocationId>>* seq = nullptr;
    std::vector<std::pair<Epoch, LocationId>> own_seq;
    if (c != kNoContainer) {
      if (cont_point[oi].second && cont_t < t_begin) {
        own_seq = build_container_seq(c, cont_t);
        seq = &own_seq;
      } else {
        seq = &container_seq(c);
      }
    } else {
      if (!own[oi].empty()) own_seq = own_seq_of(own[oi]);
      seq = &own_seq;
    }

    if (cont_differs && !cont_point[oi].second && cur_container_[oi] == kNoContainer) {
      // First assignment: date it at the first sign of the object.
      if (!own[oi].empty())
        cont_t = own[oi].front().first;
      else if (!seq->empty())
        cont_t = seq->front().first;
    }

    // Merge containment point with location points in epoch order. When the
    // assignment changed mid-batch, the new container's pre-change location
    // points do not describe this object: it only starts sharing that
    // location at the change point. The points are a delta sequence, so the
    // entry in force at the change point rides along on the containment
    // event itself; strictly earlier entries are dropped.
    LocationId cont_loc = cur_location_[oi];
    size_t si = 0;
    if (cont_differs) {
      while (si < seq->size() && (*seq)[si].first <= cont_t) {
        cont_loc = (*seq)[si].second;
        ++si;
      }
    }
    bool cont_pending = cont_differs || cont_point[oi].second != 0;
    while (si < seq->size() || cont_pending) {
      bool take_cont = cont_pending && (si >= seq->size() || cont_t <= (*seq)[si].first);
      if (take_cont) {
        emit(cont_t, o, cont_loc, c);
        cont_pending = false;
      } else {
        emit((*seq)[si].first, o, (*seq)[si].second, cur_container_[oi]);
        ++si;
      }
    }

    // Activity bookkeeping + absence.
    Epoch active = last_active_[oi];
    if (!own[oi].empty()) active = std::max(active, own[oi].back().first);
    if (c != kNoContainer && static_cast<size_t>(c) < post.per_container.size()) {
      const auto& pc = post.per_container[static_cast<size_t>(c)];
      if (!pc.active.empty()) active = std::max(active, pc.active.back());
    }
    last_active_[oi] = active;
    if (cur_location_[oi] != kNoLocation && active != std::numeric_limits<Epoch>::min() &&
        t_end - active > opts_.absence_timeout) {
      emit(t_end, o, kNoLocation, cur_container_[oi]);
    }
  }
}

}  // namespace rft

#include "rftrack/core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rft {

TagIndex TagRegistry::intern(uint64_t external_id) {
  auto it = index_.find(external_id);
  if (it != index_.end()) return it->second;
  auto& ids = kind_of(external_id) == TagKind::Container ? container_ids_ : object_ids_;
  TagIndex idx = static_cast<TagIndex>(ids.size());
  ids.push_back(external_id);
  index_.emplace(external_id, idx);
  return idx;
}

std::optional<TagIndex> TagRegistry::find(uint64_t external_id) const {
  auto it = index_.find(external_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

uint64_t TagRegistry::external(TagKind kind, TagIndex idx) const {
  const auto& ids = kind == TagKind::Container ? container_ids_ : object_ids_;
  return ids.at(static_cast<size_t>(idx));
}

TagRegistry TagRegistry::dense(int n_containers, int n_objects) {
  TagRegistry reg;
  for (int c = 0; c < n_containers; ++c) reg.intern(kContainerIdBase + c);
  for (int o = 0; o < n_objects; ++o) reg.intern(kObjectIdBase + o);
  return reg;
}

namespace {
double clamp_rate(double p) {
  return std::clamp(p, ReadRateTable::kClampEps, 1.0 - ReadRateTable::kClampEps);
}
}  // namespace

ReadRateTable::ReadRateTable(int n_locations, double off_diagonal) : n_(n_locations) {
  if (n_locations < 0) throw std::invalid_argument("negative location count");
  pi_.assign(static_cast<size_t>(n_) * n_, clamp_rate(off_diagonal));
}

ReadRateTable ReadRateTable::diagonal(int n_locations, double on_rate) {
  ReadRateTable t(n_locations, 0.0);
  for (LocationId r = 0; r < n_locations; ++r) t.set(r, r, on_rate);
  return t;
}

void ReadRateTable::set(LocationId reader, LocationId at, double p) {
  if (reader < 0 || reader >= n_ || at < 0 || at >= n_)
    throw std::invalid_argument("read rate index out of range");
  pi_[static_cast<size_t>(reader) * n_ + at] = clamp_rate(p);
}

EmissionTables::EmissionTables(const ReadRateTable& rates) : n_locations(rates.n_locations()) {
  size_t n2 = static_cast<size_t>(n_locations) * n_locations;
  log_read.resize(n2);
  log_miss.resize(n2);
  read_gain.resize(n2);
  base_miss.assign(n_locations, 0.0);
  for (LocationId r = 0; r < n_locations; ++r) {
    for (LocationId a = 0; a < n_locations; ++a) {
      size_t i = static_cast<size_t>(r) * n_locations + a;
      double p = rates(r, a);
      log_read[i] = std::log(p);
      log_miss[i] = std::log1p(-p);
      read_gain[i] = log_read[i] - log_miss[i];
      base_miss[a] += log_miss[i];
    }
  }
}

double emission_log_prob(double pi_entry, bool read) {
  double p = clamp_rate(pi_entry);
  return read ? std::log(p) : std::log1p(-p);
}

void ObservationHistory::normalize() {
  auto fix = [](std::vector<Reading>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  fix(container_reads);
  fix(object_reads);
}

ContainmentMap ContainmentMap::none(int n_containers, int n_objects) {
  ContainmentMap m;
  m.n_containers = n_containers;
  m.container_of.assign(n_objects, kNoContainer);
  return m;
}

int32_t timeline_at(const std::vector<TimelineEntry>& tl, Epoch t, int32_t before_first) {
  auto it = std::upper_bound(tl.begin(), tl.end(), t,
                             [](Epoch x, const TimelineEntry& e) { return x < e.from; });
  if (it == tl.begin()) return before_first;
  return std::prev(it)->value;
}

LocationId GroundTruth::location_of(TagKind kind, TagIndex idx, Epoch t) const {
  const auto& tls = kind == TagKind::Container ? container_location : object_location;
  return timeline_at(tls.at(static_cast<size_t>(idx)), t, kNoLocation);
}

int32_t GroundTruth::container_of(TagIndex object, Epoch t) const {
  return timeline_at(object_container.at(static_cast<size_t>(object)), t, kNoContainer);
}

void NeumaierSum::add(double v) {
  double t = sum + v;
  if (std::abs(sum) >= std::abs(v))
    comp += (sum - t) + v;
  else
    comp += (v - t) + sum;
  sum = t;
}

namespace {

// log sum_a exp(x[a]) over a dense vector.
double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double log_likelihood(const ObservationHistory& history, const ContainmentMap& containment,
                      const ReadRateTable& rates) {
  if (history.n_epochs() == 0) return 0.0;
  const EmissionTables em(rates);
  const int n = em.n_locations;
  const double log_prior = -std::log(static_cast<double>(n));

  // Group readings by the latent location variable they bind to: the object's
  // container when assigned, otherwise the tag itself. Group key: containers
  // are [0, C), unassigned object o is C + o.
  const int n_groups = containment.n_containers + history.n_objects;
  std::vector<std::vector<std::pair<Epoch, LocationId>>> group_reads(n_groups);
  std::vector<int> group_tags(n_groups, 0);  // tag-location variables tied to the group
  for (int c = 0; c < containment.n_containers; ++c) group_tags[c] = 1;
  for (int o = 0; o < history.n_objects; ++o) {
    int32_t c = o < containment.n_objects() ? containment.container_of[o] : kNoContainer;
    if (c == kNoContainer)
      group_tags[containment.n_containers + o] = 1;
    else
      ++group_tags[c];
  }
  for (const Reading& x : history.container_reads)
    group_reads[x.tag].push_back({x.t, x.reader});
  for (const Reading& y : history.object_reads) {
    int32_t c = y.tag < containment.n_objects() ? containment.container_of[y.tag] : kNoContainer;
    int g = c == kNoContainer ? containment.n_containers + y.tag : c;
    group_reads[g].push_back({y.t, y.reader});
  }

  NeumaierSum total;
  std::vector<double> ll(n);
  for (int g = 0; g < n_groups; ++g) {
    if (group_tags[g] == 0) continue;
    auto& reads = group_reads[g];
    std::sort(reads.begin(), reads.end());
    const double m = static_cast<double>(group_tags[g]);
    // Baseline: every bound tag missed by every reader this epoch.
    for (int a = 0; a < n; ++a) ll[a] = m * em.base_miss[a];
    const double silent_term = log_sum_exp(ll) + log_prior;

    Epoch active_epochs = 0;
    size_t i = 0;
    while (i < reads.size()) {
      size_t j = i;
      while (j < reads.size() && reads[j].first == reads[i].first) ++j;
      for (int a = 0; a < n; ++a) ll[a] = m * em.base_miss[a];
      for (size_t k = i; k < j; ++k) {
        const double* gain = &em.read_gain[static_cast<size_t>(reads[k].second) * n];
        for (int a = 0; a < n; ++a) ll[a] += gain[a];
      }
      total.add(log_sum_exp(ll) + log_prior);
      ++active_epochs;
      i = j;
    }
    total.add(static_cast<double>(history.n_epochs() - active_epochs) * silent_term);
  }
  return total.value();
}

SampleResult sample_trace(const ReadRateTable& rates, const ContainmentMap& containment,
                          Epoch n_epochs, uint64_t seed) {
  const int n = rates.n_locations();
  const int n_containers = containment.n_containers;
  const int n_objects = containment.n_objects();
  if (n <= 0) throw std::invalid_argument("sample_trace needs at least one location");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> loc_dist(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double kMoveProb = 0.01;

  SampleResult out;
  out.history.t_begin = 0;
  out.history.t_end = n_epochs - 1;
  out.history.n_locations = n;
  out.history.n_containers = n_containers;
  out.history.n_objects = n_objects;
  out.truth.container_location.resize(n_containers);
  out.truth.object_location.resize(n_objects);
  out.truth.object_container.resize(n_objects);

  std::vector<LocationId> c_loc(n_containers), free_loc(n_objects);
  for (int c = 0; c < n_containers; ++c) {
    c_loc[c] = loc_dist(rng);
    out.truth.container_location[c].push_back({0, c_loc[c]});
  }
  for (int o = 0; o < n_objects; ++o) {
    out.truth.object_container[o].push_back({0, containment.container_of[o]});
    if (containment.container_of[o] == kNoContainer) {
      free_loc[o] = loc_dist(rng);
      out.truth.object_location[o].push_back({0, free_loc[o]});
    } else {
      out.truth.object_location[o].push_back({0, c_loc[containment.container_of[o]]});
    }
  }

  auto emit = [&](std::vector<Reading>& dst, TagIndex tag, Epoch t, LocationId at) {
    for (LocationId r = 0; r < n; ++r)
      if (unit(rng) < rates(r, at)) dst.push_back({t, r, tag});
  };

  for (Epoch t = 0; t < n_epochs; ++t) {
    if (t > 0) {
      for (int c = 0; c < n_containers; ++c) {
        if (unit(rng) < kMoveProb) {
          c_loc[c] = loc_dist(rng);
          out.truth.container_location[c].push_back({t, c_loc[c]});
          for (int o = 0; o < n_objects; ++o)
            if (containment.container_of[o] == c)
              out.truth.object_location[o].push_back({t, c_loc[c]});
        }
      }
      for (int o = 0; o < n_objects; ++o) {
        if (containment.container_of[o] == kNoContainer && unit(rng) < kMoveProb) {
          free_loc[o] = loc_dist(rng);
          out.truth.object_location[o].push_back({t, free_loc[o]});
        }
      }
    }
    for (int c = 0; c < n_containers; ++c) emit(out.history.container_reads, c, t, c_loc[c]);
    for (int o = 0; o < n_objects; ++o) {
      LocationId at = containment.container_of[o] == kNoContainer
                          ? free_loc[o]
                          : c_loc[containment.container_of[o]];
      emit(out.history.object_reads, o, t, at);
    }
  }
  out.history.normalize();
  return out;
}

}  // namespace rft

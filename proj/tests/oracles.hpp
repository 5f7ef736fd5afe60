#pragma once

// Brute-force reference implementations used only by tests. Everything here
// trades speed for obviousness: probability-space products with long double,
// exhaustive enumeration, dense per-epoch scans. Production code must agree
// with these on small instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "rftrack/core.hpp"

namespace oracle {

using rft::ContainmentMap;
using rft::Epoch;
using rft::LocationId;
using rft::ObservationHistory;
using rft::ReadRateTable;
using rft::TagIndex;

struct ReadSet {
  // (kind==0 container, 1 object, tag, t) -> readers that fired
  std::map<std::tuple<int, TagIndex, Epoch>, std::vector<LocationId>> by_tag_epoch;

  explicit ReadSet(const ObservationHistory& h) {
    for (const auto& x : h.container_reads) by_tag_epoch[{0, x.tag, x.t}].push_back(x.reader);
    for (const auto& y : h.object_reads) by_tag_epoch[{1, y.tag, y.t}].push_back(y.reader);
  }
  const std::vector<LocationId>* readers(int kind, TagIndex tag, Epoch t) const {
    auto it = by_tag_epoch.find({kind, tag, t});
    return it == by_tag_epoch.end() ? nullptr : &it->second;
  }
};

// Probability that one tag at location `a` produced exactly its observed
// reader set at epoch t (product over all readers).
inline long double tag_epoch_prob(const ReadSet& rs, const ReadRateTable& rates, int kind,
                                  TagIndex tag, Epoch t, LocationId a) {
  const auto* hits = rs.readers(kind, tag, t);
  long double p = 1.0L;
  for (LocationId r = 0; r < rates.n_locations(); ++r) {
    bool read = hits && std::find(hits->begin(), hits->end(), r) != hits->end();
    p *= read ? static_cast<long double>(rates(r, a))
              : 1.0L - static_cast<long double>(rates(r, a));
  }
  return p;
}

// Exhaustive marginal log-likelihood: per latent location variable (container
// with its members, or unassigned object) and per epoch, sum the joint
// emission probability over all locations under a uniform prior.
inline double log_likelihood(const ObservationHistory& h, const ContainmentMap& cm,
                             const ReadRateTable& rates) {
  if (h.n_epochs() == 0) return 0.0;
  ReadSet rs(h);
  const int n = rates.n_locations();
  long double total = 0.0L;
  for (int c = 0; c < cm.n_containers; ++c) {
    std::vector<TagIndex> members;
    for (int o = 0; o < cm.n_objects(); ++o)
      if (cm.container_of[o] == c) members.push_back(o);
    for (Epoch t = h.t_begin; t <= h.t_end; ++t) {
      long double s = 0.0L;
      for (LocationId a = 0; a < n; ++a) {
        long double p = tag_epoch_prob(rs, rates, 0, c, t, a);
        for (TagIndex o : members) p *= tag_epoch_prob(rs, rates, 1, o, t, a);
        s += p;
      }
      total += std::log(s / n);
    }
  }
  for (int o = 0; o < h.n_objects; ++o) {
    if (o < cm.n_objects() && cm.container_of[o] != rft::kNoContainer) continue;
    for (Epoch t = h.t_begin; t <= h.t_end; ++t) {
      long double s = 0.0L;
      for (LocationId a = 0; a < n; ++a) s += tag_epoch_prob(rs, rates, 1, o, t, a);
      total += std::log(s / n);
    }
  }
  return static_cast<double>(total);
}

// Conditional location posterior of container c at epoch t given containment.
inline std::vector<double> posterior(const ObservationHistory& h, const ContainmentMap& cm,
                                     const ReadRateTable& rates, int c, Epoch t) {
  ReadSet rs(h);
  const int n = rates.n_locations();
  std::vector<long double> w(n);
  long double z = 0.0L;
  for (LocationId a = 0; a < n; ++a) {
    long double p = tag_epoch_prob(rs, rates, 0, c, t, a);
    for (int o = 0; o < cm.n_objects(); ++o)
      if (cm.container_of[o] == c) p *= tag_epoch_prob(rs, rates, 1, o, t, a);
    w[a] = p;
    z += p;
  }
  std::vector<double> q(n);
  for (LocationId a = 0; a < n; ++a) q[a] = static_cast<double>(w[a] / z);
  return q;
}

// Per-epoch containment evidence for (container c, object o): expected object
// emission log-probability under c's location posterior.
inline double evidence_point(const ObservationHistory& h, const ContainmentMap& cm,
                             const ReadRateTable& rates, int c, TagIndex o, Epoch t) {
  ReadSet rs(h);
  auto q = posterior(h, cm, rates, c, t);
  double e = 0.0;
  for (LocationId a = 0; a < rates.n_locations(); ++a) {
    double ll = static_cast<double>(std::log(tag_epoch_prob(rs, rates, 1, o, t, a)));
    e += q[a] * ll;
  }
  return e;
}

// Exhaustive best containment over all assignments (containers + none).
struct BestContainment {
  ContainmentMap map;
  double log_likelihood;
};
inline BestContainment best_containment(const ObservationHistory& h, const ReadRateTable& rates,
                                        int n_containers) {
  const int n_obj = h.n_objects;
  ContainmentMap cur = ContainmentMap::none(n_containers, n_obj);
  BestContainment best{cur, -std::numeric_limits<double>::infinity()};
  std::vector<int> choice(n_obj, -1);  // -1 none, else container
  while (true) {
    for (int o = 0; o < n_obj; ++o) cur.container_of[o] = choice[o];
    double ll = oracle::log_likelihood(h, cur, rates);
    if (ll > best.log_likelihood) {
      best.log_likelihood = ll;
      best.map = cur;
    }
    int k = 0;
    while (k < n_obj) {
      if (++choice[k] < n_containers) break;
      choice[k] = -1;
      ++k;
    }
    if (k == n_obj) break;
  }
  return best;
}

// Brute-force GLR split statistic from a dense per-epoch evidence matrix
// e[candidate][t - t0] with optional carried prefix weights. Returns the gain
// of the best split over the unsplit single-container explanation.
struct SplitResult {
  double delta;
  Epoch t_split;
  int pre, post;  // candidate indices
};
inline SplitResult best_split(const std::vector<std::vector<double>>& e, Epoch t0,
                              const std::vector<double>& carried) {
  const int nc = static_cast<int>(e.size());
  const Epoch T = static_cast<Epoch>(e[0].size());
  auto seg = [&](Epoch lo, Epoch hi, bool with_carry) {  // [lo, hi) offsets
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int c = 0; c < nc; ++c) {
      double s = with_carry && !carried.empty() ? carried[c] : 0.0;
      for (Epoch t = lo; t < hi; ++t) s += e[c][t];
      if (s > best) {
        best = s;
        arg = c;
      }
    }
    return std::pair<double, int>{best, arg};
  };
  auto [unsplit, arg_unsplit] = seg(0, T, true);
  SplitResult out{0.0, t0, arg_unsplit, arg_unsplit};
  double best = -std::numeric_limits<double>::infinity();
  for (Epoch s = 1; s < T; ++s) {  // split between s-1 and s
    auto [l, al] = seg(0, s, true);
    auto [r, ar] = seg(s, T, false);
    if (l + r > best) {
      best = l + r;
      out.t_split = t0 + s;
      out.pre = al;
      out.post = ar;
    }
  }
  out.delta = std::max(0.0, best - unsplit);
  return out;
}

// Minimal-total-byte-difference centroid over equal-length byte strings.
inline int centroid_index(const std::vector<std::vector<uint8_t>>& blobs) {
  auto dist = [](const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    size_t n = std::min(a.size(), b.size());
    size_t d = std::max(a.size(), b.size()) - n;
    for (size_t i = 0; i < n; ++i) d += a[i] != b[i];
    return d;
  };
  size_t best = SIZE_MAX;
  int arg = 0;
  for (size_t i = 0; i < blobs.size(); ++i) {
    size_t tot = 0;
    for (size_t j = 0; j < blobs.size(); ++j) tot += dist(blobs[i], blobs[j]);
    if (tot < best) {
      best = tot;
      arg = static_cast<int>(i);
    }
  }
  return arg;
}

}  // namespace oracle

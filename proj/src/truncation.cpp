#include "rftrack/truncation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rft {

std::optional<std::pair<Epoch, Epoch>> find_critical_region(const EvidenceSeries& series,
                                                            const CriticalRegionOptions& opts) {
  const int nc = static_cast<int>(series.candidates.size());
  if (nc == 0 || series.domain.empty()) return std::nullopt;

  // dense evidence over domain epochs, in domain order
  std::vector<Epoch> epochs;
  epochs.reserve(static_cast<size_t>(series.domain.size()));
  for (const auto& span : series.domain.spans())
    for (Epoch t = span.first; t <= span.second; ++t) epochs.push_back(t);
  const size_t n = epochs.size();

  std::vector<std::vector<double>> cum(nc, std::vector<double>(n + 1, 0.0));
  for (int c = 0; c < nc; ++c) {
    const auto& pe = series.candidates[c];
    size_t pi = 0;
    for (size_t i = 0; i < n; ++i) {
      double e = pe.default_value;
      if (pi < pe.points.size() && pe.points[pi].first == epochs[i]) e = pe.points[pi++].second;
      cum[c][i + 1] = cum[c][i] + e;
    }
  }

  std::optional<std::pair<Epoch, Epoch>> best;
  size_t lo = 0;
  for (size_t i = 0; i < n; ++i) {
    Epoch t = epochs[i];
    while (epochs[lo] < t - opts.window) ++lo;
    double first = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < nc; ++c) {
      double s = cum[c][i + 1] - cum[c][lo];
      if (s > first) {
        second = first;
        first = s;
      } else if (s > second) {
        second = s;
      }
    }
    if (first - second >= opts.margin) best = {t - opts.window, t};
  }
  return best;
}

CriticalRegion find_critical_regions(const InferenceResult& inference,
                                     const CriticalRegionOptions& opts) {
  CriticalRegion cr;
  const int n_objects = static_cast<int>(inference.object_domains.size());
  cr.per_object.resize(n_objects);
  for (int o = 0; o < n_objects; ++o) {
    if (inference.candidates.per_object[o].empty()) continue;
    cr.per_object[o] = find_critical_region(inference.evidence_for(o), opts);
  }
  return cr;
}

ObservationHistory truncate(const ObservationHistory& history, const CriticalRegion& cr,
                            const RecentHistory& recent, const CandidateSet& candidates) {
  // per-container union of member CRs
  std::vector<EpochSet> container_keep(history.n_containers);
  auto cr_of = [&](size_t o) -> const std::optional<std::pair<Epoch, Epoch>>* {
    return o < cr.per_object.size() ? &cr.per_object[o] : nullptr;
  };
  for (size_t o = 0; o < candidates.per_object.size(); ++o) {
    const auto* span = cr_of(o);
    if (!span || !span->has_value()) continue;
    for (int32_t c : candidates.per_object[o])
      if (c >= 0 && c < history.n_containers)
        container_keep[c].add((*span)->first, (*span)->second);
  }

  auto in_recent = [&](Epoch t) { return t >= recent.t_begin && t <= recent.t_end; };

  ObservationHistory out;
  out.n_locations = history.n_locations;
  out.n_containers = history.n_containers;
  out.n_objects = history.n_objects;
  for (const Reading& x : history.container_reads)
    if (in_recent(x.t) || container_keep[x.tag].contains(x.t)) out.container_reads.push_back(x);
  for (const Reading& y : history.object_reads) {
    bool keep = in_recent(y.t);
    if (!keep) {
      const auto* span = cr_of(static_cast<size_t>(y.tag));
      keep = span && span->has_value() && y.t >= (*span)->first && y.t <= (*span)->second;
    }
    if (keep) out.object_reads.push_back(y);
  }

  Epoch lo = recent.t_begin;
  for (const auto& span : cr.per_object)
    if (span.has_value()) lo = std::min(lo, span->first);
  out.t_begin = std::max(history.t_begin, lo);
  out.t_end = history.t_end;
  out.normalize();
  return out;
}

CollapsedState collapse(const WeightTable& weights, Epoch watermark,
                        std::span<const Epoch> per_object_watermark) {
  CollapsedState out;
  out.per_object.reserve(weights.per_object.size());
  for (size_t o = 0; o < weights.per_object.size(); ++o) {
    CollapsedObjectState s;
    s.object = static_cast<int32_t>(o);
    s.weights = weights.per_object[o];
    s.watermark = o < per_object_watermark.size() ? per_object_watermark[o] : watermark;
    out.per_object.push_back(std::move(s));
  }
  return out;
}

void add_weights(std::vector<std::pair<int32_t, double>>& into,
                 std::span<const std::pair<int32_t, double>> from) {
  for (const auto& [c, w] : from) {
    auto it = std::lower_bound(into.begin(), into.end(), c,
                               [](const auto& p, int32_t id) { return p.first < id; });
    if (it != into.end() && it->first == c)
      it->second += w;
    else
      into.insert(it, {c, w});
  }
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct ByteReader {
  std::span<const uint8_t> b;
  size_t pos = 0;
  uint32_t u32() {
    if (pos + 4 > b.size()) throw std::invalid_argument("truncated collapsed-state record");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    if (pos + 8 > b.size()) throw std::invalid_argument("truncated collapsed-state record");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  bool done() const { return pos == b.size(); }
};

}  // namespace

std::vector<uint8_t> encode_collapsed(const CollapsedState& state, const TagRegistry& tags) {
  std::vector<uint8_t> out;
  for (const auto& s : state.per_object) {
    put_u64(out, tags.external(TagKind::Object, s.object));
    put_u64(out, static_cast<uint64_t>(s.watermark));
    put_u32(out, static_cast<uint32_t>(s.weights.size()));
    for (const auto& [c, w] : s.weights) {
      put_u64(out, tags.external(TagKind::Container, c));
      put_f64(out, w);
    }
  }
  return out;
}

CollapsedState decode_collapsed(std::span<const uint8_t> bytes, TagRegistry& tags) {
  CollapsedState out;
  ByteReader rd{bytes};
  while (!rd.done()) {
    CollapsedObjectState s;
    uint64_t oid = rd.u64();
    if (kind_of(oid) != TagKind::Object)
      throw std::invalid_argument("collapsed-state record does not start with an object id");
    s.object = tags.intern(oid);
    s.watermark = static_cast<Epoch>(rd.u64());
    uint32_t n = rd.u32();
    s.weights.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
      uint64_t cid = rd.u64();
      double w = rd.f64();
      s.weights.push_back({tags.intern(cid), w});
    }
    std::sort(s.weights.begin(), s.weights.end());
    out.per_object.push_back(std::move(s));
  }
  return out;
}

std::string collapsed_csv(const CollapsedState& state, const TagRegistry& tags) {
  std::ostringstream os;
  os << "object_id,container_id,weight,watermark\n";
  os.precision(17);
  for (const auto& s : state.per_object)
    for (const auto& [c, w] : s.weights)
      os << tags.external(TagKind::Object, s.object) << ','
         << tags.external(TagKind::Container, c) << ',' << w << ',' << s.watermark << '\n';
  return os.str();
}

}  // namespace rft

#include "rftrack/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace rft {

// ---------------------------------------------------------------- EpochSet

EpochSet EpochSet::range(Epoch lo, Epoch hi) {
  EpochSet s;
  if (lo <= hi) s.spans_.push_back({lo, hi});
  return s;
}

void EpochSet::add(Epoch lo, Epoch hi) {
  if (hi < lo) return;
  std::vector<std::pair<Epoch, Epoch>> out;
  out.reserve(spans_.size() + 1);
  size_t i = 0;
  while (i < spans_.size() && spans_[i].second < lo - 1) out.push_back(spans_[i++]);
  while (i < spans_.size() && spans_[i].first <= hi + 1) {
    lo = std::min(lo, spans_[i].first);
    hi = std::max(hi, spans_[i].second);
    ++i;
  }
  out.push_back({lo, hi});
  while (i < spans_.size()) out.push_back(spans_[i++]);
  spans_ = std::move(out);
}

void EpochSet::clip_below(Epoch lo) {
  std::vector<std::pair<Epoch, Epoch>> out;
  for (auto& s : spans_) {
    if (s.second < lo) continue;
    out.push_back({std::max(s.first, lo), s.second});
  }
  spans_ = std::move(out);
}

bool EpochSet::contains(Epoch t) const {
  auto it = std::upper_bound(spans_.begin(), spans_.end(), t,
                             [](Epoch x, const auto& s) { return x < s.first; });
  return it != spans_.begin() && std::prev(it)->second >= t;
}

int64_t EpochSet::size() const {
  int64_t n = 0;
  for (auto& s : spans_) n += s.second - s.first + 1;
  return n;
}

int64_t EpochSet::count_leq(Epoch t) const {
  int64_t n = 0;
  for (auto& s : spans_) {
    if (s.first > t) break;
    n += std::min(s.second, t) - s.first + 1;
  }
  return n;
}

// ---------------------------------------------------------- build_candidates

namespace {

// Co-location counts per object within two windows, ranked best-first
// ((-count, container), so ties break toward smaller ids). The first window
// is anchored at each object's own first reading — objects enter the trace
// at different times, and the entry phase (dock/conveyor co-movement) is
// where co-location is most discriminative. The recent window is anchored at
// the trace end. The windows are ranked separately: steady-state counts from
// a shared shelf would otherwise drown out the brief but decisive entry
// counts of the true container.
struct RankedColocation {
  std::vector<std::vector<std::pair<int, int32_t>>> first, recent;
};

RankedColocation ranked_colocation(const ObservationHistory& history,
                                   const CandidateOptions& opts) {
  const Epoch recent_begin = history.t_end - opts.recent_window + 1;

  std::vector<Epoch> first_seen(history.n_objects, std::numeric_limits<Epoch>::max());
  for (const Reading& y : history.object_reads) {
    auto& f = first_seen[y.tag];
    f = std::min(f, y.t);
  }

  // (epoch, reader) -> containers detected there
  std::unordered_map<int64_t, std::vector<int32_t>> by_cell;
  auto cell = [&](Epoch t, LocationId r) {
    return t * static_cast<int64_t>(history.n_locations) + r;
  };
  for (const Reading& x : history.container_reads)
    by_cell[cell(x.t, x.reader)].push_back(x.tag);

  std::vector<std::unordered_map<int32_t, int>> cnt_first(history.n_objects);
  std::vector<std::unordered_map<int32_t, int>> cnt_recent(history.n_objects);
  for (const Reading& y : history.object_reads) {
    const bool in_first = y.t < first_seen[y.tag] + opts.first_window;
    const bool in_recent = y.t >= recent_begin;
    if (!in_first && !in_recent) continue;
    auto it = by_cell.find(cell(y.t, y.reader));
    if (it == by_cell.end()) continue;
    for (int32_t c : it->second) {
      if (in_first) ++cnt_first[y.tag][c];
      if (in_recent) ++cnt_recent[y.tag][c];
    }
  }

  RankedColocation out;
  auto rank = [&](std::vector<std::unordered_map<int32_t, int>>& counts,
                  std::vector<std::vector<std::pair<int, int32_t>>>& ranked) {
    ranked.resize(history.n_objects);
    for (int o = 0; o < history.n_objects; ++o) {
      ranked[o].reserve(counts[o].size());
      for (auto& [c, n] : counts[o]) ranked[o].push_back({-n, c});
      std::sort(ranked[o].begin(), ranked[o].end());
    }
  };
  rank(cnt_first, out.first);
  rank(cnt_recent, out.recent);
  return out;
}

}  // namespace

CandidateSet build_candidates(const ObservationHistory& history, const CandidateOptions& opts) {
  auto ranked = ranked_colocation(history, opts);
  CandidateSet out;
  out.per_object.resize(history.n_objects);
  for (int o = 0; o < history.n_objects; ++o) {
    auto& dst = out.per_object[o];
    for (auto* src : {&ranked.first[o], &ranked.recent[o]}) {
      const auto take = std::min<size_t>(src->size(), static_cast<size_t>(opts.k));
      for (size_t i = 0; i < take; ++i) dst.push_back((*src)[i].second);
    }
    std::sort(dst.begin(), dst.end());
    dst.erase(std::unique(dst.begin(), dst.end()), dst.end());
  }
  return out;
}

ContainmentMap initial_containment(const ObservationHistory& history,
                                   const CandidateOptions& opts) {
  auto ranked = ranked_colocation(history, opts);
  ContainmentMap cm;
  cm.n_containers = history.n_containers;
  cm.container_of.assign(history.n_objects, kNoContainer);
  for (int o = 0; o < history.n_objects; ++o) {
    // Entry-phase co-location wins when available; steady-state otherwise.
    if (!ranked.first[o].empty())
      cm.container_of[o] = ranked.first[o].front().second;
    else if (!ranked.recent[o].empty())
      cm.container_of[o] = ranked.recent[o].front().second;
  }
  return cm;
}

// ------------------------------------------------------------------- engine

namespace {

struct SubModel {
  int S = 0;
  std::vector<LocationId> support;  // sub -> global
  std::vector<int> sub_of;          // global -> sub, -1 outside
  std::vector<double> log_miss, gain;  // S x S, row = reader
  std::vector<double> base_miss;       // S

  double dot_gain(std::span<const double> q, int r_sub) const {
    const double* g = &gain[static_cast<size_t>(r_sub) * S];
    double s = 0;
    for (int a = 0; a < S; ++a) s += q[a] * g[a];
    return s;
  }
};

SubModel build_submodel(const ReadRateTable& rates, std::vector<LocationId> support,
                        int n_locations) {
  if (support.empty()) {
    support.resize(n_locations);
    for (int i = 0; i < n_locations; ++i) support[i] = i;
  }
  SubModel m;
  m.S = static_cast<int>(support.size());
  m.support = std::move(support);
  m.sub_of.assign(std::max(n_locations, rates.n_locations()), -1);
  for (int i = 0; i < m.S; ++i) {
    LocationId g = m.support[i];
    if (g < 0 || g >= rates.n_locations())
      throw std::invalid_argument("support location outside the rate table");
    m.sub_of[g] = i;
  }
  m.log_miss.resize(static_cast<size_t>(m.S) * m.S);
  m.gain.resize(static_cast<size_t>(m.S) * m.S);
  m.base_miss.assign(m.S, 0.0);
  for (int r = 0; r < m.S; ++r)
    for (int a = 0; a < m.S; ++a) {
      double p = rates(m.support[r], m.support[a]);
      size_t i = static_cast<size_t>(r) * m.S + a;
      m.log_miss[i] = std::log1p(-p);
      m.gain[i] = std::log(p) - m.log_miss[i];
      m.base_miss[a] += m.log_miss[i];
    }
  return m;
}

struct TagReads {
  std::vector<Epoch> t;
  std::vector<int> r;  // sub reader index, grouped by epoch in input order
  size_t size() const { return t.size(); }
};

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

struct InferenceResult::Internals {
  SubModel sub;
  std::vector<TagReads> object_reads;  // filtered to domains
  CarriedWeights carried;
  Epoch t_begin = 0, t_end = -1;
};

namespace {

struct Engine {
  SubModel sub;
  Epoch t_begin, t_end;
  int n_containers, n_objects;
  std::vector<TagReads> c_reads, o_reads;
  std::vector<EpochSet> domains;
  CandidateSet cands;
  CarriedWeights carried;
  bool memorization = true;
  double log_prior = 0;

  struct CState {
    std::vector<int32_t> members;  // sorted object ids
    bool dirty = true;
    int64_t version = 0;
    PosteriorTable::PerContainer post;
    double ll_contribution = 0;
  };
  std::vector<CState> cs;
  std::vector<int32_t> assignment;  // current containment
  // default-row cache keyed by member count: (q, qb, lse_term)
  struct DefaultRow {
    std::vector<double> q;
    double qb = 0, lse = 0;
  };
  std::unordered_map<int, DefaultRow> defaults;
  std::vector<std::vector<double>> w_cache;
  std::vector<std::vector<int64_t>> w_cache_version;

  Engine(const ObservationHistory& history, const ReadRateTable& rates,
         const ContainmentMap& init, const EmOptions& opts)
      : sub(build_submodel(rates, opts.support, history.n_locations)),
        t_begin(history.t_begin),
        t_end(history.t_end),
        n_containers(history.n_containers),
        n_objects(history.n_objects) {
    memorization = opts.memorization;
    log_prior = -std::log(static_cast<double>(sub.S));
    domains = opts.object_domains;
    if (domains.empty())
      domains.assign(n_objects, EpochSet::range(t_begin, t_end));
    if (static_cast<int>(domains.size()) != n_objects)
      throw std::invalid_argument("one domain per object required");
    carried = opts.carried;
    if (!carried.empty() && static_cast<int>(carried.size()) != n_objects)
      throw std::invalid_argument("one carried-weight list per object required");

    auto map_reader = [&](LocationId g) {
      int r = g >= 0 && g < static_cast<int>(sub.sub_of.size()) ? sub.sub_of[g] : -1;
      if (r < 0) throw std::invalid_argument("reading from a reader outside the support");
      return r;
    };
    c_reads.resize(n_containers);
    for (const Reading& x : history.container_reads) {
      c_reads[x.tag].t.push_back(x.t);
      c_reads[x.tag].r.push_back(map_reader(x.reader));
    }
    o_reads.resize(n_objects);
    for (const Reading& y : history.object_reads) {
      if (!domains[y.tag].contains(y.t)) continue;
      o_reads[y.tag].t.push_back(y.t);
      o_reads[y.tag].r.push_back(map_reader(y.reader));
    }

    cands = opts.candidates;
    if (cands.empty()) cands = build_candidates(history, opts.candidate_opts);
    if (static_cast<int>(cands.per_object.size()) != n_objects)
      throw std::invalid_argument("one candidate list per object required");
    // the initial assignment and carried containers are always candidates
    assignment.assign(n_objects, kNoContainer);
    for (int o = 0; o < n_objects; ++o) {
      auto& cl = cands.per_object[o];
      if (o < init.n_objects() && init.container_of[o] != kNoContainer)
        cl.push_back(init.container_of[o]);
      if (!carried.empty())
        for (auto& [c, w] : carried[o]) cl.push_back(c);
      std::sort(cl.begin(), cl.end());
      cl.erase(std::unique(cl.begin(), cl.end()), cl.end());
      if (o < init.n_objects()) assignment[o] = init.container_of[o];
    }

    cs.resize(n_containers);
    for (int o = 0; o < n_objects; ++o)
      if (assignment[o] != kNoContainer) cs[assignment[o]].members.push_back(o);
    w_cache.resize(n_objects);
    w_cache_version.resize(n_objects);
    for (int o = 0; o < n_objects; ++o) {
      w_cache[o].assign(cands.per_object[o].size(), 0.0);
      w_cache_version[o].assign(cands.per_object[o].size(), -1);
    }
  }

  const DefaultRow& default_row(int member_count) {
    auto it = defaults.find(member_count);
    if (it != defaults.end()) return it->second;
    DefaultRow row;
    row.q.resize(sub.S);
    std::vector<double> ll(sub.S);
    for (int a = 0; a < sub.S; ++a) ll[a] = (1.0 + member_count) * sub.base_miss[a];
    double lse = log_sum_exp(ll);
    for (int a = 0; a < sub.S; ++a) row.q[a] = std::exp(ll[a] - lse);
    row.qb = 0;
    for (int a = 0; a < sub.S; ++a) row.qb += row.q[a] * sub.base_miss[a];
    row.lse = lse + log_prior;
    return defaults.emplace(member_count, std::move(row)).first->second;
  }

  // Recompute posterior rows + likelihood contribution for container c.
  void refresh_container(int c) {
    CState& st = cs[c];
    auto& post = st.post;
    const int m = static_cast<int>(st.members.size());
    post.member_count = m;
    const DefaultRow& def = default_row(m);
    post.default_q = def.q;
    post.default_qb = def.qb;

    // merged reading stream of the container and its members
    std::vector<std::pair<Epoch, int>> stream;
    stream.reserve(c_reads[c].size());
    for (size_t i = 0; i < c_reads[c].size(); ++i)
      stream.push_back({c_reads[c].t[i], c_reads[c].r[i]});
    for (int32_t o : st.members)
      for (size_t i = 0; i < o_reads[o].size(); ++i)
        stream.push_back({o_reads[o].t[i], o_reads[o].r[i]});
    std::sort(stream.begin(), stream.end());

    post.active.clear();
    post.probs.clear();
    post.active_qb.clear();
    NeumaierSum ll_sum;
    std::vector<double> ll(sub.S);
    size_t i = 0;
    while (i < stream.size()) {
      size_t j = i;
      while (j < stream.size() && stream[j].first == stream[i].first) ++j;
      for (int a = 0; a < sub.S; ++a) ll[a] = (1.0 + m) * sub.base_miss[a];
      for (size_t k = i; k < j; ++k) {
        const double* g = &sub.gain[static_cast<size_t>(stream[k].second) * sub.S];
        for (int a = 0; a < sub.S; ++a) ll[a] += g[a];
      }
      double lse = log_sum_exp(ll);
      ll_sum.add(lse + log_prior);
      post.active.push_back(stream[i].first);
      size_t base = post.probs.size();
      post.probs.resize(base + sub.S);
      double qb = 0;
      for (int a = 0; a < sub.S; ++a) {
        double q = std::exp(ll[a] - lse);
        post.probs[base + a] = q;
        qb += q * sub.base_miss[a];
      }
      post.active_qb.push_back(qb);
      i = j;
    }
    Epoch n_epochs = t_end - t_begin + 1;
    Epoch silent = n_epochs - static_cast<Epoch>(post.active.size());
    ll_sum.add(static_cast<double>(silent) * def.lse);
    st.ll_contribution = ll_sum.value();
    st.dirty = false;
  }

  void e_step_pass() {
    for (int c = 0; c < n_containers; ++c)
      if (cs[c].dirty || !memorization) refresh_container(c);
  }

  // Own-location likelihood term for an unassigned object.
  double none_object_term(int o) {
    const DefaultRow& def = default_row(0);
    NeumaierSum s;
    std::vector<double> ll(sub.S);
    const TagReads& tr = o_reads[o];
    size_t i = 0;
    Epoch active = 0;
    while (i < tr.size()) {
      size_t j = i;
      while (j < tr.size() && tr.t[j] == tr.t[i]) ++j;
      for (int a = 0; a < sub.S; ++a) ll[a] = sub.base_miss[a];
      for (size_t k = i; k < j; ++k) {
        const double* g = &sub.gain[static_cast<size_t>(tr.r[k]) * sub.S];
        for (int a = 0; a < sub.S; ++a) ll[a] += g[a];
      }
      s.add(log_sum_exp(ll) + log_prior);
      ++active;
      i = j;
    }
    s.add(static_cast<double>(domains[o].size() - active) * def.lse);
    return s.value();
  }

  double objective() {
    NeumaierSum s;
    for (int c = 0; c < n_containers; ++c) s.add(cs[c].ll_contribution);
    for (int o = 0; o < n_objects; ++o)
      if (assignment[o] == kNoContainer) s.add(none_object_term(o));
    if (!carried.empty())
      for (int o = 0; o < n_objects; ++o) {
        if (assignment[o] == kNoContainer) continue;
        for (auto& [c, w] : carried[o])
          if (c == assignment[o]) s.add(w);
      }
    return s.value();
  }

  double carried_for(int o, int32_t c) const {
    if (carried.empty()) return 0.0;
    for (auto& [cc, w] : carried[o])
      if (cc == c) return w;
    return 0.0;
  }

  // Evidence total (and optionally the explicit points) for pair (o, c).
  double pair_evidence(int o, int32_t c, std::vector<std::pair<Epoch, double>>* points) {
    const CState& st = cs[c];
    const auto& post = st.post;
    const EpochSet& dom = domains[o];
    const TagReads& tr = o_reads[o];

    NeumaierSum total;
    total.add(carried_for(o, c));
    int64_t n_explicit = 0;
    size_t ia = 0, io = 0;
    while (ia < post.active.size() || io < tr.size()) {
      Epoch t;
      bool from_active = false, from_reads = false;
      if (ia < post.active.size() && (io >= tr.size() || post.active[ia] <= tr.t[io])) {
        t = post.active[ia];
        from_active = true;
      } else {
        t = tr.t[io];
      }
      if (io < tr.size() && tr.t[io] == t) from_reads = true;

      size_t io_end = io;
      if (from_reads)
        while (io_end < tr.size() && tr.t[io_end] == t) ++io_end;

      if (!dom.contains(t)) {
        if (from_active) ++ia;
        io = io_end;
        continue;
      }
      std::span<const double> q =
          from_active ? std::span<const double>(&post.probs[ia * sub.S], sub.S)
                      : std::span<const double>(post.default_q);
      double e = from_active ? post.active_qb[ia] : post.default_qb;
      if (from_reads)
        for (size_t k = io; k < io_end; ++k) e += sub.dot_gain(q, tr.r[k]);
      total.add(e);
      ++n_explicit;
      if (points) points->push_back({t, e});
      if (from_active) ++ia;
      io = io_end;
    }
    total.add(static_cast<double>(dom.size() - n_explicit) * post.default_qb);
    return total.value();
  }

  void m_step_pass(WeightTable& weights) {
    weights.per_object.assign(n_objects, {});
    for (int o = 0; o < n_objects; ++o) {
      auto& cl = cands.per_object[o];
      auto& out = weights.per_object[o];
      out.reserve(cl.size());
      for (size_t s = 0; s < cl.size(); ++s) {
        int32_t c = cl[s];
        double w;
        if (memorization && w_cache_version[o][s] == cs[c].version) {
          w = w_cache[o][s];
        } else {
          w = pair_evidence(o, c, nullptr);
          w_cache[o][s] = w;
          w_cache_version[o][s] = cs[c].version;
        }
        out.push_back({c, w});
      }
    }
  }

  static ContainmentMap assign_from(const WeightTable& weights, int n_containers) {
    ContainmentMap cm;
    cm.n_containers = n_containers;
    cm.container_of.assign(weights.per_object.size(), kNoContainer);
    for (size_t o = 0; o < weights.per_object.size(); ++o) {
      double best = -std::numeric_limits<double>::infinity();
      int32_t arg = kNoContainer;
      for (auto& [c, w] : weights.per_object[o])
        if (w > best || (w == best && arg != kNoContainer && c < arg)) {
          best = w;
          arg = c;
        }
      cm.container_of[o] = arg;
    }
    return cm;
  }

  // Apply a new assignment; marks containers with changed member sets dirty.
  void apply_assignment(const std::vector<int32_t>& next) {
    std::vector<std::vector<int32_t>> members(n_containers);
    for (int o = 0; o < n_objects; ++o)
      if (next[o] != kNoContainer) members[next[o]].push_back(o);
    for (int c = 0; c < n_containers; ++c) {
      if (members[c] != cs[c].members) {
        cs[c].members = std::move(members[c]);
        cs[c].dirty = true;
        ++cs[c].version;
      }
    }
    assignment = next;
  }

  PosteriorTable posterior_table() const {
    PosteriorTable t;
    t.support = sub.support;
    t.per_container.resize(n_containers);
    for (int c = 0; c < n_containers; ++c) t.per_container[c] = cs[c].post;
    return t;
  }
};

}  // namespace

std::span<const double> PosteriorTable::at(int32_t c, Epoch t) const {
  const PerContainer& pc = per_container.at(static_cast<size_t>(c));
  auto it = std::lower_bound(pc.active.begin(), pc.active.end(), t);
  if (it != pc.active.end() && *it == t) {
    size_t row = static_cast<size_t>(it - pc.active.begin());
    return {&pc.probs[row * support.size()], support.size()};
  }
  return {pc.default_q.data(), pc.default_q.size()};
}

PosteriorTable e_step(const ObservationHistory& history, const ReadRateTable& rates,
                      const ContainmentMap& containment, const EmOptions& opts) {
  Engine eng(history, rates, containment, opts);
  eng.e_step_pass();
  return eng.posterior_table();
}

WeightTable m_step_weights(const ObservationHistory& history, const ReadRateTable& rates,
                           const PosteriorTable& posterior, const EmOptions& opts) {
  // Rebuild an engine whose containers carry the given posterior rows.
  ContainmentMap none = ContainmentMap::none(history.n_containers, history.n_objects);
  Engine eng(history, rates, none, opts);
  for (int c = 0; c < eng.n_containers; ++c) {
    eng.cs[c].post = posterior.per_container.at(static_cast<size_t>(c));
    eng.cs[c].dirty = false;
  }
  WeightTable w;
  eng.memorization = false;
  eng.m_step_pass(w);
  return w;
}

ContainmentMap m_step_assign(const WeightTable& weights, int n_containers) {
  return Engine::assign_from(weights, n_containers);
}

InferenceResult run_em(const ObservationHistory& history, const ReadRateTable& rates,
                       const ContainmentMap& init, const EmOptions& opts) {
  Engine eng(history, rates, init, opts);
  InferenceResult res;
  WeightTable weights;
  for (int it = 0; it < opts.max_iters; ++it) {
    eng.e_step_pass();
    res.iteration_objective.push_back(eng.objective());
    eng.m_step_pass(weights);
    ContainmentMap next = Engine::assign_from(weights, eng.n_containers);
    res.iterations = it + 1;
    if (next.container_of == eng.assignment) {
      res.converged = true;
      break;
    }
    eng.apply_assignment(next.container_of);
  }
  if (!res.converged) eng.e_step_pass();  // keep posterior in sync with the assignment

  res.containment.n_containers = eng.n_containers;
  res.containment.container_of = eng.assignment;
  res.posterior = eng.posterior_table();
  res.weights = std::move(weights);
  res.candidates = eng.cands;
  res.object_domains = eng.domains;
  res.final_objective =
      res.iteration_objective.empty() ? eng.objective() : res.iteration_objective.back();

  auto internals = std::make_shared<InferenceResult::Internals>();
  internals->sub = std::move(eng.sub);
  internals->object_reads = std::move(eng.o_reads);
  internals->carried = std::move(eng.carried);
  internals->t_begin = eng.t_begin;
  internals->t_end = eng.t_end;
  res.internals = std::move(internals);
  return res;
}

void EvidenceSeries::restrict_below(Epoch lo) {
  if (domain.empty() || lo <= domain.first()) return;
  domain.clip_below(lo);
  for (PairEvidence& pe : candidates) {
    pe.carried = 0.0;
    std::erase_if(pe.points, [&](const auto& p) { return p.first < lo; });
    NeumaierSum total;
    for (auto& [t, e] : pe.points) total.add(e);
    total.add(pe.default_value *
              static_cast<double>(domain.size() - static_cast<int64_t>(pe.points.size())));
    pe.total = total.value();
  }
}

EvidenceSeries InferenceResult::evidence_for(int32_t object) const {
  if (!internals) throw std::logic_error("inference result has no replay state");
  const Internals& in = *internals;
  EvidenceSeries series;
  series.object = object;
  series.domain = object_domains.at(static_cast<size_t>(object));
  const auto& cl = candidates.per_object.at(static_cast<size_t>(object));
  const TagReads& tr = in.object_reads[object];
  const int S = in.sub.S;

  for (int32_t c : cl) {
    const auto& post = posterior.per_container.at(static_cast<size_t>(c));
    PairEvidence pe;
    pe.container = c;
    pe.default_value = post.default_qb;
    if (!in.carried.empty())
      for (auto& [cc, w] : in.carried[object])
        if (cc == c) pe.carried = w;

    NeumaierSum total;
    total.add(pe.carried);
    size_t ia = 0, io = 0;
    int64_t n_explicit = 0;
    while (ia < post.active.size() || io < tr.size()) {
      Epoch t;
      bool from_active = false, from_reads = false;
      if (ia < post.active.size() && (io >= tr.size() || post.active[ia] <= tr.t[io])) {
        t = post.active[ia];
        from_active = true;
      } else {
        t = tr.t[io];
      }
      if (io < tr.size() && tr.t[io] == t) from_reads = true;
      size_t io_end = io;
      if (from_reads)
        while (io_end < tr.size() && tr.t[io_end] == t) ++io_end;
      if (!series.domain.contains(t)) {
        if (from_active) ++ia;
        io = io_end;
        continue;
      }
      std::span<const double> q = from_active
                                      ? std::span<const double>(&post.probs[ia * S], S)
                                      : std::span<const double>(post.default_q);
      double e = from_active ? post.active_qb[ia] : post.default_qb;
      if (from_reads)
        for (size_t k = io; k < io_end; ++k) e += in.sub.dot_gain(q, tr.r[k]);
      pe.points.push_back({t, e});
      total.add(e);
      ++n_explicit;
      if (from_active) ++ia;
      io = io_end;
    }
    total.add(static_cast<double>(series.domain.size() - n_explicit) * pe.default_value);
    pe.total = total.value();
    series.candidates.push_back(std::move(pe));
  }
  return series;
}

}  // namespace rft

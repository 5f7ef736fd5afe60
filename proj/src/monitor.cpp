#include "rftrack/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rft {

namespace {

constexpr double kNoSensor = std::numeric_limits<double>::quiet_NaN();

uint64_t sensor_key(LocationId loc, Epoch t) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(loc)) << 32) |
         static_cast<uint32_t>(t);
}

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void push_i64(std::vector<uint8_t>& out, int64_t v) {
  auto u = static_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(u >> (8 * i)));
}
void push_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  push_u32(out, bits);
}

struct ByteReader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
  void need(size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw std::runtime_error(std::string("malformed ") + what + ": truncated");
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  int64_t i64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return static_cast<int64_t>(v);
  }
  float f32(const char* what) {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }
};

}  // namespace

// --- TemperatureStream ------------------------------------------------------

TemperatureStream::TemperatureStream(int n_locations)
    : baseline_(static_cast<size_t>(n_locations), kNoSensor) {}

void TemperatureStream::set_baseline(LocationId loc, double temp) {
  baseline_.at(static_cast<size_t>(loc)) = temp;
}

void TemperatureStream::set(LocationId loc, Epoch t, double temp) {
  overrides_[sensor_key(loc, t)] = temp;
}

void TemperatureStream::mark_missing(LocationId loc, Epoch t) {
  overrides_[sensor_key(loc, t)] = kNoSensor;
}

std::optional<double> TemperatureStream::at(LocationId loc, Epoch t) const {
  if (loc < 0 || static_cast<size_t>(loc) >= baseline_.size()) return std::nullopt;
  auto it = overrides_.find(sensor_key(loc, t));
  double v = it != overrides_.end() ? it->second : baseline_[static_cast<size_t>(loc)];
  if (std::isnan(v)) return std::nullopt;
  return v;
}

TemperatureStream TemperatureStream::for_deployment(const SupplyChainConfig& cfg,
                                                    int n_locations) {
  TemperatureStream s(n_locations);
  for (LocationId l = 0; l < n_locations; ++l) s.set_baseline(l, temperature_at(cfg, l));
  return s;
}

// --- ObjectQueryState image -------------------------------------------------

std::vector<uint8_t> ObjectQueryState::image() const {
  std::vector<uint8_t> out;
  out.reserve(17 + 4 * temps.size());
  push_u32(out, tag_id);
  out.push_back(static_cast<uint8_t>(state));
  push_i64(out, exposure_start);
  push_u32(out, static_cast<uint32_t>(temps.size()));
  for (float v : temps) push_f32(out, v);
  return out;
}

ObjectQueryState ObjectQueryState::from_image(std::span<const uint8_t> bytes) {
  ByteReader r{bytes};
  ObjectQueryState st;
  st.tag_id = r.u32("query-state image");
  uint8_t tag = r.u8("query-state image");
  if (tag > 1) throw std::runtime_error("malformed query-state image: bad automaton state");
  st.state = static_cast<AutomatonState>(tag);
  st.exposure_start = r.i64("query-state image");
  uint32_t n = r.u32("query-state image");
  if (bytes.size() != 17 + 4 * static_cast<size_t>(n))
    throw std::runtime_error("malformed query-state image: length mismatch");
  st.temps.reserve(n);
  for (uint32_t i = 0; i < n; ++i) st.temps.push_back(r.f32("query-state image"));
  return st;
}

// --- Automaton --------------------------------------------------------------

StepResult step(ObjectQueryState& state, Epoch t, LocationId location, int32_t container,
                bool container_is_freezer, const TemperatureStream& temps,
                const MonitorOptions& opts) {
  StepResult res;

  bool condition = false;
  double temp = 0.0;
  if (location != kNoLocation) {
    std::optional<double> reading = temps.at(location, t);
    if (!reading.has_value()) {
      res.data_gap = true;  // sensor silent: treat as unexposed, but count it
    } else {
      temp = *reading;
      const bool outside_freezer = container == kNoContainer || !container_is_freezer;
      const bool warm = temp > opts.threshold_temp;
      condition = opts.query == MonitorQuery::HybridExposure ? (outside_freezer && warm) : warm;
    }
  }

  if (!condition) {
    state.state = AutomatonState::Idle;
    state.temps.clear();
    state.exposure_start = 0;
    return res;
  }

  if (state.state == AutomatonState::Idle) {
    state.state = AutomatonState::Exposed;
    state.exposure_start = t;
    state.temps.clear();
  }
  state.temps.push_back(static_cast<float>(temp));
  // One alert per episode, the moment the continuous run reaches the duration.
  if (t - state.exposure_start + 1 == opts.exposure_duration)
    res.alert = Alert{state.tag_id, t, state.temps};
  return res;
}

// --- Event-stream drivers ---------------------------------------------------

std::vector<char> cold_chain_objects(const TraceBundle& bundle) {
  const int n = bundle.tags.n_objects();
  std::vector<char> cold(static_cast<size_t>(n), 0);
  for (int o = 0; o < n; ++o) {
    for (const TimelineEntry& e : bundle.truth.object_container[static_cast<size_t>(o)]) {
      if (e.value == kNoContainer) continue;
      cold[static_cast<size_t>(o)] =
          bundle.container_is_freezer[static_cast<size_t>(e.value)] ? 1 : 0;
      break;  // the first case it was packed in decides the product class
    }
  }
  return cold;
}

std::vector<StateEvent> truth_events(const TraceBundle& bundle) {
  std::vector<StateEvent> events;
  const int n = bundle.tags.n_objects();
  for (int32_t o = 0; o < n; ++o) {
    const auto& locs = bundle.truth.object_location[static_cast<size_t>(o)];
    const auto& conts = bundle.truth.object_container[static_cast<size_t>(o)];
    size_t li = 0, ci = 0;
    LocationId loc = kNoLocation;
    int32_t cont = kNoContainer;
    while (li < locs.size() || ci < conts.size()) {
      Epoch t;
      if (ci >= conts.size() || (li < locs.size() && locs[li].from <= conts[ci].from))
        t = locs[li].from;
      else
        t = conts[ci].from;
      while (li < locs.size() && locs[li].from == t) loc = locs[li++].value;
      while (ci < conts.size() && conts[ci].from == t) cont = conts[ci++].value;
      if (events.empty() || events.back().object != o || events.back().location != loc ||
          events.back().container != cont)
        events.push_back({t, o, loc, cont});
    }
  }
  return events;
}

MonitorRun run_monitor(const TraceBundle& bundle, std::span<const StateEvent> events,
                       Epoch t_begin, Epoch t_end, const MonitorOptions& opts) {
  MonitorRun run;
  const int n = bundle.tags.n_objects();
  const std::vector<char> cold = cold_chain_objects(bundle);
  const TemperatureStream temps =
      TemperatureStream::for_deployment(bundle.config, bundle.n_locations);

  // Per-object delta sequences, time-ordered.
  std::vector<std::vector<const StateEvent*>> by_object(static_cast<size_t>(n));
  for (const StateEvent& e : events)
    if (e.object >= 0 && e.object < n) by_object[static_cast<size_t>(e.object)].push_back(&e);
  for (auto& v : by_object)
    std::stable_sort(v.begin(), v.end(),
                     [](const StateEvent* a, const StateEvent* b) { return a->t < b->t; });

  for (int32_t o = 0; o < n; ++o) {
    if (!cold[static_cast<size_t>(o)]) continue;
    ObjectQueryState st;
    st.tag_id = static_cast<uint32_t>(bundle.tags.external(TagKind::Object, o));

    const auto& evs = by_object[static_cast<size_t>(o)];
    size_t i = 0;
    LocationId loc = kNoLocation;
    int32_t cont = kNoContainer;
    for (Epoch t = t_begin; t <= t_end; ++t) {
      while (i < evs.size() && evs[i]->t <= t) {
        loc = evs[i]->location;
        cont = evs[i]->container;
        ++i;
      }
      const bool freezer =
          cont != kNoContainer && bundle.container_is_freezer[static_cast<size_t>(cont)];
      StepResult r = step(st, t, loc, cont, freezer, temps, opts);
      if (r.data_gap) ++run.data_gaps;
      if (r.alert.has_value()) run.alerts.push_back(std::move(*r.alert));
    }
    run.final_states.push_back(std::move(st));
  }
  return run;
}

ChangeScore score_alerts(std::span<const Alert> reported, std::span<const Alert> actual,
                         Epoch tolerance) {
  ChangeScore s;
  s.reported = static_cast<int>(reported.size());
  s.actual = static_cast<int>(actual.size());

  struct Pair {
    Epoch dt;
    size_t r, a;
  };
  std::vector<Pair> feasible;
  for (size_t r = 0; r < reported.size(); ++r)
    for (size_t a = 0; a < actual.size(); ++a) {
      if (reported[r].tag_id != actual[a].tag_id) continue;
      Epoch dt = std::llabs(reported[r].t_alert - actual[a].t_alert);
      if (dt <= tolerance) feasible.push_back({dt, r, a});
    }
  std::sort(feasible.begin(), feasible.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.dt, x.r, x.a) < std::tie(y.dt, y.r, y.a);
  });
  std::vector<char> r_used(reported.size(), 0), a_used(actual.size(), 0);
  for (const Pair& p : feasible) {
    if (r_used[p.r] || a_used[p.a]) continue;
    r_used[p.r] = a_used[p.a] = 1;
    ++s.matched;
  }
  s.precision = s.reported > 0 ? static_cast<double>(s.matched) / s.reported : 1.0;
  s.recall = s.actual > 0 ? static_cast<double>(s.matched) / s.actual : 1.0;
  s.f = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                       : 0.0;
  return s;
}

std::string alerts_csv(std::span<const Alert> alerts) {
  std::ostringstream out;
  out << "tag_id,t_alert,n_readings\n";
  for (const Alert& a : alerts)
    out << a.tag_id << "," << a.t_alert << "," << a.temps.size() << "\n";
  return out.str();
}

// --- Centroid sharing -------------------------------------------------------

int64_t byte_distance(std::span<const uint8_t> a, std::span<const uint8_t> b) {
  const size_t n = std::max(a.size(), b.size());
  int64_t d = 0;
  for (size_t i = 0; i < n; ++i) {
    uint8_t av = i < a.size() ? a[i] : 0;
    uint8_t bv = i < b.size() ? b[i] : 0;
    if (av != bv) ++d;
  }
  return d;
}

SharedStateBlock share(std::span<const ObjectQueryState> states) {
  SharedStateBlock block;
  if (states.empty()) return block;

  std::vector<std::vector<uint8_t>> images;
  images.reserve(states.size());
  for (const ObjectQueryState& s : states) images.push_back(s.image());

  // Centroid = smallest total distance to the rest; ties toward the smaller
  // tag id so the choice is stable regardless of input order.
  size_t best = 0;
  int64_t best_total = std::numeric_limits<int64_t>::max();
  for (size_t i = 0; i < images.size(); ++i) {
    int64_t total = 0;
    for (size_t j = 0; j < images.size(); ++j)
      if (j != i) total += byte_distance(images[i], images[j]);
    if (total < best_total ||
        (total == best_total && states[i].tag_id < states[best].tag_id)) {
      best = i;
      best_total = total;
    }
  }
  block.centroid = images[best];

  for (size_t i = 0; i < images.size(); ++i) {
    StateDelta d;
    d.tag_id = states[i].tag_id;
    d.target_len = static_cast<uint32_t>(images[i].size());
    const auto& img = images[i];
    size_t p = 0;
    while (p < img.size()) {
      uint8_t ref = p < block.centroid.size() ? block.centroid[p] : 0;
      if (img[p] == ref) {
        ++p;
        continue;
      }
      DeltaRun run;
      run.offset = static_cast<uint32_t>(p);
      while (p < img.size()) {
        uint8_t rv = p < block.centroid.size() ? block.centroid[p] : 0;
        if (img[p] == rv) break;
        run.bytes.push_back(img[p]);
        ++p;
      }
      d.runs.push_back(std::move(run));
    }
    block.deltas.push_back(std::move(d));
  }
  return block;
}

std::vector<ObjectQueryState> unshare(const SharedStateBlock& block) {
  std::vector<ObjectQueryState> out;
  if (block.centroid.empty() && block.deltas.empty()) return out;
  if (block.deltas.empty()) {
    out.push_back(ObjectQueryState::from_image(block.centroid));
    return out;
  }
  for (const StateDelta& d : block.deltas) {
    std::vector<uint8_t> img(block.centroid.begin(), block.centroid.end());
    img.resize(d.target_len, 0);
    for (const DeltaRun& run : d.runs) {
      if (static_cast<size_t>(run.offset) + run.bytes.size() > img.size())
        throw std::runtime_error("corrupt query-state delta for tag " +
                                 std::to_string(d.tag_id));
      std::copy(run.bytes.begin(), run.bytes.end(), img.begin() + run.offset);
    }
    ObjectQueryState st;
    try {
      st = ObjectQueryState::from_image(img);
    } catch (const std::exception&) {
      throw std::runtime_error("corrupt query-state delta for tag " + std::to_string(d.tag_id));
    }
    if (st.tag_id != d.tag_id)
      throw std::runtime_error("corrupt query-state delta for tag " + std::to_string(d.tag_id));
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<uint8_t> encode_block(const SharedStateBlock& block) {
  std::vector<uint8_t> out;
  push_u32(out, static_cast<uint32_t>(block.centroid.size()));
  out.insert(out.end(), block.centroid.begin(), block.centroid.end());
  push_u32(out, static_cast<uint32_t>(block.deltas.size()));
  for (const StateDelta& d : block.deltas) {
    push_u32(out, d.tag_id);
    push_u32(out, d.target_len);
    push_u32(out, static_cast<uint32_t>(d.runs.size()));
    for (const DeltaRun& r : d.runs) {
      push_u32(out, r.offset);
      push_u32(out, static_cast<uint32_t>(r.bytes.size()));
      out.insert(out.end(), r.bytes.begin(), r.bytes.end());
    }
  }
  return out;
}

SharedStateBlock decode_block(std::span<const uint8_t> bytes) {
  ByteReader r{bytes};
  SharedStateBlock block;
  uint32_t clen = r.u32("shared-state block");
  r.need(clen, "shared-state block");
  block.centroid.assign(bytes.begin() + static_cast<long>(r.pos),
                        bytes.begin() + static_cast<long>(r.pos + clen));
  r.pos += clen;
  uint32_t nd = r.u32("shared-state block");
  for (uint32_t i = 0; i < nd; ++i) {
    StateDelta d;
    d.tag_id = r.u32("shared-state block");
    d.target_len = r.u32("shared-state block");
    uint32_t nr = r.u32("shared-state block");
    for (uint32_t k = 0; k < nr; ++k) {
      DeltaRun run;
      run.offset = r.u32("shared-state block");
      uint32_t len = r.u32("shared-state block");
      r.need(len, "shared-state block");
      run.bytes.assign(bytes.begin() + static_cast<long>(r.pos),
                       bytes.begin() + static_cast<long>(r.pos + len));
      r.pos += len;
      d.runs.push_back(std::move(run));
    }
    block.deltas.push_back(std::move(d));
  }
  if (r.pos != bytes.size())
    throw std::runtime_error("malformed shared-state block: trailing bytes");
  return block;
}

}  // namespace rft

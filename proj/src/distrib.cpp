#include "rftrack/distrib.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rft {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct ByteReader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size()) throw std::invalid_argument("malformed migration packet");
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos == bytes.size(); }
};

}  // namespace

const char* strategy_name(StateStrategy s) {
  switch (s) {
    case StateStrategy::Centralized: return "centralized";
    case StateStrategy::None: return "none";
    case StateStrategy::CR: return "cr";
  }
  return "?";
}

std::optional<StateStrategy> parse_strategy(std::string_view name) {
  if (name == "centralized") return StateStrategy::Centralized;
  if (name == "none") return StateStrategy::None;
  if (name == "cr") return StateStrategy::CR;
  return std::nullopt;
}

std::vector<uint8_t> encode_packet(const MigrationPacket& packet, const TagRegistry& tags) {
  if (packet.object < 0) throw std::invalid_argument("cannot encode a packet without an object");
  std::vector<uint8_t> out;
  put_u64(out, packet.id);
  out.push_back(static_cast<uint8_t>(packet.strategy));
  put_u16(out, static_cast<uint16_t>(packet.to_site));
  put_u64(out, tags.external(TagKind::Object, packet.object));
  put_u64(out, static_cast<uint64_t>(packet.state.watermark));
  put_u32(out, static_cast<uint32_t>(packet.state.weights.size()));
  for (const auto& [c, w] : packet.state.weights) {
    put_u64(out, tags.external(TagKind::Container, c));
    put_f64(out, w);
  }
  put_u32(out, static_cast<uint32_t>(packet.query_state.size()));
  out.insert(out.end(), packet.query_state.begin(), packet.query_state.end());
  return out;
}

MigrationPacket decode_packet(std::span<const uint8_t> bytes, const TagRegistry& tags) {
  ByteReader rd{bytes};
  MigrationPacket p;
  p.id = rd.u64();
  uint8_t tag = rd.u8();
  if (tag > 2) throw std::invalid_argument("malformed migration packet");
  p.strategy = static_cast<StateStrategy>(tag);
  p.to_site = rd.u16();
  uint64_t oid = rd.u64();
  auto idx = tags.find(oid);
  p.object = (idx && kind_of(oid) == TagKind::Object) ? *idx : -1;
  p.state.object = p.object;
  p.state.watermark = static_cast<Epoch>(rd.u64());
  uint32_t n = rd.u32();
  p.state.weights.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint64_t cid = rd.u64();
    double w = rd.f64();
    if (auto c = tags.find(cid); c && kind_of(cid) == TagKind::Container)
      p.state.weights.push_back({*c, w});
  }
  std::sort(p.state.weights.begin(), p.state.weights.end());
  uint32_t qn = rd.u32();
  rd.need(qn);
  p.query_state.assign(bytes.begin() + static_cast<ptrdiff_t>(rd.pos),
                       bytes.begin() + static_cast<ptrdiff_t>(rd.pos + qn));
  rd.pos += qn;
  if (!rd.done()) throw std::invalid_argument("malformed migration packet");
  return p;
}

bool apply_migration(SiteRuntime& site, const MigrationPacket& packet) {
  if (!site.applied.insert(packet.id).second) return false;  // duplicate delivery
  if (packet.strategy != StateStrategy::CR) return false;    // nothing to seed
  if (packet.object < 0) return false;  // unknown object: fresh state is the default
  site.engine.admit(packet.state, {});
  return true;
}

uint64_t CostLedger::total_bytes() const {
  uint64_t total = 0;
  for (const auto& r : rows) total += r.bytes;
  return total;
}

std::string ledger_csv(const CostLedger& ledger) {
  std::ostringstream os;
  os << "strategy,site,t_batch,bytes\n";
  for (const auto& r : ledger.rows)
    os << strategy_name(ledger.strategy) << ',' << r.site << ',' << r.t_batch << ',' << r.bytes
       << '\n';
  return os.str();
}

uint64_t compressed_chunk_bytes(std::span<const Reading> container_reads,
                                std::span<const Reading> object_reads, const TagRegistry& tags) {
  if (container_reads.empty() && object_reads.empty()) return 0;
  std::vector<uint8_t> raw;
  raw.reserve(10 * (container_reads.size() + object_reads.size()));
  auto add = [&](const Reading& r, TagKind kind) {
    put_u32(raw, static_cast<uint32_t>(r.t));
    put_u16(raw, static_cast<uint16_t>(r.reader));
    put_u32(raw, static_cast<uint32_t>(tags.external(kind, r.tag)));
  };
  for (const auto& r : container_reads) add(r, TagKind::Container);
  for (const auto& r : object_reads) add(r, TagKind::Object);
  uLongf dest_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> dest(dest_len);
  int rc = compress2(dest.data(), &dest_len, raw.data(), static_cast<uLong>(raw.size()),
                     Z_DEFAULT_COMPRESSION);
  if (rc != Z_OK) throw std::runtime_error("compression of a reading chunk failed");
  return dest_len;
}

namespace {

// Topological order of warehouses along the configured routes (default: the
// chain 0 -> 1 -> ... -> n-1). The simulator already validated the DAG.
std::vector<int> topo_sites(const SupplyChainConfig& cfg) {
  int n = cfg.n_warehouses;
  std::vector<std::vector<int>> next(static_cast<size_t>(n));
  std::vector<int> indeg(static_cast<size_t>(n), 0);
  if (cfg.routes.empty()) {
    for (int s = 0; s + 1 < n; ++s) {
      next[static_cast<size_t>(s)].push_back(s + 1);
      ++indeg[static_cast<size_t>(s + 1)];
    }
  } else {
    for (const auto& [a, b] : cfg.routes) {
      next[static_cast<size_t>(a)].push_back(b);
      ++indeg[static_cast<size_t>(b)];
    }
  }
  std::vector<int> order;
  order.reserve(static_cast<size_t>(n));
  std::vector<int> ready;
  for (int s = n - 1; s >= 0; --s)
    if (indeg[static_cast<size_t>(s)] == 0) ready.push_back(s);
  while (!ready.empty()) {
    int s = ready.back();
    ready.pop_back();
    order.push_back(s);
    for (int t : next[static_cast<size_t>(s)])
      if (--indeg[static_cast<size_t>(t)] == 0) ready.push_back(t);
  }
  return order;
}

// Readings of `h` with t in [b, e], advancing the cursor pair.
struct HistoryCursor {
  size_t container = 0, object = 0;

  static std::span<const Reading> slice(const std::vector<Reading>& reads, size_t& cur, Epoch b,
                                        Epoch e) {
    while (cur < reads.size() && reads[cur].t < b) ++cur;
    size_t lo = cur;
    while (cur < reads.size() && reads[cur].t <= e) ++cur;
    return {reads.data() + lo, cur - lo};
  }
};

}  // namespace

DistributedRun run_distributed(const TraceBundle& bundle, StateStrategy strategy,
                               const PipelineOptions& opts) {
  const int n_sites = bundle.config.n_warehouses;
  const int n_objects = bundle.merged.n_objects;
  const int n_containers = bundle.merged.n_containers;
  const Epoch T = bundle.duration;
  const Epoch P = std::max<Epoch>(1, opts.batch_period);

  DistributedRun out;
  out.strategy = strategy;
  out.ledger.strategy = strategy;
  out.final_site.assign(static_cast<size_t>(n_objects), -1);
  out.final_container.assign(static_cast<size_t>(n_objects), kNoContainer);

  if (strategy == StateStrategy::Centralized) {
    SiteEngine central(bundle.rates, n_containers, n_objects, opts);
    HistoryCursor merged_cur;
    std::vector<HistoryCursor> site_cur(static_cast<size_t>(n_sites));
    for (Epoch b = 0; b < T; b += P) {
      const Epoch e = std::min<Epoch>(T - 1, b + P - 1);
      for (int s = 0; s < n_sites; ++s) {
        const auto& h = bundle.per_site[static_cast<size_t>(s)];
        auto creads = HistoryCursor::slice(h.container_reads, site_cur[static_cast<size_t>(s)].container, b, e);
        auto oreads = HistoryCursor::slice(h.object_reads, site_cur[static_cast<size_t>(s)].object, b, e);
        if (uint64_t bytes = compressed_chunk_bytes(creads, oreads, bundle.tags))
          out.ledger.rows.push_back({s, b, bytes});
      }
      auto creads = HistoryCursor::slice(bundle.merged.container_reads, merged_cur.container, b, e);
      auto oreads = HistoryCursor::slice(bundle.merged.object_reads, merged_cur.object, b, e);
      central.ingest(creads, oreads);
      central.process_batch(b, e);
    }
    out.sites.push_back({-1, central.events(), central.all_changes(), central.batches()});
    for (int32_t o = 0; o < n_objects; ++o)
      out.final_container[static_cast<size_t>(o)] = central.container_of(o);
  } else {
    std::vector<SiteRuntime> sites;
    sites.reserve(static_cast<size_t>(n_sites));
    for (int s = 0; s < n_sites; ++s)
      sites.emplace_back(s, bundle.rates, n_containers, n_objects, opts);
    const std::vector<int> order = topo_sites(bundle.config);

    // Hop schedule on the shared batch grid: exits collapse + retire at the
    // origin right after the batch containing the exit; arrivals transfer
    // ownership (and deliver the packet under CR) just before the
    // destination's batch containing the first readings there. Hops still in
    // transit when the run ends are never delivered.
    const size_t n_batches = static_cast<size_t>((T + P - 1) / P);
    std::vector<std::vector<std::vector<size_t>>> exits(
        static_cast<size_t>(n_sites), std::vector<std::vector<size_t>>(n_batches));
    auto arrivals = exits;
    for (size_t i = 0; i < bundle.hops.size(); ++i) {
      const ItemHop& hop = bundle.hops[i];
      exits[static_cast<size_t>(hop.from_site)][static_cast<size_t>(hop.exit_epoch / P)].push_back(i);
      if (hop.arrive_epoch < T)
        arrivals[static_cast<size_t>(hop.to_site)][static_cast<size_t>(hop.arrive_epoch / P)].push_back(i);
    }

    std::vector<std::optional<MigrationPacket>> generated(bundle.hops.size());
    std::vector<int> owner(static_cast<size_t>(n_objects), 0);
    std::vector<HistoryCursor> cur(static_cast<size_t>(n_sites));

    size_t k = 0;
    for (Epoch b = 0; b < T; b += P, ++k) {
      const Epoch e = std::min<Epoch>(T - 1, b + P - 1);
      for (int s : order) {
        SiteRuntime& rt = sites[static_cast<size_t>(s)];
        for (size_t i : arrivals[static_cast<size_t>(s)][k]) {
          owner[static_cast<size_t>(bundle.hops[i].object)] = s;
          if (generated[i].has_value()) apply_migration(rt, *generated[i]);
        }
        const auto& h = bundle.per_site[static_cast<size_t>(s)];
        auto creads = HistoryCursor::slice(h.container_reads, cur[static_cast<size_t>(s)].container, b, e);
        auto oreads = HistoryCursor::slice(h.object_reads, cur[static_cast<size_t>(s)].object, b, e);
        rt.engine.ingest(creads, oreads);
        rt.engine.process_batch(b, e);
        uint64_t shipped = 0;
        for (size_t i : exits[static_cast<size_t>(s)][k]) {
          const ItemHop& hop = bundle.hops[i];
          if (strategy == StateStrategy::CR) {
            MigrationPacket pkt;
            pkt.id = static_cast<uint64_t>(i);
            pkt.strategy = strategy;
            pkt.to_site = hop.to_site;
            pkt.object = hop.object;
            pkt.state = rt.engine.collapse_object(hop.object);
            // The carried weights summarize everything this site saw; the
            // receiver should only integrate evidence from after the handoff.
            pkt.state.watermark = std::max(pkt.state.watermark, hop.exit_epoch);
            shipped += encode_packet(pkt, bundle.tags).size();
            generated[i] = std::move(pkt);
            ++out.packets_sent;
          }
          rt.engine.retire(hop.object, hop.exit_epoch);
        }
        if (shipped) out.ledger.rows.push_back({s, b, shipped});
      }
    }

    for (int s = 0; s < n_sites; ++s)
      out.sites.push_back({s, sites[static_cast<size_t>(s)].engine.events(),
                           sites[static_cast<size_t>(s)].engine.all_changes(),
                           sites[static_cast<size_t>(s)].engine.batches()});
    for (int32_t o = 0; o < n_objects; ++o) {
      int s = owner[static_cast<size_t>(o)];
      out.final_site[static_cast<size_t>(o)] = s;
      out.final_container[static_cast<size_t>(o)] =
          sites[static_cast<size_t>(s)].engine.container_of(o);
    }
  }

  // End-of-run containment accuracy over objects physically at some site
  // (objects in transit have no owner to ask).
  const Epoch t_end = T - 1;
  int scored = 0, wrong = 0;
  for (int32_t o = 0; o < n_objects; ++o) {
    if (bundle.truth.location_of(TagKind::Object, o, t_end) == kNoLocation) continue;
    ++scored;
    if (out.final_container[static_cast<size_t>(o)] != bundle.truth.container_of(o, t_end))
      ++wrong;
  }
  out.scored_objects = scored;
  out.containment_error = scored > 0 ? 100.0 * wrong / scored : 0.0;
  return out;
}

}  // namespace rft

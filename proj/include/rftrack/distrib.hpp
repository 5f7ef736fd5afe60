#pragma once

// Multi-site harness: one inference pipeline per warehouse, plus the state
// that moves between them when tagged objects do.
//
// Strategies compared (communication bytes vs end-of-run accuracy):
//  - Centralized: every site ships its raw readings (compressed) to an
//    external server, which runs one global pipeline. Reference accuracy,
//    maximum bytes.
//  - None: nothing moves; each site infers from scratch on local readings.
//    Zero bytes, worst accuracy (evidence gathered upstream is lost).
//  - CR: when an object exits a site, its collapsed candidate weights and
//    watermark travel to the next site in a small packet. Near-reference
//    accuracy at a tiny fraction of the bytes.
//
// Delivery model: sites process a shared batch grid in topological route
// order; a packet is generated right after the batch containing the object's
// exit and applied at the destination before its first batch containing the
// object's readings (reliable, in-order, deduplicated by packet id).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rftrack/pipeline.hpp"
#include "rftrack/simulator.hpp"
#include "rftrack/truncation.hpp"

namespace rft {

enum class StateStrategy { Centralized, None, CR };

const char* strategy_name(StateStrategy s);
std::optional<StateStrategy> parse_strategy(std::string_view name);

// One migrating object's shipped state. `object` is the dense index at the
// sending site; the wire format carries external tag ids. The query_state
// blob is an opaque per-object monitor image (empty when no monitor runs).
struct MigrationPacket {
  uint64_t id = 0;
  StateStrategy strategy = StateStrategy::CR;
  int to_site = -1;
  int32_t object = -1;
  CollapsedObjectState state;        // weights + watermark (empty for None)
  std::vector<uint8_t> query_state;
};

// Little-endian wire format:
//   u64 id | u8 strategy | u16 to_site | u64 object_id | i64 watermark |
//   u32 n_candidates | n x (u64 container_id, f64 weight) |
//   u32 query_len | query bytes
// Ids are external tag ids. Decoding an id the registry does not know leaves
// object = -1 (the receiver treats it as a fresh object, which is a no-op).
std::vector<uint8_t> encode_packet(const MigrationPacket& packet, const TagRegistry& tags);
MigrationPacket decode_packet(std::span<const uint8_t> bytes, const TagRegistry& tags);

// One site's pipeline plus the packet ids it has already applied.
struct SiteRuntime {
  int site = -1;
  SiteEngine engine;
  std::unordered_set<uint64_t> applied;

  SiteRuntime(int site_id, const ReadRateTable& rates, int n_containers, int n_objects,
              const PipelineOptions& opts)
      : site(site_id), engine(rates, n_containers, n_objects, opts) {}
};

// Seeds the packet's carried weights into the site (additively, as the
// engine's admit contract requires); duplicate packet ids and unknown
// objects are ignored. None packets change nothing. Returns whether the
// packet was applied.
bool apply_migration(SiteRuntime& site, const MigrationPacket& packet);

// Communication accounting: one row per (site, batch) with bytes shipped
// from that site during that batch (packet bytes for CR, compressed reading
// chunks for Centralized; None ships nothing).
struct CostRow {
  int site = -1;
  Epoch t_batch = 0;
  uint64_t bytes = 0;
};

struct CostLedger {
  StateStrategy strategy = StateStrategy::CR;
  std::vector<CostRow> rows;
  uint64_t total_bytes() const;
};

std::string ledger_csv(const CostLedger& ledger);

// Raw-reading chunk as the Centralized strategy ships it: every reading of
// one site-batch as a 10-byte record (u32 epoch | u16 reader | u32 external
// tag id), deflate-compressed. Returns the compressed size.
uint64_t compressed_chunk_bytes(std::span<const Reading> container_reads,
                                std::span<const Reading> object_reads,
                                const TagRegistry& tags);

struct SiteOutcome {
  int site = -1;  // -1: the external central server
  std::vector<StateEvent> events;
  std::vector<ChangePointReport> changes;
  std::vector<BatchResult> batches;
};

struct DistributedRun {
  StateStrategy strategy = StateStrategy::CR;
  std::vector<SiteOutcome> sites;
  CostLedger ledger;
  // Per dense object at the end of the run: the site owning its state (-1 =
  // central server or still in transit) and that owner's containment
  // estimate.
  std::vector<int> final_site;
  std::vector<int32_t> final_container;
  // Containment error (%) over objects physically at a site when the run
  // ends (in-transit objects have no owner and are skipped).
  double containment_error = 0.0;
  int scored_objects = 0;
  uint64_t packets_sent = 0;
};

// Replays the bundle site by site on a shared batch grid (opts.batch_period)
// under one strategy. Packets derive from the bundle's recorded hops: exit
// at the origin collapses + retires the object there; arrival applies the
// packet (CR) and moves ownership. Deterministic for a fixed bundle.
DistributedRun run_distributed(const TraceBundle& bundle, StateStrategy strategy,
                               const PipelineOptions& opts);

}  // namespace rft

#pragma once

// File formats: the reading-trace and ground-truth text formats, key-value
// config files, result CSVs, and the JSON run manifest the CLI writes next
// to every output. All text is UTF-8 with LF line endings; all emitters are
// deterministic (same input -> byte-identical output).

#include <string>
#include <string_view>
#include <vector>

#include "rftrack/changepoint.hpp"
#include "rftrack/core.hpp"
#include "rftrack/pipeline.hpp"
#include "rftrack/simulator.hpp"

namespace rft {

inline constexpr const char* kLibraryVersion = "1.0.0";

// Reading trace: one line per reading, `time<TAB>tag_id<TAB>reader_id`,
// container and object reads merged, sorted by (time, reader, tag id).
std::string trace_text(const ObservationHistory& history, const TagRegistry& tags);
ObservationHistory parse_trace(std::string_view text, TagRegistry& tags, int n_locations = 0);

// Ground truth sidecar: `time<TAB>tag_id<TAB>location<TAB>container`, one
// line per change of either field (container tags use -1 in the container
// column; kNoLocation / kNoContainer appear as -1). Sorted by (time, tag id).
std::string truth_text(const GroundTruth& truth, const TagRegistry& tags);
GroundTruth parse_truth(std::string_view text, TagRegistry& tags);

// Config files: `key = value` lines mirroring the simulator parameter names
// (rr, or_rate, n_shelves, shelf_dwell, n_warehouses, items_per_case, ...).
// '#' starts a comment. Unknown keys or unparsable values throw. Routes are
// written `routes = 0>1 1>2`. config_text() round-trips through
// parse_config_text().
std::string config_text(const SupplyChainConfig& cfg);
SupplyChainConfig parse_config_text(std::string_view text);

// Result CSVs.
std::string events_csv(std::span<const StateEvent> events, const TagRegistry& tags);
std::string changes_csv(std::span<const ChangePointReport> changes, const TagRegistry& tags);

// Run manifest: what produced an output file (command, seed, config, output
// paths, wall time, calibrated threshold if any, library version). Written
// as `<out>.manifest.json`.
struct RunManifest {
  std::string command;
  uint64_t seed = 0;
  SupplyChainConfig config;
  std::vector<std::pair<std::string, std::string>> outputs;  // label -> path
  double wall_time_s = 0.0;
  double threshold_delta = 0.0;
  bool has_threshold = false;
};

std::string manifest_json(const RunManifest& manifest);

// Whole-file helpers (throw std::runtime_error with the path on failure).
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace rft

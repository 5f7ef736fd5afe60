#include "rftrack/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace rft {

namespace {

// Shortest round-trip decimal form (to_chars), so emitters are deterministic
// and configs survive write -> parse -> write unchanged.
std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, p);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

int64_t parse_int(std::string_view s, std::string_view what) {
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::invalid_argument(std::string(what) + ": bad integer '" + std::string(s) + "'");
  return v;
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw std::invalid_argument(std::string(what) + ": bad number '" + std::string(s) + "'");
  return v;
}

bool parse_bool(std::string_view s, std::string_view what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument(std::string(what) + ": bad flag '" + std::string(s) + "'");
}

// Calls fn(line) for every line (LF or final unterminated line).
template <typename Fn>
void for_lines(std::string_view text, Fn fn) {
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    fn(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (true) {
    size_t next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

}  // namespace

// Trace format -----------------------------------------------------------

std::string trace_text(const ObservationHistory& history, const TagRegistry& tags) {
  struct Row {
    Epoch t;
    LocationId reader;
    uint64_t id;
  };
  std::vector<Row> rows;
  rows.reserve(history.container_reads.size() + history.object_reads.size());
  for (const Reading& r : history.container_reads)
    rows.push_back({r.t, r.reader, tags.external(TagKind::Container, r.tag)});
  for (const Reading& r : history.object_reads)
    rows.push_back({r.t, r.reader, tags.external(TagKind::Object, r.tag)});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.t, a.reader, a.id) < std::tie(b.t, b.reader, b.id);
  });
  std::ostringstream os;
  for (const Row& r : rows) os << r.t << '\t' << r.id << '\t' << r.reader << '\n';
  return os.str();
}

ObservationHistory parse_trace(std::string_view text, TagRegistry& tags, int n_locations) {
  ObservationHistory h;
  int max_reader = -1;
  int line_no = 0;
  for_lines(text, [&](std::string_view line) {
    ++line_no;
    line = trim(line);
    if (line.empty()) return;
    auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw std::invalid_argument("trace line " + std::to_string(line_no) +
                                  ": expected time<TAB>tag_id<TAB>reader_id");
    Epoch t = parse_int(trim(fields[0]), "trace time");
    uint64_t id = static_cast<uint64_t>(parse_int(trim(fields[1]), "trace tag id"));
    LocationId reader = static_cast<LocationId>(parse_int(trim(fields[2]), "trace reader id"));
    max_reader = std::max(max_reader, reader);
    TagIndex idx = tags.intern(id);
    if (kind_of(id) == TagKind::Container)
      h.container_reads.push_back({t, reader, idx});
    else
      h.object_reads.push_back({t, reader, idx});
  });
  h.n_locations = n_locations > 0 ? n_locations : max_reader + 1;
  h.n_containers = tags.n_containers();
  h.n_objects = tags.n_objects();
  h.normalize();
  return h;
}

// Ground-truth sidecar -----------------------------------------------------

std::string truth_text(const GroundTruth& truth, const TagRegistry& tags) {
  struct Row {
    Epoch t;
    uint64_t id;
    int64_t loc;
    int64_t container;
  };
  std::vector<Row> rows;
  for (size_t c = 0; c < truth.container_location.size(); ++c) {
    uint64_t id = tags.external(TagKind::Container, static_cast<TagIndex>(c));
    for (const TimelineEntry& e : truth.container_location[c]) rows.push_back({e.from, id, e.value, -1});
  }
  for (size_t o = 0; o < truth.object_location.size(); ++o) {
    uint64_t id = tags.external(TagKind::Object, static_cast<TagIndex>(o));
    const auto& lt = truth.object_location[o];
    const auto& ct = truth.object_container[o];
    // One row per epoch where either field changes, carrying the other.
    size_t li = 0, ci = 0;
    while (li < lt.size() || ci < ct.size()) {
      Epoch t;
      if (ci >= ct.size())
        t = lt[li].from;
      else if (li >= lt.size())
        t = ct[ci].from;
      else
        t = std::min(lt[li].from, ct[ci].from);
      while (li < lt.size() && lt[li].from == t) ++li;
      while (ci < ct.size() && ct[ci].from == t) ++ci;
      int64_t loc = li > 0 ? lt[li - 1].value : kNoLocation;
      int32_t cont = ci > 0 ? ct[ci - 1].value : kNoContainer;
      rows.push_back({t, id, loc,
                      cont == kNoContainer ? -1
                                           : static_cast<int64_t>(tags.external(
                                                 TagKind::Container, cont))});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.t, a.id) < std::tie(b.t, b.id);
  });
  std::ostringstream os;
  for (const Row& r : rows)
    os << r.t << '\t' << r.id << '\t' << r.loc << '\t' << r.container << '\n';
  return os.str();
}

GroundTruth parse_truth(std::string_view text, TagRegistry& tags) {
  GroundTruth truth;
  auto ensure = [](auto& v, size_t n) {
    if (v.size() < n) v.resize(n);
  };
  int line_no = 0;
  for_lines(text, [&](std::string_view line) {
    ++line_no;
    line = trim(line);
    if (line.empty()) return;
    auto fields = split(line, '\t');
    if (fields.size() != 4)
      throw std::invalid_argument("truth line " + std::to_string(line_no) +
                                  ": expected time<TAB>tag_id<TAB>location<TAB>container");
    Epoch t = parse_int(trim(fields[0]), "truth time");
    uint64_t id = static_cast<uint64_t>(parse_int(trim(fields[1]), "truth tag id"));
    auto loc = static_cast<LocationId>(parse_int(trim(fields[2]), "truth location"));
    int64_t cont_id = parse_int(trim(fields[3]), "truth container");
    TagIndex idx = tags.intern(id);
    auto push = [](std::vector<TimelineEntry>& tl, Epoch from, int32_t value) {
      if (!tl.empty() && tl.back().value == value) return;
      tl.push_back({from, value});
    };
    if (kind_of(id) == TagKind::Container) {
      ensure(truth.container_location, static_cast<size_t>(idx) + 1);
      push(truth.container_location[static_cast<size_t>(idx)], t, loc);
    } else {
      ensure(truth.object_location, static_cast<size_t>(idx) + 1);
      ensure(truth.object_container, static_cast<size_t>(idx) + 1);
      push(truth.object_location[static_cast<size_t>(idx)], t, loc);
      int32_t cont = cont_id < 0 ? kNoContainer : tags.intern(static_cast<uint64_t>(cont_id));
      push(truth.object_container[static_cast<size_t>(idx)], t, cont);
    }
  });
  truth.container_location.resize(static_cast<size_t>(tags.n_containers()));
  truth.object_location.resize(static_cast<size_t>(tags.n_objects()));
  truth.object_container.resize(static_cast<size_t>(tags.n_objects()));
  return truth;
}

// Config files --------------------------------------------------------------

std::string config_text(const SupplyChainConfig& cfg) {
  std::ostringstream os;
  os << "# supply chain\n";
  os << "n_warehouses = " << cfg.n_warehouses << '\n';
  if (!cfg.routes.empty()) {
    os << "routes =";
    for (const auto& [a, b] : cfg.routes) os << ' ' << a << '>' << b;
    os << '\n';
  }
  os << "pallet_period = " << cfg.pallet_period << '\n';
  os << "cases_per_pallet = " << cfg.cases_per_pallet << '\n';
  os << "items_per_case = " << cfg.items_per_case << '\n';
  os << "max_pallets = " << cfg.max_pallets << '\n';
  os << "anomaly_period = " << cfg.anomaly_period << '\n';
  os << "scripted_changes = " << (cfg.scripted_changes ? "true" : "false") << '\n';
  os << "transit_time = " << cfg.transit_time << '\n';
  os << "unpack_at_every_hop = " << (cfg.unpack_at_every_hop ? "true" : "false") << '\n';
  os << "freezer_case_fraction = " << num(cfg.freezer_case_fraction) << '\n';
  os << "seed = " << cfg.seed << '\n';
  os << "# warehouse\n";
  os << "n_shelves = " << cfg.warehouse.n_shelves << '\n';
  os << "rr = " << num(cfg.warehouse.rr) << '\n';
  os << "sample_rr = " << (cfg.warehouse.sample_rr ? "true" : "false") << '\n';
  os << "rr_min = " << num(cfg.warehouse.rr_min) << '\n';
  os << "rr_max = " << num(cfg.warehouse.rr_max) << '\n';
  os << "or_rate = " << num(cfg.warehouse.or_rate) << '\n';
  os << "door_dwell = " << cfg.warehouse.door_dwell << '\n';
  os << "belt_time = " << cfg.warehouse.belt_time << '\n';
  os << "exit_dwell = " << cfg.warehouse.exit_dwell << '\n';
  os << "shelf_dwell = " << cfg.warehouse.shelf_dwell << '\n';
  os << "shelf_period = " << cfg.warehouse.shelf_period << '\n';
  os << "mobile_reader = " << (cfg.warehouse.mobile_reader ? "true" : "false") << '\n';
  os << "mobile_seconds_per_shelf = " << cfg.warehouse.mobile_seconds_per_shelf << '\n';
  os << "freezer_shelves = " << cfg.warehouse.freezer_shelves << '\n';
  return os.str();
}

SupplyChainConfig parse_config_text(std::string_view text) {
  SupplyChainConfig cfg;
  for_lines(text, [&](std::string_view line) {
    if (size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line without '=': '" + std::string(line) + "'");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view val = trim(line.substr(eq + 1));
    if (key == "n_warehouses") cfg.n_warehouses = static_cast<int>(parse_int(val, key));
    else if (key == "routes") {
      cfg.routes.clear();
      for (std::string_view tok : split(val, ' ')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        size_t gt = tok.find('>');
        if (gt == std::string_view::npos)
          throw std::invalid_argument("route without '>': '" + std::string(tok) + "'");
        cfg.routes.push_back({static_cast<int>(parse_int(tok.substr(0, gt), "route from")),
                              static_cast<int>(parse_int(tok.substr(gt + 1), "route to"))});
      }
    } else if (key == "pallet_period") cfg.pallet_period = parse_int(val, key);
    else if (key == "cases_per_pallet") cfg.cases_per_pallet = static_cast<int>(parse_int(val, key));
    else if (key == "items_per_case") cfg.items_per_case = static_cast<int>(parse_int(val, key));
    else if (key == "max_pallets") cfg.max_pallets = static_cast<int>(parse_int(val, key));
    else if (key == "anomaly_period") cfg.anomaly_period = parse_int(val, key);
    else if (key == "scripted_changes") cfg.scripted_changes = parse_bool(val, key);
    else if (key == "transit_time") cfg.transit_time = parse_int(val, key);
    else if (key == "unpack_at_every_hop") cfg.unpack_at_every_hop = parse_bool(val, key);
    else if (key == "freezer_case_fraction") cfg.freezer_case_fraction = parse_double(val, key);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(val, key));
    else if (key == "n_shelves") cfg.warehouse.n_shelves = static_cast<int>(parse_int(val, key));
    else if (key == "rr") cfg.warehouse.rr = parse_double(val, key);
    else if (key == "sample_rr") cfg.warehouse.sample_rr = parse_bool(val, key);
    else if (key == "rr_min") cfg.warehouse.rr_min = parse_double(val, key);
    else if (key == "rr_max") cfg.warehouse.rr_max = parse_double(val, key);
    else if (key == "or_rate") cfg.warehouse.or_rate = parse_double(val, key);
    else if (key == "door_dwell") cfg.warehouse.door_dwell = parse_int(val, key);
    else if (key == "belt_time") cfg.warehouse.belt_time = parse_int(val, key);
    else if (key == "exit_dwell") cfg.warehouse.exit_dwell = parse_int(val, key);
    else if (key == "shelf_dwell") cfg.warehouse.shelf_dwell = parse_int(val, key);
    else if (key == "shelf_period") cfg.warehouse.shelf_period = parse_int(val, key);
    else if (key == "mobile_reader") cfg.warehouse.mobile_reader = parse_bool(val, key);
    else if (key == "mobile_seconds_per_shelf") cfg.warehouse.mobile_seconds_per_shelf = parse_int(val, key);
    else if (key == "freezer_shelves") cfg.warehouse.freezer_shelves = static_cast<int>(parse_int(val, key));
    else throw std::invalid_argument("unknown config key: '" + std::string(key) + "'");
  });
  return cfg;
}

// Result CSVs -----------------------------------------------------------------

std::string events_csv(std::span<const StateEvent> events, const TagRegistry& tags) {
  std::ostringstream os;
  os << "t,object_id,location,container_id\n";
  for (const StateEvent& e : events) {
    os << e.t << ',' << tags.external(TagKind::Object, e.object) << ',' << e.location << ',';
    if (e.container == kNoContainer)
      os << -1;
    else
      os << tags.external(TagKind::Container, e.container);
    os << '\n';
  }
  return os.str();
}

std::string changes_csv(std::span<const ChangePointReport> changes, const TagRegistry& tags) {
  std::ostringstream os;
  os << "object_id,t_change,delta,new_container_id\n";
  for (const ChangePointReport& c : changes) {
    os << tags.external(TagKind::Object, c.object) << ',' << c.t_change << ',' << num(c.delta)
       << ',';
    if (c.new_container == kNoContainer)
      os << -1;
    else
      os << tags.external(TagKind::Container, c.new_container);
    os << '\n';
  }
  return os.str();
}

// Manifest ------------------------------------------------------------------

std::string manifest_json(const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  j["library_version"] = kLibraryVersion;
  j["seed"] = manifest.seed;
  j["wall_time_s"] = manifest.wall_time_s;
  if (manifest.has_threshold) j["threshold_delta"] = manifest.threshold_delta;
  nlohmann::ordered_json cfg;
  const SupplyChainConfig& c = manifest.config;
  cfg["n_warehouses"] = c.n_warehouses;
  nlohmann::ordered_json routes = nlohmann::ordered_json::array();
  for (const auto& [a, b] : c.routes) routes.push_back({a, b});
  cfg["routes"] = std::move(routes);
  cfg["pallet_period"] = c.pallet_period;
  cfg["cases_per_pallet"] = c.cases_per_pallet;
  cfg["items_per_case"] = c.items_per_case;
  cfg["max_pallets"] = c.max_pallets;
  cfg["anomaly_period"] = c.anomaly_period;
  cfg["scripted_changes"] = c.scripted_changes;
  cfg["transit_time"] = c.transit_time;
  cfg["unpack_at_every_hop"] = c.unpack_at_every_hop;
  cfg["freezer_case_fraction"] = c.freezer_case_fraction;
  cfg["seed"] = c.seed;
  nlohmann::ordered_json w;
  w["n_shelves"] = c.warehouse.n_shelves;
  w["rr"] = c.warehouse.rr;
  w["sample_rr"] = c.warehouse.sample_rr;
  w["rr_min"] = c.warehouse.rr_min;
  w["rr_max"] = c.warehouse.rr_max;
  w["or_rate"] = c.warehouse.or_rate;
  w["door_dwell"] = c.warehouse.door_dwell;
  w["belt_time"] = c.warehouse.belt_time;
  w["exit_dwell"] = c.warehouse.exit_dwell;
  w["shelf_dwell"] = c.warehouse.shelf_dwell;
  w["shelf_period"] = c.warehouse.shelf_period;
  w["mobile_reader"] = c.warehouse.mobile_reader;
  w["mobile_seconds_per_shelf"] = c.warehouse.mobile_seconds_per_shelf;
  w["freezer_shelves"] = c.warehouse.freezer_shelves;
  cfg["warehouse"] = std::move(w);
  j["config"] = std::move(cfg);
  nlohmann::ordered_json outs;
  for (const auto& [label, path] : manifest.outputs) outs[label] = path;
  j["outputs"] = std::move(outs);
  return j.dump(2) + "\n";
}

// Files -----------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw std::runtime_error(path + ": read failed");
  return os.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace rft

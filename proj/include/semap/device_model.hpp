#pragma once

// Streaming Engine device model: a line of tiles, each time-sliced into
// spoke slots that fire on cycles congruent to the slot modulo II, joined by
// a synchronous fabric whose transfer latency is the tile distance.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semap/ir_graph.hpp"

namespace semap {

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeviceConfig {
  int num_tiles = 16;
  int num_slots = 6;  // instruction RAM depth per tile
  int ii = 3;         // initiation interval: active spoke slots
  int exec_latency = 3;
  std::optional<int> reach_limit;  // max tile distance to a neighbour, unset = unrestricted
  double lambda_penalty = 100.0;

  int action_dim() const { return num_tiles * num_slots; }
  int action_index(int tile, int slot) const { return tile * num_slots + slot; }

  void validate() const {
    if (num_tiles < 1) throw ConfigError("device: num_tiles must be >= 1");
    if (num_slots < 1) throw ConfigError("device: num_slots must be >= 1");
    if (ii < 1 || ii > num_slots) throw ConfigError("device: ii must satisfy 1 <= ii <= num_slots");
    if (exec_latency < 1) throw ConfigError("device: exec_latency must be >= 1");
    if (reach_limit && *reach_limit < 0) throw ConfigError("device: reach_limit must be >= 0");
    if (!(lambda_penalty > 0)) throw ConfigError("device: lambda_penalty must be > 0");
  }

  friend bool operator==(const DeviceConfig&, const DeviceConfig&) = default;
};

struct TileSlot {
  int tile = 0;
  int slot = 0;
  friend bool operator==(const TileSlot&, const TileSlot&) = default;
};

inline TileSlot action_to_tile_slot(const DeviceConfig& cfg, int action) {
  return {action / cfg.num_slots, action % cfg.num_slots};
}

/// 1 where placing the current node is legal; index = tile * num_slots + slot.
using ActionMask = std::vector<std::uint8_t>;

inline int count_valid(const ActionMask& mask) {
  return static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

/// Partial or complete assignment of nodes to tile slices. Updated
/// functionally: place_node returns a new state and leaves its input intact.
class PlacementState {
 public:
  PlacementState() = default;
  PlacementState(const DeviceConfig& cfg, int num_nodes)
      : assignment_(static_cast<size_t>(num_nodes)),
        fire_(static_cast<size_t>(num_nodes), -1),
        ready_(static_cast<size_t>(num_nodes), -1),
        occupant_(static_cast<size_t>(cfg.action_dim()), -1),
        num_slots_(cfg.num_slots) {}

  int num_nodes() const { return static_cast<int>(assignment_.size()); }
  int num_placed() const { return placed_; }
  bool complete() const { return placed_ == num_nodes(); }
  bool is_placed(int node) const { return assignment_.at(static_cast<size_t>(node)).has_value(); }
  const std::optional<TileSlot>& assignment(int node) const { return assignment_.at(static_cast<size_t>(node)); }
  int fire_cycle(int node) const { return fire_.at(static_cast<size_t>(node)); }
  int ready_time(int node) const { return ready_.at(static_cast<size_t>(node)); }
  /// Node occupying (tile, slot), or -1.
  int occupant(int tile, int slot) const { return occupant_.at(static_cast<size_t>(tile * num_slots_ + slot)); }
  int occupant(int action) const { return occupant_.at(static_cast<size_t>(action)); }

  friend bool operator==(const PlacementState&, const PlacementState&) = default;

 private:
  friend PlacementState with_placement(const PlacementState&, int, TileSlot, int, int);
  friend PlacementState without_node(const PlacementState&, int);
  friend PlacementState with_timing(const PlacementState&, int, int, int);

  std::vector<std::optional<TileSlot>> assignment_;
  std::vector<int> fire_, ready_;
  std::vector<int> occupant_;
  int num_slots_ = 1;
  int placed_ = 0;
};

inline PlacementState with_placement(const PlacementState& s, int node, TileSlot at, int fire, int ready) {
  PlacementState out = s;
  out.assignment_[node] = at;
  out.fire_[node] = fire;
  out.ready_[node] = ready;
  out.occupant_[at.tile * s.num_slots_ + at.slot] = node;
  ++out.placed_;
  return out;
}

inline PlacementState without_node(const PlacementState& s, int node) {
  PlacementState out = s;
  if (auto at = s.assignment_[node]) {
    out.occupant_[at->tile * s.num_slots_ + at->slot] = -1;
    out.assignment_[node].reset();
    out.fire_[node] = out.ready_[node] = -1;
    --out.placed_;
  }
  return out;
}

inline PlacementState with_timing(const PlacementState& s, int node, int fire, int ready) {
  PlacementState out = s;
  out.fire_[node] = fire;
  out.ready_[node] = ready;
  return out;
}

// ---------------------------------------------------------------------------
// Timing

/// Synchronous-fabric transfer latency: one cycle per tile of distance,
/// zero over the tile's own feedback path.
inline int hop_latency(const DeviceConfig& cfg, int src_tile, int dst_tile) {
  if (src_tile < 0 || src_tile >= cfg.num_tiles || dst_tile < 0 || dst_tile >= cfg.num_tiles)
    throw std::out_of_range("hop_latency: tile index out of range");
  return std::abs(dst_tile - src_tile);
}

inline bool within_reach(const DeviceConfig& cfg, int src_tile, int dst_tile) {
  return !cfg.reach_limit || std::abs(dst_tile - src_tile) <= *cfg.reach_limit;
}

/// Cycle at which a value produced by `pred` is usable on `tile`. The final
/// execution cycle overlaps the first transfer cycle.
inline int arrival_cycle(const DeviceConfig& cfg, const PlacementState& state, int pred, int tile) {
  return state.fire_cycle(pred) + cfg.exec_latency + hop_latency(cfg, state.assignment(pred)->tile, tile) - 1;
}

/// Smallest cycle >= lower_bound that is congruent to slot modulo ii.
inline int next_slot_cycle(int lower_bound, int slot, int ii) {
  int base = std::max(lower_bound, 0);
  int offset = ((slot - base) % ii + ii) % ii;
  return base + offset;
}

/// Earliest fire cycle of `node` on (tile, slot). With allow_unplaced set,
/// predecessors that are not yet placed contribute a lower bound of 0.
inline int earliest_fire(const DeviceConfig& cfg, const PlacementState& state, const IRGraph& g, int node,
                         int tile, int slot, bool allow_unplaced = false) {
  int lower = 0;
  for (int p : g.predecessors(node)) {
    if (!state.is_placed(p)) {
      if (allow_unplaced) continue;
      throw PlacementError("earliest_fire: predecessor " + std::to_string(p) + " of node " +
                           std::to_string(node) + " is not placed");
    }
    lower = std::max(lower, arrival_cycle(cfg, state, p, tile));
  }
  return next_slot_cycle(lower, slot, cfg.ii);
}

// ---------------------------------------------------------------------------
// Constraints

enum class Constraint {
  kTileRange,
  kSlotRange,
  kAlreadyPlaced,
  kOccupied,
  kTileMemory,  // shared tile-memory variables force one tile
  kSdfStart,    // two SDF starts may not share a tile
  kSibling,     // two siblings may not share a tile
  kReach,
};

inline const char* constraint_name(Constraint c) {
  switch (c) {
    case Constraint::kTileRange: return "tile out of range";
    case Constraint::kSlotRange: return "slot out of range";
    case Constraint::kAlreadyPlaced: return "node already placed";
    case Constraint::kOccupied: return "tile slice occupied";
    case Constraint::kTileMemory: return "constraint 1 (shared tile memory requires same tile)";
    case Constraint::kSdfStart: return "constraint 2 (SDF starts may not share a tile)";
    case Constraint::kSibling: return "constraint 3 (siblings may not share a tile)";
    case Constraint::kReach: return "reach limit exceeded";
  }
  return "unknown";
}

/// First constraint violated by placing `node` at (tile, slot), if any.
/// Only already-placed nodes are considered.
inline std::optional<Constraint> check_placement(const DeviceConfig& cfg, const PlacementState& state,
                                                 const IRGraph& g, int node, int tile, int slot) {
  if (tile < 0 || tile >= cfg.num_tiles) return Constraint::kTileRange;
  if (slot < 0 || slot >= cfg.ii) return Constraint::kSlotRange;
  if (state.is_placed(node)) return Constraint::kAlreadyPlaced;
  if (state.occupant(tile, slot) != -1) return Constraint::kOccupied;
  for (int other : g.memory_group_members(node))
    if (other != node && state.is_placed(other) && state.assignment(other)->tile != tile)
      return Constraint::kTileMemory;
  if (g.is_sdf_start(node)) {
    for (int s = 0; s < cfg.ii; ++s) {
      int other = state.occupant(tile, s);
      if (other != -1 && g.is_sdf_start(other)) return Constraint::kSdfStart;
    }
  }
  for (int sib : g.siblings(node))
    if (state.is_placed(sib) && state.assignment(sib)->tile == tile) return Constraint::kSibling;
  if (cfg.reach_limit) {
    auto too_far = [&](int other) {
      return state.is_placed(other) && !within_reach(cfg, state.assignment(other)->tile, tile);
    };
    for (int p : g.predecessors(node))
      if (too_far(p)) return Constraint::kReach;
    for (int s : g.successors(node))
      if (too_far(s)) return Constraint::kReach;
  }
  return std::nullopt;
}

inline ActionMask valid_action_mask(const DeviceConfig& cfg, const PlacementState& state, const IRGraph& g,
                                    int node) {
  ActionMask mask(static_cast<size_t>(cfg.action_dim()), 0);
  for (int t = 0; t < cfg.num_tiles; ++t)
    for (int s = 0; s < cfg.ii; ++s)
      if (!check_placement(cfg, state, g, node, t, s)) mask[cfg.action_index(t, s)] = 1;
  return mask;
}

/// Places `node`, timing it against its (placed) predecessors.
inline PlacementState place_node(const DeviceConfig& cfg, const PlacementState& state, const IRGraph& g,
                                 int node, int tile, int slot, bool allow_unplaced_preds = false) {
  if (node < 0 || node >= g.size()) throw PlacementError("invalid placement: unknown node " + std::to_string(node));
  if (auto violated = check_placement(cfg, state, g, node, tile, slot))
    throw PlacementError("invalid placement of node " + std::to_string(node) + " at (" + std::to_string(tile) +
                         "," + std::to_string(slot) + "): " + constraint_name(*violated));
  int fire = earliest_fire(cfg, state, g, node, tile, slot, allow_unplaced_preds);
  return with_placement(state, node, {tile, slot}, fire, fire + cfg.exec_latency);
}

/// Recomputes every placed node's fire cycle in topological order, e.g. after
/// nodes were placed before their predecessors or an assignment was moved.
inline PlacementState retime(const DeviceConfig& cfg, const IRGraph& g, PlacementState state,
                             const std::vector<int>& order) {
  for (int v : order) {
    if (!state.is_placed(v)) continue;
    const TileSlot at = *state.assignment(v);
    int fire = earliest_fire(cfg, state, g, v, at.tile, at.slot, /*allow_unplaced=*/true);
    state = with_timing(state, v, fire, fire + cfg.exec_latency);
  }
  return state;
}

inline PlacementState retime(const DeviceConfig& cfg, const IRGraph& g, const PlacementState& state) {
  return retime(cfg, g, state, topological_order(g));
}

inline int total_cycles(const DeviceConfig&, const PlacementState& state, const IRGraph& g) {
  std::string missing;
  int total = 0;
  for (int v = 0; v < g.size(); ++v) {
    if (!state.is_placed(v))
      missing += (missing.empty() ? "" : ",") + std::to_string(v);
    else
      total = std::max(total, state.ready_time(v));
  }
  if (!missing.empty()) throw PlacementError("total_cycles: unplaced nodes [" + missing + "]");
  return total;
}

/// Ready time of the latest-ready placed predecessor; 0 for sources.
inline int latest_predecessor_ready(const PlacementState& state, const IRGraph& g, int node) {
  int t = 0;
  for (int p : g.predecessors(node))
    if (state.is_placed(p)) t = std::max(t, state.ready_time(p));
  return t;
}

/// Sum over placed nodes of -(t_n - t_p(n)). Under topological placement this
/// equals the episode return.
inline double placement_return(const PlacementState& state, const IRGraph& g) {
  double total = 0;
  for (int v = 0; v < g.size(); ++v)
    if (state.is_placed(v)) total -= state.ready_time(v) - latest_predecessor_ready(state, g, v);
  return total;
}

// ---------------------------------------------------------------------------
// Mapping files

struct Placement {
  int tile = 0;
  int slot = 0;
  int fire_cycle = 0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct Mapping {
  DeviceConfig device;
  std::map<int, Placement> placements;
  std::optional<int> total_cycles;
  bool dead_end = false;

  friend bool operator==(const Mapping&, const Mapping&) = default;
};

inline Mapping mapping_from_state(const DeviceConfig& cfg, const PlacementState& state, const IRGraph& g) {
  Mapping m;
  m.device = cfg;
  for (int v = 0; v < g.size(); ++v)
    if (auto at = state.assignment(v)) m.placements[v] = {at->tile, at->slot, state.fire_cycle(v)};
  if (state.complete()) m.total_cycles = total_cycles(cfg, state, g);
  return m;
}

inline nlohmann::json device_to_json(const DeviceConfig& cfg) {
  nlohmann::json j = {{"num_tiles", cfg.num_tiles},
                      {"num_slots", cfg.num_slots},
                      {"ii", cfg.ii},
                      {"exec_latency", cfg.exec_latency}};
  if (cfg.reach_limit) j["reach_limit"] = *cfg.reach_limit;
  return j;
}

inline nlohmann::json to_json(const Mapping& m) {
  nlohmann::json placements = nlohmann::json::object();
  for (const auto& [node, p] : m.placements)
    placements[std::to_string(node)] = {{"tile", p.tile}, {"slot", p.slot}, {"fire_cycle", p.fire_cycle}};
  nlohmann::json j = {{"device", device_to_json(m.device)}, {"placements", placements}};
  j["total_cycles"] = m.total_cycles ? nlohmann::json(*m.total_cycles) : nlohmann::json(nullptr);
  if (m.dead_end) j["dead_end"] = true;
  return j;
}

inline std::string serialize_mapping(const Mapping& m) { return to_json(m).dump(2) + "\n"; }

/// Reads the mapping schema. fire_cycle is optional on input (a pinned
/// placement carries only tile and slot); -1 marks it absent.
inline Mapping mapping_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& path, const std::string& what) {
    throw PlacementError("mapping " + path + ": " + what);
  };
  if (!j.is_object()) fail("", "document must be an object");
  for (const auto& [key, value] : j.items())
    if (key != "device" && key != "placements" && key != "total_cycles" && key != "dead_end")
      fail("/" + key, "unknown field");
  Mapping m;
  if (j.contains("device")) {
    const auto& d = j["device"];
    if (!d.is_object()) fail("/device", "not an object");
    for (const auto& [key, value] : d.items()) {
      if (!value.is_number_integer()) fail("/device/" + key, "not an integer");
      if (key == "num_tiles") m.device.num_tiles = value.get<int>();
      else if (key == "num_slots") m.device.num_slots = value.get<int>();
      else if (key == "ii") m.device.ii = value.get<int>();
      else if (key == "exec_latency") m.device.exec_latency = value.get<int>();
      else if (key == "reach_limit") m.device.reach_limit = value.get<int>();
      else fail("/device/" + key, "unknown field");
    }
  }
  if (!j.contains("placements") || !j["placements"].is_object()) fail("/placements", "missing or not an object");
  for (const auto& [key, value] : j["placements"].items()) {
    std::string path = "/placements/" + key;
    int node = 0;
    try {
      size_t used = 0;
      node = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail(path, "key is not a node id");
    }
    if (!value.is_object() || !value.contains("tile") || !value.contains("slot") ||
        !value["tile"].is_number_integer() || !value["slot"].is_number_integer())
      fail(path, "needs integer tile and slot");
    Placement p{value["tile"].get<int>(), value["slot"].get<int>(), -1};
    if (value.contains("fire_cycle")) {
      if (!value["fire_cycle"].is_number_integer()) fail(path + "/fire_cycle", "not an integer");
      p.fire_cycle = value["fire_cycle"].get<int>();
    }
    m.placements[node] = p;
  }
  if (j.contains("total_cycles") && j["total_cycles"].is_number_integer()) m.total_cycles = j["total_cycles"].get<int>();
  if (j.contains("dead_end")) m.dead_end = j["dead_end"].get<bool>();
  return m;
}

struct MappingViolation {
  int node = -1;  // -1 for mapping-level problems
  std::string what;
};

struct MappingReport {
  std::vector<MappingViolation> violations;
  std::map<int, int> fire_cycle;
  std::map<int, int> ready_time;
  std::optional<int> total_cycles;

  bool ok() const { return violations.empty(); }
};

inline nlohmann::json to_json(const MappingReport& r) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : r.violations) violations.push_back({{"node", v.node}, {"what", v.what}});
  nlohmann::json nodes = nlohmann::json::object();
  for (const auto& [v, fire] : r.fire_cycle)
    nodes[std::to_string(v)] = {{"fire_cycle", fire}, {"ready_time", r.ready_time.at(v)}};
  return {{"valid", r.ok()},
          {"violations", violations},
          {"nodes", nodes},
          {"total_cycles", r.total_cycles ? nlohmann::json(*r.total_cycles) : nlohmann::json(nullptr)}};
}

/// Replays the mapping in topological order, checking each placement against
/// the action mask and each recorded fire cycle against the timing model.
/// Offending placements are still applied so later nodes are checked too.
inline MappingReport validate_mapping(const DeviceConfig& cfg, const IRGraph& g, const Mapping& mapping) {
  MappingReport report;
  auto flag = [&](int node, std::string what) { report.violations.push_back({node, std::move(what)}); };

  const DeviceConfig& d = mapping.device;
  if (d.num_tiles != cfg.num_tiles || d.num_slots != cfg.num_slots || d.ii != cfg.ii ||
      d.exec_latency != cfg.exec_latency)
    flag(-1, "device section does not match the configured device");
  for (const auto& [node, p] : mapping.placements)
    if (node < 0 || node >= g.size()) flag(node, "unknown node");

  PlacementState state(cfg, g.size());
  for (int v : topological_order(g)) {
    auto it = mapping.placements.find(v);
    if (it == mapping.placements.end()) {
      flag(v, "unplaced node");
      continue;
    }
    const Placement& p = it->second;
    if (auto violated = check_placement(cfg, state, g, v, p.tile, p.slot)) {
      flag(v, constraint_name(*violated));
      // Slices that cannot be represented are dropped; other violations are
      // forced in so downstream timing can still be checked.
      if (*violated == Constraint::kTileRange || *violated == Constraint::kSlotRange ||
          *violated == Constraint::kOccupied || p.slot >= cfg.num_slots)
        continue;
    }
    int fire = earliest_fire(cfg, state, g, v, p.tile, p.slot, /*allow_unplaced=*/true);
    if (p.fire_cycle >= 0 && p.fire_cycle != fire)
      flag(v, "fire cycle mismatch: recorded " + std::to_string(p.fire_cycle) + ", timing model gives " +
                  std::to_string(fire));
    state = with_placement(state, v, {p.tile, p.slot}, fire, fire + cfg.exec_latency);
    report.fire_cycle[v] = fire;
    report.ready_time[v] = fire + cfg.exec_latency;
  }
  if (state.complete()) {
    report.total_cycles = total_cycles(cfg, state, g);
    if (mapping.total_cycles && *mapping.total_cycles != *report.total_cycles)
      flag(-1, "total_cycles mismatch: recorded " + std::to_string(*mapping.total_cycles) + ", timing model gives " +
                   std::to_string(*report.total_cycles));
  }
  return report;
}

}  // namespace semap

#pragma once

// Reference optimisers that do not learn: a greedy list scheduler, simulated
// annealing over mask-valid reassignments, and an exhaustive search used as
// ground truth on small instances.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "semap/device_model.hpp"
#include "semap/ir_graph.hpp"
#include "semap/rl_env.hpp"

namespace semap {

class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Topological order; each node goes to the legal slice with the smallest
/// fire cycle, ties to the lowest tile and then the lowest slot.
inline PlacementState greedy_state(const DeviceConfig& cfg, const IRGraph& g) {
  PlacementState state(cfg, g.size());
  for (int v : topological_order(g)) {
    int best_fire = std::numeric_limits<int>::max();
    std::optional<TileSlot> best;
    for (int t = 0; t < cfg.num_tiles; ++t)
      for (int s = 0; s < cfg.ii; ++s) {
        if (check_placement(cfg, state, g, v, t, s)) continue;
        int fire = earliest_fire(cfg, state, g, v, t, s);
        if (fire < best_fire) {
          best_fire = fire;
          best = TileSlot{t, s};
        }
      }
    if (!best) throw InfeasibleError("greedy: dead end at node " + std::to_string(v) + ", no legal tile slice");
    state = place_node(cfg, state, g, v, best->tile, best->slot);
  }
  return state;
}

inline Mapping greedy_schedule(const DeviceConfig& cfg, const IRGraph& g) {
  return mapping_from_state(cfg, greedy_state(cfg, g), g);
}

// ---------------------------------------------------------------------------
// Simulated annealing

enum class SAObjective { kCycles, kReturn };

struct SAConfig {
  double initial_temperature = 10.0;
  double alpha = 0.995;
  int steps = 20000;
  std::uint64_t seed = 0;
  SAObjective objective = SAObjective::kCycles;
  int max_restarts = 100;

  void validate() const {
    if (!(initial_temperature > 0)) throw ConfigError("sa: initial_temperature must be > 0");
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("sa: alpha must be in (0, 1)");
    if (steps < 0) throw ConfigError("sa: steps must be >= 0");
    if (max_restarts < 0) throw ConfigError("sa: max_restarts must be >= 0");
  }
};

struct SATracePoint {
  int step = 0;
  double temperature = 0;
  double objective = 0;
  double best = 0;
};

struct SAResult {
  Mapping mapping;
  double best_objective = 0;
  int best_cycles = 0;
  double best_return = 0;
  std::vector<SATracePoint> trace;  // step 0 is the initial assignment
};

inline std::string sa_trace_csv(const std::vector<SATracePoint>& trace) {
  std::ostringstream out;
  out << "step,temperature,objective,best\n";
  char buf[160];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.6g,%.6f,%.6f\n", p.step, p.temperature, p.objective, p.best);
    out << buf;
  }
  return out.str();
}

namespace detail {

// Random legal slice for every node in topological order; nullopt on a dead end.
inline std::optional<PlacementState> random_assignment(const DeviceConfig& cfg, const IRGraph& g,
                                                       const std::vector<int>& order, Rng& rng) {
  PlacementState state(cfg, g.size());
  for (int v : order) {
    ActionMask mask = valid_action_mask(cfg, state, g, v);
    std::vector<int> support;
    for (int a = 0; a < cfg.action_dim(); ++a)
      if (mask[a]) support.push_back(a);
    if (support.empty()) return std::nullopt;
    TileSlot at = action_to_tile_slot(cfg, support[std::uniform_int_distribution<size_t>(0, support.size() - 1)(rng)]);
    state = place_node(cfg, state, g, v, at.tile, at.slot);
  }
  return state;
}

inline double sa_objective(const DeviceConfig& cfg, const PlacementState& state, const IRGraph& g,
                           SAObjective kind) {
  if (!state.complete()) {
    // Scored like a dead-ended episode.
    int partial = 0;
    for (int v = 0; v < g.size(); ++v)
      if (state.is_placed(v)) partial = std::max(partial, state.ready_time(v));
    return kind == SAObjective::kCycles ? partial + cfg.lambda_penalty
                                        : -placement_return(state, g) + cfg.lambda_penalty;
  }
  return kind == SAObjective::kCycles ? static_cast<double>(total_cycles(cfg, state, g)) : -placement_return(state, g);
}

}  // namespace detail

/// Starts from the greedy schedule (or a random legal assignment when greedy
/// dead-ends), then repeatedly moves one random node to a random legal slice
/// and retimes. Worse moves are accepted with probability exp(-delta / T),
/// T shrinking geometrically. The best assignment seen is returned.
inline SAResult simulated_annealing(const DeviceConfig& cfg, const IRGraph& g, const SAConfig& sa) {
  cfg.validate();
  sa.validate();
  const std::vector<int> order = topological_order(g);
  Rng rng(sa.seed);

  std::optional<PlacementState> init;
  try {
    init = greedy_state(cfg, g);
  } catch (const InfeasibleError&) {
    for (int r = 0; r < sa.max_restarts && !init; ++r) init = detail::random_assignment(cfg, g, order, rng);
  }
  if (!init) throw InfeasibleError("infeasible instance: no legal initial assignment after " +
                                   std::to_string(sa.max_restarts) + " restarts");

  PlacementState current = *init, best = current;
  double current_obj = detail::sa_objective(cfg, current, g, sa.objective);
  double best_obj = current_obj;
  double temperature = sa.initial_temperature;

  SAResult result;
  result.trace.reserve(static_cast<size_t>(sa.steps) + 1);
  result.trace.push_back({0, temperature, current_obj, best_obj});
  std::uniform_int_distribution<int> pick_node(0, g.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int step = 1; step <= sa.steps; ++step) {
    const int v = pick_node(rng);
    PlacementState without = without_node(current, v);
    ActionMask mask = valid_action_mask(cfg, without, g, v);
    std::vector<int> support;
    for (int a = 0; a < cfg.action_dim(); ++a)
      if (mask[a]) support.push_back(a);
    // The node's own slice is always legal, so the support is never empty.
    TileSlot at = action_to_tile_slot(cfg, support[std::uniform_int_distribution<size_t>(0, support.size() - 1)(rng)]);
    PlacementState candidate =
        retime(cfg, g, with_placement(without, v, at, 0, cfg.exec_latency), order);
    double obj = detail::sa_objective(cfg, candidate, g, sa.objective);
    double delta = obj - current_obj;
    if (delta <= 0 || unit(rng) < std::exp(-delta / temperature)) {
      current = std::move(candidate);
      current_obj = obj;
      if (obj < best_obj) {
        best_obj = obj;
        best = current;
      }
    }
    temperature *= sa.alpha;
    result.trace.push_back({step, temperature, current_obj, best_obj});
  }

  result.mapping = mapping_from_state(cfg, best, g);
  result.best_objective = best_obj;
  result.best_cycles = total_cycles(cfg, best, g);
  result.best_return = placement_return(best, g);
  return result;
}

// ---------------------------------------------------------------------------
// Exhaustive search

struct BruteForceLimits {
  double max_states = 5e7;  // bound on (tiles * ii)^|N|
};

struct BruteForceResult {
  int optimal_cycles = 0;
  Mapping mapping;
  long long visited = 0;
};

inline double brute_force_state_estimate(const DeviceConfig& cfg, const IRGraph& g) {
  return std::pow(static_cast<double>(cfg.num_tiles) * cfg.ii, g.size());
}

/// Depth-first enumeration of every legal placement in topological order.
/// Branches whose partial makespan already reaches the best known value are
/// cut, which cannot discard an optimum because ready times only grow
/// downstream.
inline BruteForceResult brute_force_optimal(const DeviceConfig& cfg, const IRGraph& g,
                                            const BruteForceLimits& limits = {}) {
  cfg.validate();
  const double estimate = brute_force_state_estimate(cfg, g);
  if (estimate > limits.max_states) {
    std::ostringstream msg;
    msg << "brute force: search space estimate " << estimate << " states exceeds limit " << limits.max_states;
    throw ConfigError(msg.str());
  }
  const std::vector<int> order = topological_order(g);
  int best = std::numeric_limits<int>::max();
  std::optional<PlacementState> best_state;
  long long visited = 0;

  auto dfs = [&](auto&& self, const PlacementState& state, size_t depth, int makespan) -> void {
    ++visited;
    if (makespan >= best) return;
    if (depth == order.size()) {
      best = makespan;
      best_state = state;
      return;
    }
    const int v = order[depth];
    for (int t = 0; t < cfg.num_tiles; ++t)
      for (int s = 0; s < cfg.ii; ++s) {
        if (check_placement(cfg, state, g, v, t, s)) continue;
        PlacementState next = place_node(cfg, state, g, v, t, s);
        self(self, next, depth + 1, std::max(makespan, next.ready_time(v)));
      }
  };
  dfs(dfs, PlacementState(cfg, g.size()), 0, 0);
  if (!best_state) throw InfeasibleError("infeasible instance: no complete legal mapping exists");
  return {best, mapping_from_state(cfg, *best_state, g), visited};
}

}  // namespace semap

#pragma once

// Placement episodes: nodes are visited one at a time, the policy picks a
// tile slice for each, and the reward charges the delay a node adds on top of
// its latest-ready predecessor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "semap/device_model.hpp"
#include "semap/ir_graph.hpp"

namespace semap {

using Rng = std::mt19937_64;

enum class NodeOrder { kTopological, kRandom };

struct EnvOptions {
  NodeOrder order = NodeOrder::kTopological;
  // Without masking the policy may pick any tile slice and an illegal pick
  // ends the episode with the -lambda penalty.
  bool masking = true;
};

struct Observation {
  std::vector<double> ts_occupancy;  // (node_id + 1) / |N| per occupied slice, else 0
  int current_node = -1;
  int num_nodes = 0;
  std::shared_ptr<const IRGraph> graph;
};

struct StepInfo {
  int fire_cycle = -1;
  int ready_time = -1;
  bool dead_end = false;
  bool invalid_action = false;
};

struct StepResult {
  Observation observation;
  double reward = 0;
  bool done = false;
  StepInfo info;
};

class MappingEnv {
 public:
  MappingEnv(std::shared_ptr<const IRGraph> graph, DeviceConfig cfg, EnvOptions opts = {})
      : graph_(std::move(graph)), cfg_(cfg), opts_(opts) {
    cfg_.validate();
    if (auto violations = validate_graph(*graph_); !violations.empty())
      throw GraphError("environment: invalid graph '" + graph_->name() + "': " + violations.front().path + ": " +
                       violations.front().message);
    if (graph_->size() == 0) throw GraphError("environment: empty graph");
    topo_ = topological_order(*graph_);
  }

  const DeviceConfig& config() const { return cfg_; }
  const EnvOptions& options() const { return opts_; }
  const IRGraph& graph() const { return *graph_; }
  const std::shared_ptr<const IRGraph>& graph_ptr() const { return graph_; }
  const PlacementState& state() const { return state_; }
  const std::vector<int>& order() const { return order_; }
  bool done() const { return done_; }
  bool dead_end() const { return dead_end_; }
  double episode_return() const { return return_; }
  int current_node() const { return done_ ? -1 : order_[cursor_]; }

  Observation reset(std::uint64_t seed) {
    state_ = PlacementState(cfg_, graph_->size());
    order_ = topo_;
    if (opts_.order == NodeOrder::kRandom) {
      Rng rng(seed);
      std::shuffle(order_.begin(), order_.end(), rng);
    }
    cursor_ = 0;
    done_ = dead_end_ = false;
    return_ = 0;
    mask_ = valid_action_mask(cfg_, state_, *graph_, order_[0]);
    return observe();
  }

  /// Legal tile slices for the current node.
  const ActionMask& valid_mask() const { return mask_; }

  /// Support the policy samples from: the legal slices, or every slice when
  /// masking is disabled.
  ActionMask policy_mask() const {
    if (opts_.masking) return mask_;
    return ActionMask(static_cast<size_t>(cfg_.action_dim()), 1);
  }

  Observation observe() const {
    Observation obs;
    obs.ts_occupancy.assign(static_cast<size_t>(cfg_.action_dim()), 0.0);
    const double n = graph_->size();
    for (int a = 0; a < cfg_.action_dim(); ++a)
      if (int occ = state_.occupant(a); occ != -1) obs.ts_occupancy[a] = (occ + 1) / n;
    obs.current_node = current_node();
    obs.num_nodes = graph_->size();
    obs.graph = graph_;
    return obs;
  }

  StepResult step(TileSlot at) { return step(cfg_.action_index(at.tile, at.slot)); }

  /// Applies `action` (tile * num_slots + slot) to the current node. When the
  /// current node has no legal slice the action is ignored and the episode
  /// ends with -lambda.
  StepResult step(int action) {
    if (done_) throw PlacementError("step: episode is already done");
    StepResult result;
    const int node = order_[cursor_];
    if (count_valid(mask_) == 0) {
      return finish_early(result, /*dead_end=*/true);
    }
    if (action < 0 || action >= cfg_.action_dim() || !mask_[action]) {
      if (opts_.masking)
        throw PlacementError("step: action " + std::to_string(action) + " is masked out for node " +
                             std::to_string(node));
      return finish_early(result, /*dead_end=*/false);
    }
    const TileSlot at = action_to_tile_slot(cfg_, action);
    const bool random_order = opts_.order == NodeOrder::kRandom;
    state_ = place_node(cfg_, state_, *graph_, node, at.tile, at.slot, random_order);
    result.info.fire_cycle = state_.fire_cycle(node);
    result.info.ready_time = state_.ready_time(node);
    result.reward = -(state_.ready_time(node) - latest_predecessor_ready(state_, *graph_, node));
    ++cursor_;
    if (cursor_ == static_cast<int>(order_.size())) {
      done_ = true;
      if (random_order) {
        // Nodes placed ahead of their producers were timed optimistically.
        // Retime the finished mapping and settle the difference on the last
        // step so the return reflects the real schedule.
        state_ = retime(cfg_, *graph_, state_, topo_);
        double settled = placement_return(state_, *graph_);
        result.reward += settled - (return_ + result.reward);
      }
    } else {
      mask_ = valid_action_mask(cfg_, state_, *graph_, order_[cursor_]);
    }
    return_ += result.reward;
    result.done = done_;
    result.observation = observe();
    return result;
  }

  Mapping mapping() const {
    Mapping m = mapping_from_state(cfg_, state_, *graph_);
    m.dead_end = dead_end_;
    return m;
  }

 private:
  StepResult& finish_early(StepResult& result, bool dead_end) {
    result.reward = -cfg_.lambda_penalty;
    result.info.dead_end = dead_end;
    result.info.invalid_action = !dead_end;
    done_ = dead_end_ = true;
    return_ += result.reward;
    result.done = true;
    result.observation = observe();
    return result;
  }

  std::shared_ptr<const IRGraph> graph_;
  DeviceConfig cfg_;
  EnvOptions opts_;
  std::vector<int> topo_;
  std::vector<int> order_;
  PlacementState state_;
  ActionMask mask_;
  int cursor_ = 0;
  bool done_ = false;
  bool dead_end_ = false;
  double return_ = 0;
};

// ---------------------------------------------------------------------------
// Episodes

struct PolicyDecision {
  int action = -1;
  double log_prob = 0;
  double value = 0;
};

/// A policy picks an action under a mask; `value` is queried for steps where
/// no action can be taken.
template <typename P>
concept Policy = requires(P& p, const Observation& obs, const ActionMask& mask, Rng& rng) {
  { p.decide(obs, mask, rng) } -> std::convertible_to<PolicyDecision>;
  { p.value(obs) } -> std::convertible_to<double>;
};

struct Transition {
  Observation obs;
  ActionMask mask;
  int action = -1;  // -1: dead-end step, no action sampled
  double log_prob = 0;
  double reward = 0;
  double value = 0;
};

struct EpisodeResult {
  Mapping mapping;
  double episode_return = 0;
  std::vector<Transition> trajectory;
  bool dead_end = false;
  std::optional<int> total_cycles;
};

/// Plays one episode. Nodes listed in `pinned` are placed where given without
/// consulting the policy and are not recorded in the trajectory.
template <Policy P>
EpisodeResult run_episode(P& policy, MappingEnv& env, std::uint64_t seed, Rng& rng,
                          const std::map<int, TileSlot>& pinned = {}) {
  EpisodeResult out;
  Observation obs = env.reset(seed);
  while (!env.done()) {
    const int node = env.current_node();
    if (auto it = pinned.find(node); it != pinned.end()) {
      const int action = env.config().action_index(it->second.tile, it->second.slot);
      if (it->second.slot >= env.config().num_slots || !env.valid_mask()[action])
        throw PlacementError("pinned placement of node " + std::to_string(node) + " is not legal");
      auto r = env.step(action);
      obs = std::move(r.observation);
      continue;
    }
    Transition t;
    t.mask = env.policy_mask();
    t.obs = obs;
    if (count_valid(env.valid_mask()) == 0) {
      t.value = policy.value(obs);
    } else {
      PolicyDecision d = policy.decide(obs, t.mask, rng);
      t.action = d.action;
      t.log_prob = d.log_prob;
      t.value = d.value;
    }
    auto r = env.step(t.action);
    t.reward = r.reward;
    out.trajectory.push_back(std::move(t));
    obs = std::move(r.observation);
  }
  out.mapping = env.mapping();
  out.episode_return = env.episode_return();
  out.dead_end = env.dead_end();
  out.total_cycles = out.mapping.total_cycles;
  return out;
}

/// Uniform choice over the mask support.
struct RandomPolicy {
  PolicyDecision decide(const Observation&, const ActionMask& mask, Rng& rng) const {
    std::vector<int> support;
    for (int a = 0; a < static_cast<int>(mask.size()); ++a)
      if (mask[a]) support.push_back(a);
    std::uniform_int_distribution<size_t> pick(0, support.size() - 1);
    return {support[pick(rng)], -std::log(static_cast<double>(support.size())), 0.0};
  }
  double value(const Observation&) const { return 0.0; }
};

}  // namespace semap

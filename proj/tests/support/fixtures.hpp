#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <optional>
#include <random>

#include "semap/device_model.hpp"
#include "semap/ir_graph.hpp"

namespace fixtures {

inline semap::IRGraph make_graph(int n, std::vector<semap::Edge> edges,
                                 std::map<int, std::vector<std::string>> vars = {}, std::string name = "g") {
  std::vector<semap::InstructionNode> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back({i, "op", 0, vars.count(i) ? vars[i] : std::vector<std::string>{}});
  return semap::IRGraph(std::move(name), std::move(nodes), std::move(edges));
}

inline std::shared_ptr<const semap::IRGraph> share(semap::IRGraph g) {
  return std::make_shared<const semap::IRGraph>(std::move(g));
}

inline semap::IRGraph chain(int n) {
  std::vector<semap::Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return make_graph(n, e, {}, "chain" + std::to_string(n));
}

inline semap::IRGraph diamond() { return make_graph(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}}, {}, "diamond"); }

// Places every node in topological order on a uniformly random legal slice;
// nullopt on a dead end.
template <typename R>
std::optional<semap::PlacementState> random_complete_state(const semap::DeviceConfig& cfg, const semap::IRGraph& g,
                                                           R& rng) {
  semap::PlacementState s(cfg, g.size());
  for (int v : semap::topological_order(g)) {
    auto mask = semap::valid_action_mask(cfg, s, g, v);
    std::vector<int> support;
    for (int a = 0; a < cfg.action_dim(); ++a)
      if (mask[a]) support.push_back(a);
    if (support.empty()) return std::nullopt;
    auto at = semap::action_to_tile_slot(cfg, support[std::uniform_int_distribution<size_t>(0, support.size() - 1)(rng)]);
    s = semap::place_node(cfg, s, g, v, at.tile, at.slot);
  }
  return s;
}

}  // namespace fixtures

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semap/baselines.hpp"

using namespace semap;
using fixtures::make_graph;

namespace {

DeviceConfig device(int tiles, int slots, int ii) {
  DeviceConfig d;
  d.num_tiles = tiles;
  d.num_slots = slots;
  d.ii = ii;
  return d;
}

// Exhaustive minimum by plain enumeration of every tile-slice tuple, timed
// with the cycle-stepped simulator; no pruning and no library timing.
int enumerate_optimum(const DeviceConfig& d, const IRGraph& g) {
  const int slices = d.num_tiles * d.ii;
  std::vector<int> digits(g.size(), 0);
  int best = std::numeric_limits<int>::max();
  while (true) {
    std::vector<std::pair<int, int>> ts;
    std::map<int, std::pair<int, int>> placed;
    bool legal = true;
    for (int v : topological_order(g)) {
      std::pair<int, int> at{digits[v] / d.ii, digits[v] % d.ii};
      if (!oracle::placement_allowed(d, g, placed, v, at.first, at.second)) {
        legal = false;
        break;
      }
      placed[v] = at;
    }
    if (legal) {
      for (int v = 0; v < g.size(); ++v) ts.push_back(placed[v]);
      auto sim = oracle::simulate(d, g, ts);
      if (!sim.deadlocked) best = std::min(best, sim.total_cycles);
    }
    int k = 0;
    while (k < g.size() && ++digits[k] == slices) digits[k++] = 0;
    if (k == g.size()) break;
  }
  return best;
}

}  // namespace

TEST(Greedy, SingleNode) {
  Mapping m = greedy_schedule(DeviceConfig{}, make_graph(1, {}));
  EXPECT_EQ(m.placements.at(0), (Placement{0, 0, 0}));
}

TEST(Greedy, ChainOfTwo) {
  DeviceConfig d;
  Mapping m = greedy_schedule(d, fixtures::chain(2));
  // Same-tile feedback: arrival 0+3+0-1 = 2, slot 2 fires at 2. Neighbour tile
  // would give arrival 3 and slot 0 at 3.
  EXPECT_EQ(m.placements.at(1), (Placement{0, 2, 2}));
  EXPECT_EQ(*m.total_cycles, 5);
}

TEST(Greedy, DistanceCalcIsValid) {
  DeviceConfig d;
  IRGraph g = distance_calc_graph();
  Mapping m = greedy_schedule(d, g);
  EXPECT_TRUE(validate_mapping(d, g, m).ok());
}

TEST(Greedy, DeadEndNamesNode) {
  DeviceConfig d = device(2, 3, 3);
  try {
    greedy_schedule(d, make_graph(4, {{0, 1}, {0, 2}, {0, 3}}));
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("node 3"), std::string::npos) << e.what();
  }
}

TEST(BruteForce, SingleNode) { EXPECT_EQ(brute_force_optimal(DeviceConfig{}, make_graph(1, {})).optimal_cycles, 3); }

TEST(BruteForce, TwoNodeChainTwoTilesIiOne) {
  DeviceConfig d = device(2, 1, 1);
  IRGraph g = fixtures::chain(2);
  auto r = brute_force_optimal(d, g);
  // With ii = 1 each tile has one slice, so the consumer must cross tiles.
  EXPECT_EQ(r.optimal_cycles, 6);
  EXPECT_EQ(enumerate_optimum(d, g), 6);
  EXPECT_NE(r.mapping.placements.at(0).tile, r.mapping.placements.at(1).tile);
}

TEST(BruteForce, DiamondAgreesWithEnumeration) {
  DeviceConfig d = device(4, 2, 2);
  IRGraph g = fixtures::diamond();
  auto r = brute_force_optimal(d, g);
  EXPECT_EQ(r.optimal_cycles, enumerate_optimum(d, g));
  EXPECT_TRUE(validate_mapping(d, g, r.mapping).ok());
}

TEST(BruteForce, SmallRandomGraphsAgreeWithEnumeration) {
  DeviceConfig d = device(3, 2, 2);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    IRGraph g = random_graph(4, seed);
    int expect = enumerate_optimum(d, g);
    if (expect == std::numeric_limits<int>::max()) {
      EXPECT_THROW(brute_force_optimal(d, g), InfeasibleError);
    } else {
      EXPECT_EQ(brute_force_optimal(d, g).optimal_cycles, expect) << seed;
    }
  }
}

TEST(BruteForce, LimitReportsEstimate) {
  try {
    brute_force_optimal(DeviceConfig{}, random_graph(12, 1), BruteForceLimits{1e6});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("estimate"), std::string::npos);
  }
}

TEST(SimulatedAnnealing, SingleNode) {
  SAConfig sa;
  sa.steps = 50;
  EXPECT_EQ(simulated_annealing(DeviceConfig{}, make_graph(1, {}), sa).best_cycles, 3);
}

TEST(SimulatedAnnealing, DiamondNearOptimum) {
  DeviceConfig d = device(4, 2, 2);
  IRGraph g = fixtures::diamond();
  int optimum = brute_force_optimal(d, g).optimal_cycles;
  int close = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SAConfig sa;
    sa.steps = 20000;
    sa.seed = seed;
    close += simulated_annealing(d, g, sa).best_cycles <= optimum + 1;
  }
  EXPECT_GE(close, 4);
}

TEST(SimulatedAnnealing, TraceBestNonIncreasing) {
  DeviceConfig d;
  SAConfig sa;
  sa.steps = 3000;
  sa.seed = 4;
  auto r = simulated_annealing(d, fft_like_graph(), sa);
  ASSERT_EQ(r.trace.size(), 3001u);
  double running = r.trace[0].objective;
  for (const auto& p : r.trace) {
    running = std::min(running, p.objective);
    EXPECT_EQ(p.best, running);
  }
  for (size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].best, r.trace[i - 1].best);
  EXPECT_TRUE(validate_mapping(d, fft_like_graph(), r.mapping).ok());
  EXPECT_EQ(sa_trace_csv(r.trace).substr(0, 32), "step,temperature,objective,best\n");
}

TEST(SimulatedAnnealing, ReturnObjective) {
  DeviceConfig d;
  SAConfig sa;
  sa.steps = 2000;
  sa.objective = SAObjective::kReturn;
  auto r = simulated_annealing(d, distance_calc_graph(), sa);
  EXPECT_DOUBLE_EQ(r.best_objective, -r.best_return);
}

TEST(SimulatedAnnealing, InfeasibleInstance) {
  SAConfig sa;
  sa.max_restarts = 5;
  try {
    simulated_annealing(device(2, 3, 3), make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}), sa);
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible instance"), std::string::npos);
  }
}

TEST(Properties, OracleOrdering) {
  DeviceConfig d = device(3, 3, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    IRGraph g = random_graph(5, seed);
    int bf = 0, gr = 0;
    try {
      bf = brute_force_optimal(d, g).optimal_cycles;
      Mapping m = greedy_schedule(d, g);
      gr = *m.total_cycles;
      EXPECT_TRUE(validate_mapping(d, g, m).ok());
    } catch (const InfeasibleError&) {
      continue;
    }
    SAConfig sa;
    sa.steps = 500;
    sa.seed = seed;
    auto r = simulated_annealing(d, g, sa);
    EXPECT_LE(bf, gr);
    EXPECT_LE(gr, r.trace[0].objective);
    EXPECT_LE(bf, r.best_cycles);
    EXPECT_TRUE(validate_mapping(d, g, r.mapping).ok());
  }
}

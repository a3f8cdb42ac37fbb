// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semap/cli.hpp"
#include "semap/semap.hpp"

namespace fs = std::filesystem;
using namespace semap;
using fixtures::share;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("semap_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TrainConfig train_config(int epochs, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = epochs;
  t.seed = seed;
  t.log_wall_time = false;
  return t;
}

ModelConfig model_for(const DeviceConfig& d, bool gga = true) {
  ModelConfig m;
  m.action_dim = d.action_dim();
  m.use_gga = gga;
  return m;
}

TrainResult train_once(const std::vector<std::shared_ptr<const IRGraph>>& graphs, const DeviceConfig& d,
                       const TrainConfig& t, bool gga = true) {
  PpoTrainer trainer(ActorCritic(model_for(d, gga), t.seed), d, t);
  return trainer.train(graphs);
}

// ---------------------------------------------------------------------------

Outcome timing_example() {
  DeviceConfig d;
  d.num_tiles = 16;
  d.ii = 3;
  d.exec_latency = 3;
  IRGraph g = fixtures::chain(2);
  PlacementState s = place_node(d, PlacementState(d, 2), g, 0, 3, 0);
  if (s.fire_cycle(0) != 0) return {false, "producer does not fire at cycle 0"};
  int best_slot = -1, best_fire = 1 << 30;
  for (int slot = 0; slot < d.ii; ++slot) {
    int f = earliest_fire(d, s, g, 1, 1, slot);
    if (f < best_fire) best_fire = f, best_slot = slot;
  }
  PlacementState t = place_node(d, s, g, 1, 1, best_slot);
  bool ok = best_slot == 1 && t.fire_cycle(1) == 4 && t.ready_time(1) == 7;
  return {ok, fmt("consumer on tile 1: slot %d fire %d ready %d (expected 1/4/7)", best_slot, t.fire_cycle(1),
                  t.ready_time(1))};
}

Outcome simulator_equivalence() {
  std::mt19937_64 rng(2024);
  int checked = 0, mismatches = 0, random_graphs = 0;
  auto check = [&](const DeviceConfig& d, const IRGraph& g) -> bool {
    for (int attempt = 0; attempt < 50; ++attempt) {
      auto s = fixtures::random_complete_state(d, g, rng);
      if (!s) continue;
      auto sim = oracle::simulate(d, g, oracle::assignment_of(*s));
      bool same = !sim.deadlocked && sim.total_cycles == total_cycles(d, *s, g);
      for (int v = 0; same && v < g.size(); ++v) same = sim.fire[v] == s->fire_cycle(v);
      ++checked;
      if (!same) ++mismatches;
      return true;
    }
    return false;
  };
  for (const IRGraph& g : {distance_calc_graph(), fft_like_graph()})
    for (int ii : {1, 2, 3, 4})
      for (int rep = 0; rep < 5; ++rep) {
        DeviceConfig d;
        d.ii = ii;
        check(d, g);
      }
  for (std::uint64_t seed = 1; random_graphs < 100 && seed < 10000; ++seed) {
    std::uniform_int_distribution<int> n(1, 12), tiles(2, 16), ii(1, 4), lat(1, 4);
    DeviceConfig d;
    d.num_tiles = tiles(rng);
    d.ii = ii(rng);
    d.num_slots = std::max(d.ii, 4);
    d.exec_latency = lat(rng);
    if (check(d, random_graph(n(rng), seed))) ++random_graphs;
  }
  return {mismatches == 0 && random_graphs == 100,
          fmt("%d mappings checked (%d random graphs), %d mismatches", checked, random_graphs, mismatches)};
}

Outcome mask_soundness() {
  std::mt19937_64 rng(7);
  int states = 0, violations = 0, actions = 0;
  std::string first;
  while (states < 1000) {
    DeviceConfig d;
    d.num_tiles = std::uniform_int_distribution<int>(1, 4)(rng);
    d.ii = std::uniform_int_distribution<int>(1, 3)(rng);
    d.num_slots = 3;
    if (rng() % 3 == 0) d.reach_limit = 1;
    IRGraph g = random_graph(std::uniform_int_distribution<int>(2, 8)(rng), rng());
    PlacementState s(d, g.size());
    std::map<int, std::pair<int, int>> placed;
    const bool any_order = rng() % 2;
    std::vector<int> order = topological_order(g);
    if (any_order) std::shuffle(order.begin(), order.end(), rng);
    for (int v : order) {
      ++states;
      ActionMask mask = valid_action_mask(d, s, g, v);
      std::vector<int> legal;
      for (int a = 0; a < d.action_dim(); ++a) {
        ++actions;
        TileSlot at = action_to_tile_slot(d, a);
        bool succeeded = true;
        try {
          place_node(d, s, g, v, at.tile, at.slot, any_order);
        } catch (const PlacementError&) {
          succeeded = false;
        }
        bool oracle_ok = oracle::placement_allowed(d, g, placed, v, at.tile, at.slot);
        if (static_cast<bool>(mask[a]) != succeeded || succeeded != oracle_ok) {
          if (first.empty()) first = fmt("; first: node %d action %d mask %d", v, a, int(mask[a]));
          ++violations;
        }
        if (mask[a]) legal.push_back(a);
      }
      if (legal.empty()) break;
      TileSlot at = action_to_tile_slot(d, legal[std::uniform_int_distribution<size_t>(0, legal.size() - 1)(rng)]);
      s = place_node(d, s, g, v, at.tile, at.slot, any_order);
      placed[v] = {at.tile, at.slot};
    }
  }
  return {violations == 0, fmt("%d states, %d actions probed, %d violations", states, actions, violations) + first};
}

Outcome masked_sampling() {
  std::mt19937_64 rng(11);
  DeviceConfig d;
  long samples = 0, bad = 0;
  for (int p = 0; p < 100; ++p) {
    ActorCritic model(model_for(d), 1000 + p);
    // Spread the logits so sampling is not close to uniform.
    auto head = model.actor_parameters();
    for (auto& prm : head)
      if (prm.name == "actor.head.weight") *prm.value *= 100.0;
    auto g = share(random_graph(std::uniform_int_distribution<int>(2, 20)(rng), rng()));
    GraphInputCache cache;
    for (int m = 0; m < 10; ++m) {
      Observation obs;
      obs.graph = g;
      obs.num_nodes = g->size();
      obs.current_node = static_cast<int>(rng() % g->size());
      obs.ts_occupancy.assign(static_cast<size_t>(d.action_dim()), 0.0);
      for (auto& x : obs.ts_occupancy)
        if (rng() % 4 == 0) x = std::uniform_real_distribution<double>(0, 1)(rng);
      const double density = std::uniform_real_distribution<double>(0.02, 1.0)(rng);
      ActionMask mask(static_cast<size_t>(d.action_dim()), 0);
      for (auto& b : mask) b = std::bernoulli_distribution(density)(rng);
      mask[rng() % mask.size()] = 1;
      auto out = model.forward(obs, mask, cache);
      for (int k = 0; k < 100; ++k, ++samples) {
        int a = sample_action(out.dist, rng);
        if (a < 0 || !mask[a]) ++bad;
      }
    }
  }
  double worst = 0;
  for (int k = 1; k <= d.action_dim(); ++k) {
    ActionMask mask(static_cast<size_t>(d.action_dim()), 0);
    std::vector<int> idx(mask.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < k; ++i) mask[idx[i]] = 1;
    std::vector<double> logits(mask.size());
    const double c = std::uniform_real_distribution<double>(-5, 5)(rng);
    for (size_t a = 0; a < logits.size(); ++a) logits[a] = mask[a] ? c : std::uniform_real_distribution<double>(-9, 9)(rng);
    worst = std::max(worst, std::abs(masked_distribution(logits, mask).entropy - std::log(static_cast<double>(k))));
  }
  return {bad == 0 && samples == 100000 && worst <= 1e-6,
          fmt("%ld samples, %ld outside mask, max |H - ln k| = %.2e", samples, bad, worst)};
}

Outcome gradient_check() {
  DeviceConfig d;
  d.num_tiles = 4;
  d.num_slots = 3;
  d.ii = 3;
  ModelConfig mc;
  mc.embed_width = 4;
  mc.gnn_hidden = 8;
  mc.attention_heads = 2;
  mc.mlp_hidden = 8;
  mc.action_dim = d.action_dim();
  ActorCritic model(mc, 17);
  auto batch = collect_rollouts(model, {share(random_graph(6, 5)), share(distance_calc_graph())}, d, {}, 4, 3);
  compute_returns_advantages(batch.buffer, 0.99, true);
  std::vector<const Transition*> steps;
  std::vector<double> adv, targets;
  for (size_t i = 0; i < batch.buffer.size(); ++i)
    if (batch.buffer.steps[i].action >= 0) {
      steps.push_back(&batch.buffer.steps[i]);
      adv.push_back(batch.buffer.advantages[i]);
      // Unit-scale regression targets keep the loss small enough that
      // rounding does not swamp the difference quotients.
      targets.push_back(batch.buffer.advantages[i]);
    }
  GraphInputCache cache;
  const double h = 1e-5;
  int compared = 0, failed = 0;
  double worst = 0;
  auto compare = [&](std::vector<nn::ParamRef> params, const std::function<double(bool)>& loss) {
    nn::zero_grad(params);
    loss(true);
    for (auto& p : params) {
      Matrix analytic = *p.grad;
      for (Eigen::Index e = 0; e < p.value->size(); ++e) {
        double keep = p.value->data()[e];
        auto central = [&](double step) {
          p.value->data()[e] = keep + step;
          double up = loss(false);
          p.value->data()[e] = keep - step;
          double down = loss(false);
          p.value->data()[e] = keep;
          return (up - down) / (2 * step);
        };
        // Richardson extrapolation of two central differences, error O(h^4).
        double numeric = (4 * central(h / 2) - central(h)) / 3, a = analytic.data()[e];
        double scale = std::max(std::abs(a), std::abs(numeric));
        double err = scale > 1e-6 ? std::abs(a - numeric) / scale : 0.0;
        if (scale <= 1e-6 && std::abs(a - numeric) > 1e-9) err = 1.0;
        worst = std::max(worst, err);
        ++compared;
        if (err > 1e-4) ++failed;
      }
    }
  };
  compare(model.actor_parameters(), [&](bool backward) {
    return actor_loss(model, steps, adv, 0.2, 0.01, cache, backward).loss;
  });
  compare(model.critic_parameters(), [&](bool backward) { return critic_loss(model, steps, targets, cache, backward); });
  return {failed == 0, fmt("%d parameters compared over %zu steps, %d beyond 1e-4, worst relative error %.2e",
                           compared, steps.size(), failed, worst)};
}

Outcome reaches_optimum() {
  DeviceConfig d;
  d.num_tiles = 4;
  d.num_slots = 2;
  d.ii = 2;
  int hits = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto g = share(random_graph(4, seed));
    auto opt = brute_force_optimal(d, *g);
    auto r = train_once({g}, d, train_config(2000, seed));
    bool hit = r.best_cycles && *r.best_cycles == opt.optimal_cycles;
    hits += hit;
    rows += fmt(" %d/%d", r.best_cycles ? *r.best_cycles : -1, opt.optimal_cycles);
  }
  return {hits >= 4, fmt("%d/5 instances at the optimum (rl/optimal:%s)", hits, rows.c_str())};
}

Outcome masking_ablation() {
  DeviceConfig d;
  auto g = share(random_graph(15, 77));
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig masked = train_config(2000, seed), penalty = masked;
    penalty.masking = false;
    double a = train_once({g}, d, masked).best_return, b = train_once({g}, d, penalty).best_return;
    wins += a >= b;
    rows += fmt(" %.0f/%.0f", a, b);
  }
  return {wins >= 4, fmt("masked >= penalty-only on %d/5 seeds (best return masked/penalty:%s)", wins, rows.c_str())};
}

Outcome gga_ablation() {
  DeviceConfig d;
  int wins = 0;
  double sum_gga = 0, sum_mlp = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto g = share(random_graph(20, 500 + seed));
    auto cfg = train_config(2000, seed);
    auto a = train_once({g}, d, cfg, true).best_cycles, b = train_once({g}, d, cfg, false).best_cycles;
    const int ca = a ? *a : 1 << 20, cb = b ? *b : 1 << 20;
    wins += ca <= cb;
    sum_gga += ca;
    sum_mlp += cb;
    rows += fmt(" %d/%d", ca, cb);
  }
  return {wins >= 3, fmt("gga <= mlp on %d/5 graphs (best cycles gga/mlp:%s; mean improvement %.1f%%)", wins,
                         rows.c_str(), 100.0 * (sum_mlp - sum_gga) / sum_mlp)};
}

Outcome ordering_ablation() {
  DeviceConfig d;
  auto g = share(random_graph(15, 91));
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig topo = train_config(2000, seed), shuffled = topo;
    shuffled.order = NodeOrder::kRandom;
    double a = train_once({g}, d, topo).best_return, b = train_once({g}, d, shuffled).best_return;
    wins += a >= b;
    rows += fmt(" %.0f/%.0f", a, b);
  }
  return {wins >= 4, fmt("topological >= random on %d/5 seeds (best return topo/random:%s)", wins, rows.c_str())};
}

Outcome sa_comparison() {
  DeviceConfig d;
  auto g = share(fft_like_graph());
  const int budget = 2000;
  int wins = 0;
  bool trace_ok = true;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    double rl = train_once({g}, d, train_config(budget, seed)).best_return;
    SAConfig sa;
    sa.steps = budget;
    sa.seed = seed;
    sa.objective = SAObjective::kReturn;
    SAResult s = simulated_annealing(d, *g, sa);
    for (size_t i = 1; i < s.trace.size(); ++i) trace_ok &= s.trace[i].best <= s.trace[i - 1].best;
    wins += rl >= s.best_return;
    rows += fmt(" %.0f/%.0f", rl, s.best_return);
  }
  return {wins >= 3 && trace_ok, fmt("rl >= sa on %d/5 seeds (best return rl/sa:%s); sa running minimum %s", wins,
                                     rows.c_str(), trace_ok ? "non-increasing" : "INCREASED")};
}

Outcome finetune_benefit() {
  DeviceConfig d;
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<std::shared_ptr<const IRGraph>> corpus;
    for (int k = 0; k < 10; ++k) corpus.push_back(share(random_graph(10 + k % 6, 100 * seed + k)));
    auto held_out = share(random_graph(14, 9000 + seed));
    TrainConfig pre = train_config(2000, seed);
    PpoTrainer trainer(ActorCritic(model_for(d), seed), d, pre);
    trainer.train(corpus);
    const fs::path ckpt = scratch_dir("finetune") / "pre.json";
    trainer.save_checkpoint(ckpt.string());
    TrainConfig one = train_config(pre.episodes_per_iter, seed + 100);
    double tuned = finetune(load_checkpoint(ckpt.string()), held_out, d, one).first_iter_best_return;
    double scratch = train_once({held_out}, d, one).first_iter_best_return;
    wins += tuned >= scratch;
    rows += fmt(" %.0f/%.0f", tuned, scratch);
  }
  return {wins >= 3, fmt("finetuned >= scratch on %d/5 seeds (first-iteration best return tuned/scratch:%s)", wins,
                         rows.c_str())};
}

Outcome determinism() {
  DeviceConfig d;
  auto g = share(random_graph(12, 3));
  std::vector<std::string> differing;
  fs::path dirs[2] = {scratch_dir("det_a"), scratch_dir("det_b")};
  for (auto& dir : dirs) {
    PpoTrainer trainer(ActorCritic(model_for(d), 5), d, train_config(256, 5));
    trainer.train({g}, dir.string());
  }
  for (const char* f : {"metrics.csv", "best_mapping.json", "checkpoint.json"})
    if (slurp(dirs[0] / f) != slurp(dirs[1] / f) || slurp(dirs[0] / f).empty()) differing.push_back(f);

  // Same through the command line.
  fs::path base = scratch_dir("det_cli");
  std::ofstream(base / "graph.json") << serialize_ir(*g);
  std::ofstream(base / "config.json") << R"({"seed": 9, "train": {"epochs": 128, "log_wall_time": false}})";
  for (const char* out : {"a", "b"}) {
    std::string gp = (base / "graph.json").string(), cp = (base / "config.json").string(), op = (base / out).string();
    const char* argv[] = {"se-mapper", "train", "--config", cp.c_str(), "--out", op.c_str(), gp.c_str()};
    std::ostringstream sink;
    cli::run_cli(7, argv, sink, sink);
  }
  for (const char* f : {"metrics.csv", "best_mapping.json"})
    if (slurp(base / "a" / f) != slurp(base / "b" / f) || slurp(base / "a" / f).empty())
      differing.push_back(std::string("cli ") + f);
  std::string list;
  for (auto& s : differing) list += " " + s;
  return {differing.empty(), differing.empty() ? "metrics, mappings and checkpoints byte-identical (library and CLI)"
                                               : "differing:" + list};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"timing example (16 tiles, ii 3)", timing_example},
      {"timing matches cycle-stepped simulator", simulator_equivalence},
      {"mask soundness on small devices", mask_soundness},
      {"masked sampling validity and support entropy", masked_sampling},
      {"actor and critic gradients vs finite differences", gradient_check},
      {"rl reaches brute-force optimum", reaches_optimum},
      {"masking ablation", masking_ablation},
      {"gga vs mlp ablation", gga_ablation},
      {"node ordering ablation", ordering_ablation},
      {"rl vs simulated annealing", sa_comparison},
      {"finetune benefit", finetune_benefit},
      {"determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail
              << fmt(" (%.1f s)", secs) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

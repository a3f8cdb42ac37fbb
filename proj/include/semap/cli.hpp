#pragma once

// se-mapper command implementations. run_cli() is the whole program; the
// tools/ executable only forwards argv so tests can drive commands in-process.
//
// Exit codes: 0 success, 1 validation failure, 2 usage or configuration
// error, 3 dead-end mapping.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semap/baselines.hpp"
#include "semap/device_model.hpp"
#include "semap/ir_graph.hpp"
#include "semap/plot.hpp"
#include "semap/policy_models.hpp"
#include "semap/ppo_trainer.hpp"
#include "semap/rl_env.hpp"
#include "semap/run_config.hpp"

namespace semap::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kValidationFailed = 1, kUsage = 2, kDeadEnd = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::string config_path;
  std::optional<int> tiles, slots, ii, epochs, workers, episodes_per_iter;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool no_gga = false, no_mask = false, random_order = false;
  bool any_device_flag() const { return !config_path.empty() || tiles || slots || ii; }
};

inline void add_device_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--tiles", o.tiles, "number of tiles");
  cmd->add_option("--slots", o.slots, "instruction slots per tile");
  cmd->add_option("--ii", o.ii, "initiation interval");
  cmd->add_option("--seed", o.seed, "random seed (falls back to config, then SE_MAPPER_SEED)");
}

inline void add_train_flags(CLI::App* cmd, Overrides& o) {
  add_device_flags(cmd, o);
  cmd->add_option("--epochs", o.epochs, "training episodes in total");
  cmd->add_option("--episodes-per-iter", o.episodes_per_iter, "episodes per PPO iteration");
  cmd->add_option("--workers", o.workers, "rollout threads");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_flag("--no-gga", o.no_gga, "baseline MLP policy without the graph encoder");
  cmd->add_flag("--no-mask", o.no_mask, "no action masking; illegal actions end the episode with a penalty");
  cmd->add_flag("--random-order", o.random_order, "visit nodes in random instead of topological order");
}

inline std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SE_MAPPER_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(std::string("SE_MAPPER_SEED is not an unsigned integer: ") + s);
  }
}

/// Config file, then command-line flags, then seed fallback.
inline RunConfig resolve_config(const Overrides& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot read config " + o.config_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + o.config_path + ": " + e.what());
    }
  }
  const bool file_seed = j.is_object() && j.contains("seed");
  RunConfig c = run_config_from_json(j);
  if (o.tiles) c.device.num_tiles = *o.tiles;
  if (o.slots) c.device.num_slots = *o.slots;
  if (o.ii) c.device.ii = *o.ii;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.episodes_per_iter) c.train.episodes_per_iter = *o.episodes_per_iter;
  if (o.workers) c.train.workers = *o.workers;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.no_gga) c.model.use_gga = false;
  if (o.no_mask) c.train.masking = false;
  if (o.random_order) c.train.order = NodeOrder::kRandom;
  if (o.seed)
    c.seed = *o.seed;
  else if (!file_seed)
    if (auto s = env_seed()) c.seed = *s;
  c.finalize();
  return c;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::shared_ptr<const IRGraph> load_graph(const std::string& path) {
  try {
    return std::make_shared<const IRGraph>(parse_ir(read_text(path)));
  } catch (const GraphError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

inline std::vector<std::shared_ptr<const IRGraph>> load_graphs(const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("no graph files given");
  std::vector<std::shared_ptr<const IRGraph>> out;
  for (const auto& p : paths) out.push_back(load_graph(p));
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string reward_curve_svg(const TrainResult& r, const std::string& title) {
  plot::Series mean{"mean return", {}, {}}, best{"best return", {}, {}};
  for (const auto& m : r.metrics) {
    mean.x.push_back(static_cast<double>(m.episodes));
    mean.y.push_back(m.mean_return);
    best.x.push_back(static_cast<double>(m.episodes));
    best.y.push_back(m.best_return);
  }
  return plot::line_chart(title, "episodes", "return", {mean, best});
}

/// Prints per-graph results and checks every best mapping; false if any
/// mapping fails validation.
inline bool report_training(const TrainResult& r, const std::vector<std::shared_ptr<const IRGraph>>& graphs,
                            const DeviceConfig& device, std::ostream& out) {
  bool ok = true;
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& best = r.per_graph[gi];
    out << graphs[gi]->name() << ": best_return " << best.best_return;
    if (best.best_cycles) {
      out << " total_cycles " << *best.best_cycles;
      auto report = validate_mapping(device, *graphs[gi], *best.best_cycles_mapping);
      if (!report.ok()) {
        ok = false;
        out << " (INVALID: " << report.violations.front().what << ")";
      }
    } else {
      out << " total_cycles none (every episode dead-ended)";
    }
    out << "\n";
  }
  return ok;
}

inline void write_run_artifacts(const RunConfig& cfg, const TrainResult& r, const std::string& title) {
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config.json", to_json(cfg).dump(2) + "\n");
  write_text(fs::path(cfg.out_dir) / "reward_curve.svg", reward_curve_svg(r, title));
}

// ---------------------------------------------------------------------------

inline int cmd_train(const Overrides& o, const std::vector<std::string>& graph_paths, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  auto paths = graph_paths.empty() ? cfg.graphs : graph_paths;
  cfg.graphs = paths;
  auto graphs = load_graphs(paths);
  PpoTrainer trainer(ActorCritic(cfg.model, cfg.seed), cfg.device, cfg.train);
  TrainResult r = trainer.train(graphs, cfg.out_dir);
  write_run_artifacts(cfg, r, "training reward");
  return report_training(r, graphs, cfg.device, out) ? kOk : kValidationFailed;
}

inline int cmd_finetune(const Overrides& o, const std::string& checkpoint, const std::string& graph_path,
                        std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  if (!o.any_device_flag() && ckpt.extras.device) {
    cfg.device = *ckpt.extras.device;
    cfg.finalize();
  }
  if (ckpt.model.config().action_dim != cfg.device.action_dim())
    throw ConfigError("incompatible checkpoint: action_dim " + std::to_string(ckpt.model.config().action_dim) +
                      " vs device " + std::to_string(cfg.device.action_dim()));
  cfg.model = ckpt.model.config();
  cfg.graphs = {graph_path};
  auto graph = load_graph(graph_path);
  TrainResult r = finetune(ckpt, graph, cfg.device, cfg.train, cfg.out_dir);
  write_run_artifacts(cfg, r, "finetuning reward");
  return report_training(r, {graph}, cfg.device, out) ? kOk : kValidationFailed;
}

inline int cmd_map(const Overrides& o, const std::string& checkpoint, const std::string& graph_path,
                   const std::string& partial_path, const std::string& out_path, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  DeviceConfig device = cfg.device;
  if (!o.any_device_flag() && ckpt.extras.device) device = *ckpt.extras.device;
  if (ckpt.model.config().action_dim != device.action_dim())
    throw ConfigError("incompatible checkpoint: action_dim " + std::to_string(ckpt.model.config().action_dim) +
                      " vs device tiles x slots " + std::to_string(device.action_dim()));
  auto graph = load_graph(graph_path);

  std::map<int, TileSlot> pinned;
  if (!partial_path.empty()) {
    Mapping partial;
    try {
      partial = mapping_from_json(nlohmann::json::parse(read_text(partial_path)));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(partial_path + ": " + e.what());
    } catch (const PlacementError& e) {
      throw UsageError(partial_path + ": " + e.what());
    }
    for (const auto& [node, p] : partial.placements) {
      if (node < 0 || node >= graph->size())
        throw UsageError("partial mapping names unknown node " + std::to_string(node));
      if (p.tile < 0 || p.tile >= device.num_tiles || p.slot < 0 || p.slot >= device.ii)
        throw UsageError("partial mapping places node " + std::to_string(node) + " outside the device");
      pinned[node] = {p.tile, p.slot};
    }
  }

  MappingEnv env(graph, device, EnvOptions{NodeOrder::kTopological, true});
  PolicyRunner runner(ckpt.model, /*greedy=*/true);
  Rng rng(cfg.seed);
  EpisodeResult ep;
  try {
    ep = run_episode(runner, env, cfg.seed, rng, pinned);
  } catch (const PlacementError& e) {
    throw UsageError(e.what());
  }
  const std::string text = serialize_mapping(ep.mapping);
  if (out_path.empty())
    out << text;
  else
    write_text(out_path, text);
  if (ep.dead_end) {
    int stuck = -1;
    for (int v : env.order())
      if (!env.state().is_placed(v)) {
        stuck = v;
        break;
      }
    std::cerr << "dead end: node " << stuck << " has no legal tile slice\n";
    return kDeadEnd;
  }
  if (!out_path.empty()) out << "total_cycles " << *ep.total_cycles << "\n";
  return validate_mapping(device, *graph, ep.mapping).ok() ? kOk : kValidationFailed;
}

inline int cmd_validate(const Overrides& o, const std::string& graph_path, const std::string& mapping_path,
                        std::ostream& out) {
  auto graph = load_graph(graph_path);
  Mapping m;
  try {
    m = mapping_from_json(nlohmann::json::parse(read_text(mapping_path)));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(mapping_path + ": " + e.what());
  } catch (const PlacementError& e) {
    throw UsageError(e.what());
  }
  DeviceConfig device = m.device;
  if (o.any_device_flag()) device = resolve_config(o).device;
  device.validate();
  MappingReport report = validate_mapping(device, *graph, m);
  out << to_json(report).dump(2) << "\n";
  return report.ok() ? kOk : kValidationFailed;
}

inline int cmd_gen(int nodes, std::optional<std::uint64_t> seed, const std::string& out_path, std::ostream& out) {
  if (nodes < 1) throw UsageError("--nodes must be >= 1");
  std::uint64_t s = seed ? *seed : env_seed().value_or(0);
  std::vector<std::string> warnings;
  IRGraph g = random_graph(nodes, s, {}, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (out_path.empty())
    out << serialize_ir(g);
  else
    write_text(out_path, serialize_ir(g));
  return kOk;
}

inline std::string cell(const std::optional<int>& v, const std::string& failure) {
  return v ? std::to_string(*v) : failure;
}

inline int cmd_compare(const Overrides& o, std::vector<std::string> graph_paths, const std::vector<int>& gen_nodes,
                       bool dump_attention, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (graph_paths.empty()) graph_paths = cfg.graphs;
  std::vector<std::shared_ptr<const IRGraph>> graphs;
  if (!graph_paths.empty()) graphs = load_graphs(graph_paths);
  for (size_t k = 0; k < gen_nodes.size(); ++k) {
    auto g = random_graph(gen_nodes[k], cfg.seed + k);
    graphs.push_back(std::make_shared<const IRGraph>(
        IRGraph("random_" + std::to_string(gen_nodes[k]) + "_" + std::to_string(k), g.nodes(), g.sorted_edges())));
  }
  if (graphs.empty()) throw UsageError("compare: no graphs (give files or --gen-nodes)");
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config.json", to_json(cfg).dump(2) + "\n");

  std::ostringstream table;
  table << "graph,nodes,rl_gga,rl_mlp,sa,greedy,brute_force\n";
  std::vector<plot::Series> curves{{"RL (GGA)", {}, {}}, {"RL (MLP)", {}, {}}, {"SA", {}, {}}};
  std::vector<plot::Series> by_nodes{{"RL (GGA)", {}, {}}, {"RL (MLP)", {}, {}}, {"SA", {}, {}}, {"greedy", {}, {}}};
  auto add_point = [](plot::Series& s, double x, const std::optional<int>& y) {
    if (y) {
      s.x.push_back(x);
      s.y.push_back(*y);
    }
  };

  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = graphs[gi];
    const double n = g->size();
    std::string row = g->name() + "," + std::to_string(g->size());
    std::optional<int> cycles[4];
    std::string failures[4] = {"dead_end", "dead_end", "error", "error"};

    for (int variant = 0; variant < 2; ++variant) {
      ModelConfig mc = cfg.model;
      mc.use_gga = variant == 0;
      try {
        PpoTrainer trainer(ActorCritic(mc, cfg.seed), cfg.device, cfg.train);
        TrainResult r = trainer.train({g});
        cycles[variant] = r.per_graph[0].best_cycles;
        if (gi == 0)
          for (const auto& m : r.metrics) {
            curves[variant].x.push_back(static_cast<double>(m.episodes));
            curves[variant].y.push_back(m.best_return);
          }
        if (variant == 0 && dump_attention) {
          fs::path dir = fs::path(cfg.out_dir) / "attention";
          fs::create_directories(dir);
          MappingEnv env(g, cfg.device, EnvOptions{NodeOrder::kTopological, true});
          PolicyRunner runner(trainer.model(), true);
          runner.capture_attention(true);
          Rng rng(cfg.seed);
          run_episode(runner, env, cfg.seed, rng);
          for (const auto& [node, att] : runner.attention()) {
            std::ostringstream csv;
            csv.precision(6);
            for (Eigen::Index r2 = 0; r2 < att.rows(); ++r2) {
              for (Eigen::Index c = 0; c < att.cols(); ++c) csv << (c ? "," : "") << att(r2, c);
              csv << "\n";
            }
            const std::string stem = g->name() + "_node" + std::to_string(node);
            write_text(dir / (stem + ".csv"), csv.str());
            write_text(dir / (stem + ".svg"), plot::heatmap("attention while placing node " + std::to_string(node), att));
          }
        }
      } catch (const std::exception& e) {
        failures[variant] = "error";
        std::cerr << g->name() << " rl_" << (variant == 0 ? "gga" : "mlp") << ": " << e.what() << "\n";
      }
    }
    try {
      SAConfig sa = cfg.sa;
      SAResult r = simulated_annealing(cfg.device, *g, sa);
      cycles[2] = r.best_cycles;
      if (gi == 0) {
        // Sample the trace at the RL iteration boundaries so the curves share an axis.
        const double scale = static_cast<double>(cfg.train.epochs) / std::max(1, sa.steps);
        for (size_t k = 0; k < r.trace.size(); k += std::max<size_t>(1, r.trace.size() / 200)) {
          curves[2].x.push_back(r.trace[k].step * scale);
          curves[2].y.push_back(sa.objective == SAObjective::kReturn ? -r.trace[k].best
                                                                     : -static_cast<double>(r.trace[k].best));
        }
      }
    } catch (const std::exception& e) {
      std::cerr << g->name() << " sa: " << e.what() << "\n";
    }
    try {
      cycles[3] = *greedy_schedule(cfg.device, *g).total_cycles;
    } catch (const std::exception& e) {
      failures[3] = "dead_end";
      std::cerr << g->name() << " greedy: " << e.what() << "\n";
    }
    std::string brute = "skipped";
    try {
      brute = std::to_string(brute_force_optimal(cfg.device, *g).optimal_cycles);
    } catch (const InfeasibleError&) {
      brute = "infeasible";
    } catch (const ConfigError&) {
    }
    for (int k = 0; k < 4; ++k) {
      row += "," + cell(cycles[k], failures[k]);
      add_point(by_nodes[k], n, cycles[k]);
    }
    row += "," + brute;
    table << row << "\n";
    out << row << "\n";
  }
  write_text(fs::path(cfg.out_dir) / "compare.csv", table.str());
  std::string curve_label = cfg.sa.objective == SAObjective::kReturn ? "best return (SA: -objective)"
                                                                     : "best return (SA: -cycles)";
  write_text(fs::path(cfg.out_dir) / "best_return_vs_epoch.svg",
             plot::line_chart("best so far on " + graphs[0]->name(), "episodes", curve_label, curves));
  write_text(fs::path(cfg.out_dir) / "cycles_vs_nodes.svg",
             plot::line_chart("best total cycles", "nodes", "cycles", by_nodes, true));
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Maps dataflow instruction graphs onto a tiled streaming array"};
  app.require_subcommand(1);
  Overrides o;
  std::vector<std::string> graphs;
  std::string checkpoint, graph, mapping, partial, out_path;
  int nodes = 0;
  std::vector<int> gen_nodes;
  bool dump_attention = false;

  auto* train = app.add_subcommand("train", "train a PPO mapper");
  add_train_flags(train, o);
  train->add_option("graphs", graphs, "IR graph files");

  auto* map = app.add_subcommand("map", "greedy-decode a mapping with a trained checkpoint");
  add_device_flags(map, o);
  map->add_option("--checkpoint", checkpoint)->required();
  map->add_option("graph", graph, "IR graph file")->required();
  map->add_option("--partial", partial, "mapping JSON with nodes to pin");
  map->add_option("-o,--output", out_path, "write the mapping here instead of stdout");

  auto* fine = app.add_subcommand("finetune", "continue training a checkpoint on one graph");
  add_train_flags(fine, o);
  fine->add_option("--checkpoint", checkpoint)->required();
  fine->add_option("graph", graph, "IR graph file")->required();

  auto* val = app.add_subcommand("validate", "check a mapping against a graph");
  add_device_flags(val, o);
  val->add_option("graph", graph, "IR graph file")->required();
  val->add_option("mapping", mapping, "mapping JSON")->required();

  auto* cmp = app.add_subcommand("compare", "RL (GGA), RL (MLP), SA and greedy side by side");
  add_train_flags(cmp, o);
  cmp->add_option("graphs", graphs, "IR graph files");
  cmp->add_option("--gen-nodes", gen_nodes, "also compare on random graphs of these sizes")->delimiter(',');
  cmp->add_flag("--dump-attention", dump_attention, "write attention matrices per placed node");

  auto* gen = app.add_subcommand("gen", "write a random IR graph");
  gen->add_option("--nodes", nodes)->required();
  gen->add_option("--seed", o.seed);
  gen->add_option("-o,--out", out_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o, graphs, out);
    if (fine->parsed()) return cmd_finetune(o, checkpoint, graph, out);
    if (map->parsed()) return cmd_map(o, checkpoint, graph, partial, out_path, out);
    if (val->parsed()) return cmd_validate(o, graph, mapping, out);
    if (cmp->parsed()) return cmd_compare(o, graphs, gen_nodes, dump_attention, out);
    if (gen->parsed()) return cmd_gen(nodes, o.seed, out_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const GraphError& e) {
    err << "graph error: " << e.what() << "\n";
    return kUsage;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kDeadEnd;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kValidationFailed;
  }
  return kUsage;
}

}  // namespace semap::cli

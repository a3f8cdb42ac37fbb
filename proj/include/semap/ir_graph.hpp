#pragma once

// IR program representation: instruction nodes grouped into SDF components,
// its JSON file format, validation, ordering, static node features and a
// seeded random workload generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace semap {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InstructionNode {
  int id = 0;
  std::string opcode;
  int sdf_id = 0;  // derived: weakly connected component index
  std::vector<std::string> tile_memory_vars;  // sorted, unique

  friend bool operator==(const InstructionNode&, const InstructionNode&) = default;
};

using Edge = std::pair<int, int>;

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(static_cast<size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<int> parent_;
};

inline std::vector<int> label_components(int n, const std::function<void(DisjointSets&)>& link) {
  DisjointSets sets(n);
  link(sets);
  // Labels ordered by the smallest member id.
  std::vector<int> label(static_cast<size_t>(n), -1);
  std::map<int, int> root_label;
  for (int v = 0; v < n; ++v) {
    int root = sets.find(v);
    auto [it, inserted] = root_label.emplace(root, static_cast<int>(root_label.size()));
    label[v] = it->second;
  }
  return label;
}

}  // namespace detail

/// An IR program. Immutable after construction; nodes are stored by id and
/// all adjacency-derived facts are computed once.
///
/// Construction tolerates malformed input (bad ids, dangling edges) so that
/// validate_graph can report every problem. Malformed edges are ignored for
/// the derived adjacency.
class IRGraph {
 public:
  IRGraph() = default;

  IRGraph(std::string name, std::vector<InstructionNode> nodes, std::vector<Edge> edges)
      : name_(std::move(name)), nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::stable_sort(nodes_.begin(), nodes_.end(),
                     [](const auto& a, const auto& b) { return a.id < b.id; });
    for (auto& node : nodes_) {
      std::sort(node.tile_memory_vars.begin(), node.tile_memory_vars.end());
      node.tile_memory_vars.erase(
          std::unique(node.tile_memory_vars.begin(), node.tile_memory_vars.end()),
          node.tile_memory_vars.end());
    }
    build_index();
  }

  const std::string& name() const { return name_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<InstructionNode>& nodes() const { return nodes_; }
  const InstructionNode& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  const std::vector<Edge>& edges() const { return edges_; }

  const std::vector<int>& predecessors(int id) const { return preds_.at(static_cast<size_t>(id)); }
  const std::vector<int>& successors(int id) const { return succs_.at(static_cast<size_t>(id)); }
  /// Distinct nodes sharing at least one direct predecessor with `id`.
  const std::vector<int>& siblings(int id) const { return siblings_.at(static_cast<size_t>(id)); }
  bool is_sdf_start(int id) const { return preds_.at(static_cast<size_t>(id)).empty(); }
  int sdf_id(int id) const { return nodes_.at(static_cast<size_t>(id)).sdf_id; }
  int num_sdfs() const { return num_sdfs_; }

  /// Tile-memory colocation group: 0 when the node has no variables,
  /// otherwise a 1-based id ordered by the group's smallest member.
  int memory_group(int id) const { return memory_group_.at(static_cast<size_t>(id)); }
  const std::vector<int>& memory_group_members(int id) const {
    static const std::vector<int> empty;
    int group = memory_group(id);
    return group == 0 ? empty : groups_.at(static_cast<size_t>(group - 1));
  }

  bool are_siblings(int a, int b) const {
    const auto& s = siblings(a);
    return std::binary_search(s.begin(), s.end(), b);
  }

  /// Edges sorted ascending; the canonical form used for equality.
  std::vector<Edge> sorted_edges() const {
    auto out = edges_;
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const IRGraph& a, const IRGraph& b) {
    return a.name_ == b.name_ && a.nodes_ == b.nodes_ && a.sorted_edges() == b.sorted_edges();
  }

 private:
  bool edge_in_range(const Edge& e) const {
    return e.first >= 0 && e.first < size() && e.second >= 0 && e.second < size();
  }

  void build_index() {
    const int n = size();
    preds_.assign(static_cast<size_t>(n), {});
    succs_.assign(static_cast<size_t>(n), {});
    siblings_.assign(static_cast<size_t>(n), {});
    memory_group_.assign(static_cast<size_t>(n), 0);
    groups_.clear();

    for (const auto& e : edges_) {
      if (!edge_in_range(e) || e.first == e.second) continue;
      preds_[e.second].push_back(e.first);
      succs_[e.first].push_back(e.second);
    }
    for (int v = 0; v < n; ++v) {
      auto dedupe = [](std::vector<int>& xs) {
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
      };
      dedupe(preds_[v]);
      dedupe(succs_[v]);
    }
    for (int p = 0; p < n; ++p) {
      for (int a : succs_[p])
        for (int b : succs_[p])
          if (a != b) siblings_[a].push_back(b);
    }
    for (auto& s : siblings_) {
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
    }

    auto sdf = detail::label_components(n, [&](detail::DisjointSets& sets) {
      for (int v = 0; v < n; ++v)
        for (int w : succs_[v]) sets.unite(v, w);
    });
    num_sdfs_ = n == 0 ? 0 : *std::max_element(sdf.begin(), sdf.end()) + 1;
    for (int v = 0; v < n; ++v) nodes_[v].sdf_id = sdf[v];

    std::vector<int> with_vars;
    for (int v = 0; v < n; ++v)
      if (!nodes_[v].tile_memory_vars.empty()) with_vars.push_back(v);
    auto shared = detail::label_components(n, [&](detail::DisjointSets& sets) {
      std::map<std::string, int> first_owner;
      for (int v : with_vars)
        for (const auto& var : nodes_[v].tile_memory_vars) {
          auto [it, inserted] = first_owner.emplace(var, v);
          if (!inserted) sets.unite(it->second, v);
        }
    });
    std::map<int, int> group_of_label;
    for (int v : with_vars) {
      auto [it, inserted] =
          group_of_label.emplace(shared[v], static_cast<int>(group_of_label.size()) + 1);
      memory_group_[v] = it->second;
      if (inserted) groups_.emplace_back();
      groups_[it->second - 1].push_back(v);
    }
  }

  std::string name_;
  std::vector<InstructionNode> nodes_;
  std::vector<Edge> edges_;

  std::vector<std::vector<int>> preds_, succs_, siblings_;
  std::vector<int> memory_group_;
  std::vector<std::vector<int>> groups_;
  int num_sdfs_ = 0;
};

struct GraphViolation {
  std::string path;  // JSON pointer of the offending element
  std::string message;
};

namespace detail {

// Returns the nodes of one directed cycle, or empty when the graph is acyclic.
inline std::vector<int> find_cycle(const IRGraph& g) {
  const int n = g.size();
  std::vector<int> color(static_cast<size_t>(n), 0), parent(static_cast<size_t>(n), -1);
  for (int root = 0; root < n; ++root) {
    if (color[root] != 0) continue;
    std::vector<std::pair<int, size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& out = g.successors(v);
      if (next == out.size()) {
        color[v] = 2;
        stack.pop_back();
        continue;
      }
      int w = out[next++];
      if (color[w] == 0) {
        color[w] = 1;
        parent[w] = v;
        stack.emplace_back(w, 0);
      } else if (color[w] == 1) {
        std::vector<int> cycle{w};
        for (int u = v; u != w; u = parent[u]) cycle.push_back(u);
        std::reverse(cycle.begin() + 1, cycle.end());
        return cycle;
      }
    }
  }
  return {};
}

}  // namespace detail

/// Lists every violated IRGraph invariant and every tile-memory colocation
/// conflict (a colocation group containing two siblings or two SDF starts
/// cannot be placed on one tile). Empty means the graph is mappable in
/// principle.
inline std::vector<GraphViolation> validate_graph(const IRGraph& g) {
  std::vector<GraphViolation> out;
  const int n = g.size();
  for (int k = 0; k < n; ++k) {
    if (g.nodes()[k].id != k)
      out.push_back({"/nodes/" + std::to_string(k),
                     "node ids must be unique and form 0.." + std::to_string(n - 1) +
                         " (found id " + std::to_string(g.nodes()[k].id) + ")"});
  }
  std::set<Edge> seen;
  for (size_t k = 0; k < g.edges().size(); ++k) {
    const auto& [src, dst] = g.edges()[k];
    std::string path = "/edges/" + std::to_string(k);
    if (src < 0 || src >= n || dst < 0 || dst >= n) {
      out.push_back({path, "edge endpoint is not a node id: [" + std::to_string(src) + "," +
                               std::to_string(dst) + "]"});
      continue;
    }
    if (src == dst) {
      out.push_back({path, "self-edge on node " + std::to_string(src)});
      continue;
    }
    if (!seen.insert(g.edges()[k]).second)
      out.push_back({path, "duplicate edge [" + std::to_string(src) + "," + std::to_string(dst) + "]"});
  }
  if (auto cycle = detail::find_cycle(g); !cycle.empty()) {
    std::string desc;
    for (int v : cycle) desc += std::to_string(v) + "->";
    desc += std::to_string(cycle.front());
    out.push_back({"/edges", "directed cycle " + desc});
  }
  for (int v = 0; v < n; ++v) {
    int group = g.memory_group(v);
    if (group == 0) continue;
    for (int w : g.memory_group_members(v)) {
      if (w <= v) continue;
      std::string path = "/nodes/" + std::to_string(w) + "/tile_memory_vars";
      if (g.are_siblings(v, w))
        out.push_back({path, "colocation conflict: siblings " + std::to_string(v) + " and " +
                                 std::to_string(w) + " share tile memory"});
      else if (g.is_sdf_start(v) && g.is_sdf_start(w))
        out.push_back({path, "colocation conflict: SDF starts " + std::to_string(v) + " and " +
                                 std::to_string(w) + " share tile memory"});
    }
  }
  return out;
}

/// Kahn's algorithm with the smallest ready id first.
inline std::vector<int> topological_order(const IRGraph& g) {
  const int n = g.size();
  std::vector<int> indegree(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) indegree[v] = static_cast<int>(g.predecessors(v).size());
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.push(v);
  std::vector<int> order;
  order.reserve(static_cast<size_t>(n));
  while (!ready.empty()) {
    int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int w : g.successors(v))
      if (--indegree[w] == 0) ready.push(w);
  }
  if (static_cast<int>(order.size()) != n) {
    auto cycle = detail::find_cycle(g);
    std::string desc;
    for (int v : cycle) desc += std::to_string(v) + "->";
    if (!cycle.empty()) desc += std::to_string(cycle.front());
    throw GraphError("graph '" + g.name() + "' has a directed cycle: " + desc);
  }
  return order;
}

/// Longest path length (in edges) from any source to each node.
inline std::vector<int> topological_depth(const IRGraph& g) {
  std::vector<int> depth(static_cast<size_t>(g.size()), 0);
  for (int v : topological_order(g))
    for (int p : g.predecessors(v)) depth[v] = std::max(depth[v], depth[p] + 1);
  return depth;
}

// ---------------------------------------------------------------------------
// Static node features

inline constexpr int kNodeFeatureWidth = 6;

enum NodeFeature : int {
  kInDegree = 0,
  kOutDegree,
  kDepth,
  kIsSdfStart,
  kSiblingCount,
  kMemoryGroup,
};

/// One row per node: [in_degree, out_degree, topological_depth, is_sdf_start,
/// sibling_count, memory_group_code].
struct NodeFeatureMatrix {
  std::vector<std::array<int, kNodeFeatureWidth>> rows;

  int size() const { return static_cast<int>(rows.size()); }
  const std::array<int, kNodeFeatureWidth>& operator[](int v) const { return rows.at(static_cast<size_t>(v)); }
};

inline NodeFeatureMatrix node_features(const IRGraph& g) {
  NodeFeatureMatrix m;
  auto depth = topological_depth(g);
  m.rows.resize(static_cast<size_t>(g.size()));
  for (int v = 0; v < g.size(); ++v) {
    m.rows[v] = {static_cast<int>(g.predecessors(v).size()),
                 static_cast<int>(g.successors(v).size()),
                 depth[v],
                 g.is_sdf_start(v) ? 1 : 0,
                 static_cast<int>(g.siblings(v).size()),
                 g.memory_group(v)};
  }
  return m;
}

// ---------------------------------------------------------------------------
// JSON file format

inline nlohmann::json to_json(const IRGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes())
    nodes.push_back({{"id", n.id}, {"opcode", n.opcode}, {"tile_memory_vars", n.tile_memory_vars}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.sorted_edges()) edges.push_back({a, b});
  return {{"name", g.name()}, {"nodes", nodes}, {"edges", edges}};
}

/// Canonical text form: sorted keys, nodes by id, edges sorted.
inline std::string serialize_ir(const IRGraph& g) { return to_json(g).dump(2) + "\n"; }

namespace detail {

inline void expect(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw GraphError(path + ": " + what);
}

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& path,
                                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; });
    expect(known, path + "/" + key, "unknown field");
  }
}

}  // namespace detail

inline IRGraph from_json(const nlohmann::json& doc) {
  using detail::expect;
  expect(doc.is_object(), "", "document must be an object");
  detail::reject_unknown_keys(doc, "", {"name", "nodes", "edges"});
  expect(doc.contains("name") && doc["name"].is_string(), "/name", "missing or not a string");
  expect(doc.contains("nodes") && doc["nodes"].is_array(), "/nodes", "missing or not an array");
  expect(doc.contains("edges") && doc["edges"].is_array(), "/edges", "missing or not an array");

  std::vector<InstructionNode> nodes;
  for (size_t k = 0; k < doc["nodes"].size(); ++k) {
    const auto& jn = doc["nodes"][k];
    std::string path = "/nodes/" + std::to_string(k);
    expect(jn.is_object(), path, "node must be an object");
    detail::reject_unknown_keys(jn, path, {"id", "opcode", "tile_memory_vars"});
    expect(jn.contains("id") && jn["id"].is_number_integer(), path + "/id", "missing or not an integer");
    InstructionNode node;
    node.id = jn["id"].get<int>();
    if (jn.contains("opcode")) {
      expect(jn["opcode"].is_string(), path + "/opcode", "not a string");
      node.opcode = jn["opcode"].get<std::string>();
    }
    if (jn.contains("tile_memory_vars")) {
      const auto& vars = jn["tile_memory_vars"];
      expect(vars.is_array(), path + "/tile_memory_vars", "not an array");
      for (size_t j = 0; j < vars.size(); ++j) {
        expect(vars[j].is_string(), path + "/tile_memory_vars/" + std::to_string(j), "not a string");
        node.tile_memory_vars.push_back(vars[j].get<std::string>());
      }
    }
    nodes.push_back(std::move(node));
  }
  std::vector<Edge> edges;
  for (size_t k = 0; k < doc["edges"].size(); ++k) {
    const auto& je = doc["edges"][k];
    std::string path = "/edges/" + std::to_string(k);
    expect(je.is_array() && je.size() == 2 && je[0].is_number_integer() && je[1].is_number_integer(),
           path, "edge must be a pair of integers");
    edges.emplace_back(je[0].get<int>(), je[1].get<int>());
  }

  // Report ids before building: the graph index assumes positional ids.
  std::vector<int> ids;
  for (const auto& n : nodes) ids.push_back(n.id);
  std::vector<int> sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  for (size_t k = 0; k < sorted_ids.size(); ++k) {
    if (sorted_ids[k] != static_cast<int>(k)) {
      int bad = sorted_ids[k];
      size_t pos = static_cast<size_t>(std::find(ids.begin(), ids.end(), bad) - ids.begin());
      throw GraphError("/nodes/" + std::to_string(pos) +
                       "/id: node ids must be unique and contiguous from 0 (offending id " +
                       std::to_string(bad) + ")");
    }
  }

  IRGraph g(doc["name"].get<std::string>(), std::move(nodes), std::move(edges));
  if (auto violations = validate_graph(g); !violations.empty())
    throw GraphError(violations.front().path + ": " + violations.front().message);
  return g;
}

inline IRGraph parse_ir(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw GraphError(std::string("malformed IR document: ") + e.what());
  }
  return from_json(doc);
}

// ---------------------------------------------------------------------------
// Random workloads

struct RandomGraphParams {
  double edge_prob = 0.5;         // edge probability between consecutive layers
  double attach_prob = 0.85;      // chance an orphaned node is linked to the previous layer
  double skip_edge_prob = 0.05;   // chance of an extra edge skipping one layer
  double memory_fraction = 0.2;   // fraction of nodes receiving a shared tile-memory variable
  int max_retries = 64;
};

/// Layered random DAG: about sqrt(n) layers, edges from earlier to later
/// layers only, and node pairs sharing tile-memory variables chosen so no
/// colocation conflict arises. Deterministic in (num_nodes, seed, params).
inline IRGraph random_graph(int num_nodes, std::uint64_t seed, const RandomGraphParams& params = {},
                            std::vector<std::string>* warnings = nullptr) {
  if (num_nodes < 1) throw GraphError("random_graph: num_nodes must be >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&]() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  const int depth = std::max(1, static_cast<int>(std::lround(std::sqrt(num_nodes))));
  // Every layer gets one node, the remainder is spread at random.
  std::vector<int> layer_size(static_cast<size_t>(std::min(depth, num_nodes)), 1);
  for (int extra = num_nodes - static_cast<int>(layer_size.size()); extra > 0; --extra)
    ++layer_size[static_cast<size_t>(pick(0, static_cast<int>(layer_size.size()) - 1))];
  std::vector<std::vector<int>> layers;
  int next_id = 0;
  for (int size : layer_size) {
    layers.emplace_back();
    for (int k = 0; k < size; ++k) layers.back().push_back(next_id++);
  }

  std::set<Edge> edges;
  for (size_t l = 1; l < layers.size(); ++l) {
    for (int v : layers[l]) {
      bool linked = false;
      for (int u : layers[l - 1])
        if (uniform() < params.edge_prob) {
          edges.emplace(u, v);
          linked = true;
        }
      if (!linked && uniform() < params.attach_prob)
        edges.emplace(layers[l - 1][static_cast<size_t>(pick(0, static_cast<int>(layers[l - 1].size()) - 1))], v);
      if (l >= 2 && uniform() < params.skip_edge_prob)
        edges.emplace(layers[l - 2][static_cast<size_t>(pick(0, static_cast<int>(layers[l - 2].size()) - 1))], v);
    }
  }

  static const char* kOpcodes[] = {"add", "sub", "mul", "shl", "and", "or", "xor", "mac"};
  std::vector<InstructionNode> nodes(static_cast<size_t>(num_nodes));
  for (int v = 0; v < num_nodes; ++v) {
    nodes[v].id = v;
    nodes[v].opcode = kOpcodes[pick(0, 7)];
  }
  IRGraph shape("random_" + std::to_string(num_nodes) + "_" + std::to_string(seed), nodes,
                {edges.begin(), edges.end()});

  // Shared variables join disjoint pairs, which keeps groups at size two.
  const int wanted = static_cast<int>(std::lround(params.memory_fraction * num_nodes / 2.0));
  std::vector<bool> used(static_cast<size_t>(num_nodes), false);
  for (int var = 0; var < wanted; ++var) {
    bool placed = false;
    for (int attempt = 0; attempt < params.max_retries && !placed; ++attempt) {
      int a = pick(0, num_nodes - 1), b = pick(0, num_nodes - 1);
      if (a == b || used[a] || used[b]) continue;
      if (shape.are_siblings(a, b) || (shape.is_sdf_start(a) && shape.is_sdf_start(b))) continue;
      std::string name = "m" + std::to_string(var);
      nodes[a].tile_memory_vars.push_back(name);
      nodes[b].tile_memory_vars.push_back(name);
      used[a] = used[b] = true;
      placed = true;
    }
    if (!placed && warnings)
      warnings->push_back("random_graph: dropped shared variable m" + std::to_string(var) +
                          " (no conflict-free node pair found)");
  }
  return IRGraph(shape.name(), std::move(nodes), shape.edges());
}

// ---------------------------------------------------------------------------
// Built-in fixtures

/// D = (x - x0)^2 + (y - y0)^2 + (z - z0)^2 without the square root.
/// 0..2 subtract, 3..5 square, 6 and 7 accumulate.
inline IRGraph distance_calc_graph() {
  std::vector<InstructionNode> nodes = {
      {0, "sub", 0, {"x0"}}, {1, "sub", 0, {"y0"}}, {2, "sub", 0, {"z0"}},
      {3, "mul", 0, {}},     {4, "mul", 0, {}},     {5, "mul", 0, {}},
      {6, "add", 0, {}},     {7, "add", 0, {}},
  };
  std::vector<Edge> edges = {{0, 3}, {1, 4}, {2, 5}, {3, 6}, {4, 6}, {6, 7}, {5, 7}};
  return IRGraph("distance_calc", std::move(nodes), std::move(edges));
}

/// Approximation of an FFT inner loop split into four SDFs: index/address
/// generation, twiddle load, the complex butterfly and the store stage.
/// Node-level contents are illustrative only.
inline IRGraph fft_like_graph() {
  std::vector<InstructionNode> nodes;
  auto add = [&](const char* op, std::vector<std::string> vars = {}) {
    nodes.push_back({static_cast<int>(nodes.size()), op, 0, std::move(vars)});
  };
  // SDF A: index generation (0..6)
  add("add", {"idx"});    // 0 loop counter
  add("shl");             // 1 stride
  add("and");             // 2 mask low bits
  add("add");             // 3 partner index
  add("add", {"idx"});    // 4 counter writeback
  add("shl");             // 5 twiddle offset
  add("add");             // 6 address out
  // SDF B: twiddle fetch (7..10)
  add("ld", {"tw_base"}); // 7
  add("mul");             // 8 cos scale
  add("mul");             // 9 sin scale
  add("st", {"tw_base"}); // 10
  // SDF C: butterfly (11..20)
  add("ld", {"xr"});      // 11 re(x_k)
  add("ld", {"xi"});      // 12 im(x_k)
  add("mul");             // 13 re*wr
  add("mul");             // 14 im*wi
  add("sub");             // 15 tr
  add("mul");             // 16 re*wi
  add("mul");             // 17 im*wr
  add("add");             // 18 ti
  add("add", {"xr"});     // 19 out re
  add("add", {"xi"});     // 20 out im
  // SDF D: store (21..23)
  add("ld");              // 21
  add("add");             // 22
  add("st");              // 23
  std::vector<Edge> edges = {
      {0, 1}, {1, 2}, {1, 3}, {3, 6}, {2, 5}, {0, 4}, {5, 6},
      {7, 8}, {7, 9}, {8, 10}, {9, 10},
      {11, 13}, {11, 16}, {12, 14}, {12, 17}, {13, 15}, {14, 15}, {16, 18}, {17, 18},
      {15, 19}, {18, 20},
      {21, 22}, {22, 23},
  };
  return IRGraph("fft_like", std::move(nodes), std::move(edges));
}

}  // namespace semap

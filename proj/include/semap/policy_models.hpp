#pragma once

// Actor and critic networks. Each owns a Global Graph Attention encoder (two
// graph convolutions, attention conditioned on the node being placed, mean
// pooling) over static graph data, a dense embedding of the dynamic device
// state, and a three-layer MLP head. Masked logits are -inf so illegal tile
// slices get probability zero.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "semap/ir_graph.hpp"
#include "semap/nn.hpp"
#include "semap/rl_env.hpp"

namespace semap {

using nn::Matrix;

struct ModelConfig {
  int gnn_hidden = 64;
  int embed_width = 128;  // f: width of the graph embedding
  int attention_heads = 4;
  int mlp_hidden = 256;
  int action_dim = 96;
  bool use_gga = true;  // false: baseline MLP, graph embedding fixed at zero

  void validate() const {
    if (gnn_hidden < 1 || embed_width < 1 || attention_heads < 1 || mlp_hidden < 1 || action_dim < 1)
      throw ConfigError("model: all widths must be positive");
    if (gnn_hidden % attention_heads != 0)
      throw ConfigError("model: gnn_hidden must be divisible by attention_heads");
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"gnn_hidden", c.gnn_hidden}, {"embed_width", c.embed_width}, {"attention_heads", c.attention_heads},
          {"mlp_hidden", c.mlp_hidden}, {"action_dim", c.action_dim},   {"use_gga", c.use_gga}};
}

// ---------------------------------------------------------------------------
// Graph input

/// Static model input for one graph: symmetric-normalised adjacency with self
/// loops, and scaled node features.
struct GraphInput {
  Matrix adjacency;  // N x N, D^-1/2 (A + I) D^-1/2 on the undirected graph
  Matrix features;   // N x kNodeFeatureWidth
  int num_nodes = 0;
};

/// Counts are log-scaled; the memory group id is reduced to "has a colocation
/// partner" so the input does not depend on node numbering.
inline GraphInput make_graph_input(const IRGraph& g) {
  GraphInput in;
  const int n = g.size();
  in.num_nodes = n;
  Matrix a = Matrix::Identity(n, n);
  for (int v = 0; v < n; ++v)
    for (int w : g.successors(v)) a(v, w) = a(w, v) = 1.0;
  Eigen::VectorXd inv_sqrt = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  in.adjacency = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();

  auto raw = node_features(g);
  in.features.resize(n, kNodeFeatureWidth);
  for (int v = 0; v < n; ++v) {
    const auto& r = raw[v];
    in.features(v, kInDegree) = std::log1p(r[kInDegree]);
    in.features(v, kOutDegree) = std::log1p(r[kOutDegree]);
    in.features(v, kDepth) = std::log1p(r[kDepth]);
    in.features(v, kIsSdfStart) = r[kIsSdfStart];
    in.features(v, kSiblingCount) = std::log1p(r[kSiblingCount]);
    in.features(v, kMemoryGroup) = g.memory_group_members(v).size() > 1 ? 1.0 : 0.0;
  }
  return in;
}

// ---------------------------------------------------------------------------
// Masked categorical distribution

struct MaskedDistribution {
  std::vector<double> probs;
  std::vector<double> log_probs;  // -inf on masked entries
  double entropy = 0;             // over the valid support only
};

inline MaskedDistribution masked_distribution(std::span<const double> logits, const ActionMask& mask) {
  const double ninf = -std::numeric_limits<double>::infinity();
  MaskedDistribution d;
  d.probs.assign(logits.size(), 0.0);
  d.log_probs.assign(logits.size(), ninf);
  double max_logit = ninf;
  for (size_t a = 0; a < logits.size(); ++a)
    if (mask[a]) max_logit = std::max(max_logit, logits[a]);
  if (max_logit == ninf) return d;
  double z = 0;
  for (size_t a = 0; a < logits.size(); ++a)
    if (mask[a]) z += std::exp(logits[a] - max_logit);
  const double log_z = max_logit + std::log(z);
  for (size_t a = 0; a < logits.size(); ++a) {
    if (!mask[a]) continue;
    d.log_probs[a] = logits[a] - log_z;
    d.probs[a] = std::exp(d.log_probs[a]);
    d.entropy -= d.probs[a] * d.log_probs[a];
  }
  return d;
}

inline int sample_action(const MaskedDistribution& d, Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  int last = -1;
  for (size_t a = 0; a < d.probs.size(); ++a) {
    if (d.probs[a] <= 0) continue;
    last = static_cast<int>(a);
    u -= d.probs[a];
    if (u < 0) return last;
  }
  return last;
}

inline int argmax_action(const MaskedDistribution& d) {
  int best = -1;
  for (size_t a = 0; a < d.probs.size(); ++a)
    if (d.probs[a] > 0 && (best < 0 || d.probs[a] > d.probs[best])) best = static_cast<int>(a);
  return best;
}

// ---------------------------------------------------------------------------
// Global Graph Attention encoder

/// Node-level activations; independent of which node is being placed.
struct EncoderStatic {
  Matrix ax, p1, h1, ah1, p2, h2;  // graph convolutions
  Matrix q, k, v;                  // attention projections
  Matrix mean;                     // 1 x gnn_hidden
};

/// Per-sample activations for a batch of "current node" queries.
struct EncoderBatch {
  std::vector<int> current;
  Matrix qc;                  // B x H
  std::vector<Matrix> attn;   // per head, B x N
  Matrix o;                   // B x H
  Matrix z;                   // B x 2H: [mean pool, attention readout]
  Matrix pre, out;            // B x f
};

class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(const ModelConfig& cfg)
      : heads_(cfg.attention_heads),
        gcn1_(kNodeFeatureWidth, cfg.gnn_hidden),
        gcn2_(cfg.gnn_hidden, cfg.gnn_hidden),
        query_(cfg.gnn_hidden, cfg.gnn_hidden),
        key_(cfg.gnn_hidden, cfg.gnn_hidden),
        value_(cfg.gnn_hidden, cfg.gnn_hidden),
        out_(2 * cfg.gnn_hidden, cfg.embed_width) {}

  template <typename R>
  void init(R& rng) {
    const double g = std::sqrt(2.0);
    for (nn::Linear* l : {&gcn1_, &gcn2_, &query_, &key_, &value_, &out_}) nn::orthogonal_init(*l, g, rng);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamRef>& out) {
    gcn1_.collect(prefix + ".gcn1", out);
    gcn2_.collect(prefix + ".gcn2", out);
    query_.collect(prefix + ".query", out);
    key_.collect(prefix + ".key", out);
    value_.collect(prefix + ".value", out);
    out_.collect(prefix + ".out", out);
  }

  EncoderStatic forward_static(const GraphInput& in) const {
    if (in.num_nodes == 0) throw GraphError("graph encoder: empty graph");
    EncoderStatic s;
    s.ax = in.adjacency * in.features;
    s.p1 = gcn1_.forward(s.ax);
    s.h1 = nn::relu(s.p1);
    s.ah1 = in.adjacency * s.h1;
    s.p2 = gcn2_.forward(s.ah1);
    s.h2 = nn::relu(s.p2);
    s.q = query_.forward(s.h2);
    s.k = key_.forward(s.h2);
    s.v = value_.forward(s.h2);
    s.mean = s.h2.colwise().mean();
    return s;
  }

  EncoderBatch embed(const EncoderStatic& s, std::span<const int> current) const {
    const int b = static_cast<int>(current.size());
    const int h = static_cast<int>(s.h2.cols());
    const int dh = h / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    EncoderBatch e;
    e.current.assign(current.begin(), current.end());
    e.qc.resize(b, h);
    for (int i = 0; i < b; ++i) e.qc.row(i) = s.q.row(current[i]);
    e.o.resize(b, h);
    for (int hd = 0; hd < heads_; ++hd) {
      Matrix scores = e.qc.middleCols(hd * dh, dh) * s.k.middleCols(hd * dh, dh).transpose() * scale;
      softmax_rows(scores);
      e.o.middleCols(hd * dh, dh) = scores * s.v.middleCols(hd * dh, dh);
      e.attn.push_back(std::move(scores));
    }
    e.z.resize(b, 2 * h);
    e.z.leftCols(h) = s.mean.replicate(b, 1);
    e.z.rightCols(h) = e.o;
    e.pre = out_.forward(e.z);
    e.out = nn::relu(e.pre);
    return e;
  }

  /// Head-averaged attention for every node as the query; rows sum to one.
  Matrix attention_scores(const EncoderStatic& s) const {
    const int n = static_cast<int>(s.h2.rows());
    std::vector<int> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    EncoderBatch e = embed(s, all);
    Matrix avg = Matrix::Zero(n, n);
    for (const auto& a : e.attn) avg += a;
    return avg / heads_;
  }

  /// Accumulates parameter gradients given dL/d(embedding) for a batch.
  void backward(const GraphInput& in, const EncoderStatic& s, const EncoderBatch& e, const Matrix& d_out) {
    const int n = static_cast<int>(s.h2.rows());
    const int h = static_cast<int>(s.h2.cols());
    const int dh = h / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix d_pre = nn::relu_backward(e.pre, d_out);
    Matrix d_z = out_.backward(e.z, d_pre);
    Matrix d_mean = d_z.leftCols(h).colwise().sum();
    Matrix d_o = d_z.rightCols(h);

    Matrix d_q = Matrix::Zero(n, h), d_k = Matrix::Zero(n, h), d_v = Matrix::Zero(n, h);
    Matrix d_qc(e.qc.rows(), h);
    for (int hd = 0; hd < heads_; ++hd) {
      const Matrix& a = e.attn[hd];
      auto d_oh = d_o.middleCols(hd * dh, dh);
      d_v.middleCols(hd * dh, dh) += a.transpose() * d_oh;
      Matrix d_a = d_oh * s.v.middleCols(hd * dh, dh).transpose();
      Eigen::VectorXd inner = (a.array() * d_a.array()).rowwise().sum();
      Matrix d_s = a.array() * (d_a.colwise() - inner).array();
      d_qc.middleCols(hd * dh, dh) = d_s * s.k.middleCols(hd * dh, dh) * scale;
      d_k.middleCols(hd * dh, dh) += d_s.transpose() * e.qc.middleCols(hd * dh, dh) * scale;
    }
    for (int i = 0; i < static_cast<int>(e.current.size()); ++i) d_q.row(e.current[i]) += d_qc.row(i);

    Matrix d_h2 = query_.backward(s.h2, d_q);
    d_h2 += key_.backward(s.h2, d_k);
    d_h2 += value_.backward(s.h2, d_v);
    d_h2.rowwise() += d_mean.row(0) / static_cast<double>(n);

    Matrix d_p2 = nn::relu_backward(s.p2, d_h2);
    Matrix d_ah1 = gcn2_.backward(s.ah1, d_p2);
    Matrix d_h1 = in.adjacency.transpose() * d_ah1;
    Matrix d_p1 = nn::relu_backward(s.p1, d_h1);
    gcn1_.backward(s.ax, d_p1);
  }

 private:
  static void softmax_rows(Matrix& m) {
    for (int i = 0; i < m.rows(); ++i) {
      double mx = m.row(i).maxCoeff();
      m.row(i) = (m.row(i).array() - mx).exp();
      m.row(i) /= m.row(i).sum();
    }
  }

  int heads_ = 1;
  nn::Linear gcn1_, gcn2_, query_, key_, value_, out_;
};

// ---------------------------------------------------------------------------
// Actor / critic network

/// Per-graph slice of a batch.
struct GraphGroup {
  std::shared_ptr<const IRGraph> graph;
  std::shared_ptr<const GraphInput> input;
  std::vector<int> rows;  // batch rows belonging to this graph
  EncoderStatic stat;
  EncoderBatch batch;
};

struct NetworkTape {
  Matrix dyn, dyn_pre, dyn_out;  // dynamic-state embedding
  Matrix graph_embedding;        // B x f
  Matrix concat, p1, h1, p2, h2, out;
  std::vector<GraphGroup> groups;
};

/// Cache of per-graph model inputs keyed by graph identity.
class GraphInputCache {
 public:
  std::shared_ptr<const GraphInput> get(const std::shared_ptr<const IRGraph>& g) {
    auto it = cache_.find(g.get());
    if (it != cache_.end() && it->second.first.lock() == g) return it->second.second;
    auto in = std::make_shared<const GraphInput>(make_graph_input(*g));
    cache_[g.get()] = {g, in};
    return in;
  }

 private:
  std::unordered_map<const IRGraph*, std::pair<std::weak_ptr<const IRGraph>, std::shared_ptr<const GraphInput>>>
      cache_;
};

class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  PolicyNetwork(const ModelConfig& cfg, int out_dim)
      : cfg_(cfg),
        encoder_(cfg),
        dynamic_(cfg.action_dim + 1, cfg.embed_width),
        fc1_(2 * cfg.embed_width, cfg.mlp_hidden),
        fc2_(cfg.mlp_hidden, cfg.mlp_hidden),
        head_(cfg.mlp_hidden, out_dim) {}

  template <typename R>
  void init(R& rng, double head_gain) {
    encoder_.init(rng);
    const double g = std::sqrt(2.0);
    nn::orthogonal_init(dynamic_, g, rng);
    nn::orthogonal_init(fc1_, g, rng);
    nn::orthogonal_init(fc2_, g, rng);
    nn::orthogonal_init(head_, head_gain, rng);
  }

  std::vector<nn::ParamRef> parameters(const std::string& prefix) {
    std::vector<nn::ParamRef> out;
    if (cfg_.use_gga) encoder_.collect(prefix + ".gga", out);
    dynamic_.collect(prefix + ".dynamic", out);
    fc1_.collect(prefix + ".fc1", out);
    fc2_.collect(prefix + ".fc2", out);
    head_.collect(prefix + ".head", out);
    return out;
  }

  const GraphEncoder& encoder() const { return encoder_; }

  /// Dynamic input row: slice occupancy plus the normalised current node id.
  static void dynamic_row(const Observation& obs, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
    for (size_t a = 0; a < obs.ts_occupancy.size(); ++a) row(static_cast<Eigen::Index>(a)) = obs.ts_occupancy[a];
    row(row.size() - 1) = obs.num_nodes > 0 ? (obs.current_node + 1.0) / obs.num_nodes : 0.0;
  }

  /// Batch forward. `graph_static` optionally supplies precomputed encoder
  /// activations per graph (rollouts reuse them across steps).
  NetworkTape forward(std::span<const Observation* const> obs, GraphInputCache& inputs,
                      const std::unordered_map<const IRGraph*, EncoderStatic>* graph_static = nullptr) const {
    const int b = static_cast<int>(obs.size());
    const int f = cfg_.embed_width;
    NetworkTape t;
    t.dyn.resize(b, cfg_.action_dim + 1);
    for (int i = 0; i < b; ++i) {
      if (static_cast<int>(obs[i]->ts_occupancy.size()) != cfg_.action_dim)
        throw ConfigError("policy: observation width " + std::to_string(obs[i]->ts_occupancy.size()) +
                          " does not match action_dim " + std::to_string(cfg_.action_dim));
      dynamic_row(*obs[i], t.dyn.row(i));
    }
    t.dyn_pre = dynamic_.forward(t.dyn);
    t.dyn_out = nn::relu(t.dyn_pre);

    t.graph_embedding = Matrix::Zero(b, f);
    if (cfg_.use_gga) {
      std::unordered_map<const IRGraph*, size_t> group_of;
      for (int i = 0; i < b; ++i) {
        const auto& g = obs[i]->graph;
        auto [it, inserted] = group_of.emplace(g.get(), t.groups.size());
        if (inserted) {
          GraphGroup grp;
          grp.graph = g;
          grp.input = inputs.get(g);
          t.groups.push_back(std::move(grp));
        }
        t.groups[it->second].rows.push_back(i);
      }
      for (auto& grp : t.groups) {
        const EncoderStatic* cached = nullptr;
        if (graph_static)
          if (auto it = graph_static->find(grp.graph.get()); it != graph_static->end()) cached = &it->second;
        grp.stat = cached ? *cached : encoder_.forward_static(*grp.input);
        std::vector<int> current;
        for (int r : grp.rows) current.push_back(obs[r]->current_node);
        grp.batch = encoder_.embed(grp.stat, current);
        for (size_t j = 0; j < grp.rows.size(); ++j) t.graph_embedding.row(grp.rows[j]) = grp.batch.out.row(j);
      }
    }

    t.concat.resize(b, 2 * f);
    t.concat.leftCols(f) = t.dyn_out;
    t.concat.rightCols(f) = t.graph_embedding;
    t.p1 = fc1_.forward(t.concat);
    t.h1 = nn::relu(t.p1);
    t.p2 = fc2_.forward(t.h1);
    t.h2 = nn::relu(t.p2);
    t.out = head_.forward(t.h2);
    return t;
  }

  /// Accumulates parameter gradients for dL/d(out).
  void backward(const NetworkTape& t, const Matrix& d_out) {
    const int f = cfg_.embed_width;
    Matrix d_h2 = head_.backward(t.h2, d_out);
    Matrix d_h1 = fc2_.backward(t.h1, nn::relu_backward(t.p2, d_h2));
    Matrix d_concat = fc1_.backward(t.concat, nn::relu_backward(t.p1, d_h1));
    dynamic_.backward(t.dyn, nn::relu_backward(t.dyn_pre, d_concat.leftCols(f)));
    if (!cfg_.use_gga) return;
    Matrix d_graph = d_concat.rightCols(f);
    for (const auto& grp : t.groups) {
      Matrix d(grp.rows.size(), f);
      for (size_t j = 0; j < grp.rows.size(); ++j) d.row(static_cast<Eigen::Index>(j)) = d_graph.row(grp.rows[j]);
      encoder_.backward(*grp.input, grp.stat, grp.batch, d);
    }
  }

 private:
  ModelConfig cfg_;
  GraphEncoder encoder_;
  nn::Linear dynamic_, fc1_, fc2_, head_;
};

// ---------------------------------------------------------------------------

struct ActorCriticOutput {
  std::vector<double> logits;  // -inf where masked
  double value = 0;
  Matrix attention_scores;     // N x N, empty in baseline-MLP mode
  MaskedDistribution dist;
};

struct ActionEvaluation {
  std::vector<double> log_probs;
  std::vector<double> entropies;
  std::vector<double> values;
};

/// Actor and critic with separate parameters.
class ActorCritic {
 public:
  ActorCritic() = default;
  explicit ActorCritic(const ModelConfig& cfg, std::uint64_t seed = 0)
      : cfg_(cfg), actor_(cfg, cfg.action_dim), critic_(cfg, 1) {
    cfg_.validate();
    Rng rng(seed);
    actor_.init(rng, 0.01);
    critic_.init(rng, 1.0);
  }

  const ModelConfig& config() const { return cfg_; }
  PolicyNetwork& actor() { return actor_; }
  PolicyNetwork& critic() { return critic_; }
  const PolicyNetwork& actor() const { return actor_; }
  const PolicyNetwork& critic() const { return critic_; }
  std::vector<nn::ParamRef> actor_parameters() { return actor_.parameters("actor"); }
  std::vector<nn::ParamRef> critic_parameters() { return critic_.parameters("critic"); }
  std::vector<nn::ParamRef> parameters() {
    auto out = actor_parameters();
    auto c = critic_parameters();
    out.insert(out.end(), c.begin(), c.end());
    return out;
  }

  /// Graph embedding for one current node plus the head-averaged attention
  /// matrix (actor encoder).
  std::pair<Eigen::RowVectorXd, Matrix> gga_forward(const GraphInput& in, int current_node) const {
    EncoderStatic s = actor_.encoder().forward_static(in);
    int cur[1] = {current_node};
    EncoderBatch e = actor_.encoder().embed(s, cur);
    return {e.out.row(0), actor_.encoder().attention_scores(s)};
  }

  ActorCriticOutput forward(const Observation& obs, const ActionMask& mask, GraphInputCache& inputs) const {
    const Observation* batch[1] = {&obs};
    NetworkTape ta = actor_.forward(batch, inputs);
    NetworkTape tc = critic_.forward(batch, inputs);
    ActorCriticOutput out;
    out.logits.resize(static_cast<size_t>(cfg_.action_dim));
    for (int a = 0; a < cfg_.action_dim; ++a)
      out.logits[a] = mask[a] ? ta.out(0, a) : -std::numeric_limits<double>::infinity();
    out.dist = masked_distribution(std::span<const double>(ta.out.data(), ta.out.cols()), mask);
    out.value = tc.out(0, 0);
    if (cfg_.use_gga && !ta.groups.empty()) out.attention_scores = actor_.encoder().attention_scores(ta.groups[0].stat);
    return out;
  }

  double value(const Observation& obs, GraphInputCache& inputs) const {
    const Observation* batch[1] = {&obs};
    return critic_.forward(batch, inputs).out(0, 0);
  }

  /// Log-probabilities, valid-support entropies and values for stored
  /// (observation, mask, action) triples. A stored action outside its mask
  /// means the buffer is corrupt.
  ActionEvaluation evaluate_actions(std::span<const Observation* const> obs, std::span<const ActionMask* const> masks,
                                    std::span<const int> actions, GraphInputCache& inputs) const {
    NetworkTape ta = actor_.forward(obs, inputs);
    NetworkTape tc = critic_.forward(obs, inputs);
    ActionEvaluation ev;
    for (size_t i = 0; i < obs.size(); ++i) {
      Eigen::RowVectorXd row = ta.out.row(static_cast<Eigen::Index>(i));
      auto d = masked_distribution(std::span<const double>(row.data(), row.size()), *masks[i]);
      const int a = actions[i];
      if (a < 0 || a >= cfg_.action_dim || !(*masks[i])[a])
        throw std::logic_error("evaluate_actions: stored action " + std::to_string(a) + " violates its mask");
      ev.log_probs.push_back(d.log_probs[a]);
      ev.entropies.push_back(d.entropy);
      ev.values.push_back(tc.out(static_cast<Eigen::Index>(i), 0));
    }
    return ev;
  }

 private:
  ModelConfig cfg_;
  PolicyNetwork actor_, critic_;
};

/// Rollout-time policy: samples (or takes the argmax) under the mask and
/// caches encoder activations per graph, so parameters must not change while
/// a runner is alive.
class PolicyRunner {
 public:
  explicit PolicyRunner(const ActorCritic& model, bool greedy = false) : model_(&model), greedy_(greedy) {}

  PolicyDecision decide(const Observation& obs, const ActionMask& mask, Rng& rng) {
    const Observation* batch[1] = {&obs};
    prepare(obs);
    NetworkTape ta = model_->actor().forward(batch, inputs_, &actor_static_);
    auto d = masked_distribution(std::span<const double>(ta.out.data(), ta.out.cols()), mask);
    PolicyDecision out;
    out.action = greedy_ ? argmax_action(d) : sample_action(d, rng);
    if (out.action < 0) throw PlacementError("policy: empty mask, no action to sample");
    out.log_prob = d.log_probs[out.action];
    out.value = value(obs);
    if (capture_attention_ && model_->config().use_gga && !ta.groups.empty())
      attention_.push_back({obs.current_node, model_->actor().encoder().attention_scores(ta.groups[0].stat)});
    return out;
  }

  double value(const Observation& obs) {
    const Observation* batch[1] = {&obs};
    prepare(obs);
    return model_->critic().forward(batch, inputs_, &critic_static_).out(0, 0);
  }

  void capture_attention(bool on) { capture_attention_ = on; }
  /// (node being placed, attention matrix) per decision.
  const std::vector<std::pair<int, Matrix>>& attention() const { return attention_; }

 private:
  void prepare(const Observation& obs) {
    if (!model_->config().use_gga) return;
    const IRGraph* key = obs.graph.get();
    if (actor_static_.count(key)) return;
    auto in = inputs_.get(obs.graph);
    actor_static_[key] = model_->actor().encoder().forward_static(*in);
    critic_static_[key] = model_->critic().encoder().forward_static(*in);
    keep_alive_.push_back(obs.graph);
  }

  const ActorCritic* model_;
  bool greedy_;
  bool capture_attention_ = false;
  GraphInputCache inputs_;
  std::unordered_map<const IRGraph*, EncoderStatic> actor_static_, critic_static_;
  std::vector<std::shared_ptr<const IRGraph>> keep_alive_;
  std::vector<std::pair<int, Matrix>> attention_;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

struct CheckpointExtras {
  long step = 0;           // episodes trained so far
  long iteration = 0;
  std::string rng_state;   // textual std::mt19937_64 state
  long optimizer_steps = 0;
  std::optional<DeviceConfig> device;  // device the model was trained for
};

inline nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != m.size()) throw ConfigError("checkpoint: tensor size mismatch");
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "gnn_hidden") c.gnn_hidden = value.get<int>();
    else if (key == "embed_width") c.embed_width = value.get<int>();
    else if (key == "attention_heads") c.attention_heads = value.get<int>();
    else if (key == "mlp_hidden") c.mlp_hidden = value.get<int>();
    else if (key == "action_dim") c.action_dim = value.get<int>();
    else if (key == "use_gga") c.use_gga = value.get<bool>();
    else throw ConfigError("model." + key + ": unknown field");
  }
  c.validate();
  return c;
}

/// JSON container: format tag, version, model config, named parameter
/// tensors, optimizer moments and training counters.
inline nlohmann::json checkpoint_to_json(ActorCritic& model, const CheckpointExtras& extras,
                                         const nn::Adam* actor_opt = nullptr, const nn::Adam* critic_opt = nullptr) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.parameters()) params[p.name] = matrix_to_json(*p.value);
  nlohmann::json j = {{"format", "semap-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"model", to_json(model.config())},
                      {"parameters", params},
                      {"step", extras.step},
                      {"iteration", extras.iteration},
                      {"rng_state", extras.rng_state}};
  auto moments = [](const nn::Adam& opt) {
    nlohmann::json m = nlohmann::json::array(), v = nlohmann::json::array();
    for (const auto& x : opt.first_moments()) m.push_back(matrix_to_json(x));
    for (const auto& x : opt.second_moments()) v.push_back(matrix_to_json(x));
    return nlohmann::json{{"steps", opt.steps()}, {"m", m}, {"v", v}};
  };
  if (extras.device) {
    j["device"] = device_to_json(*extras.device);
    j["device"]["lambda_penalty"] = extras.device->lambda_penalty;
  }
  if (actor_opt && critic_opt) j["optimizer"] = {{"actor", moments(*actor_opt)}, {"critic", moments(*critic_opt)}};
  return j;
}

struct LoadedCheckpoint {
  ActorCritic model;
  CheckpointExtras extras;
  nlohmann::json optimizer;  // null when absent
};

/// Rebuilds the model. When `expected` is given, action_dim and embedding
/// width must match it.
inline LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j, const ModelConfig* expected = nullptr) {
  if (!j.is_object() || j.value("format", "") != "semap-checkpoint")
    throw ConfigError("checkpoint: not a semap checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw ConfigError("checkpoint: unsupported version " + std::to_string(j.value("version", 0)));
  ModelConfig cfg = model_config_from_json(j.at("model"));
  if (expected) {
    if (expected->action_dim != cfg.action_dim)
      throw ConfigError("checkpoint: action_dim " + std::to_string(cfg.action_dim) + " does not match device (" +
                        std::to_string(expected->action_dim) + ")");
    if (expected->embed_width != cfg.embed_width)
      throw ConfigError("checkpoint: embed_width " + std::to_string(cfg.embed_width) + " does not match " +
                        std::to_string(expected->embed_width));
  }
  LoadedCheckpoint out{ActorCritic(cfg), {}, nullptr};
  const auto& params = j.at("parameters");
  for (auto& p : out.model.parameters()) {
    if (!params.contains(p.name)) throw ConfigError("checkpoint: missing parameter " + p.name);
    Matrix m = matrix_from_json(params[p.name]);
    if (m.rows() != p.value->rows() || m.cols() != p.value->cols())
      throw ConfigError("checkpoint: shape mismatch for " + p.name);
    *p.value = std::move(m);
  }
  out.extras.step = j.value("step", 0L);
  out.extras.iteration = j.value("iteration", 0L);
  out.extras.rng_state = j.value("rng_state", std::string());
  if (j.contains("optimizer")) out.optimizer = j["optimizer"];
  if (j.contains("device")) {
    const auto& d = j["device"];
    DeviceConfig dc;
    dc.num_tiles = d.at("num_tiles").get<int>();
    dc.num_slots = d.at("num_slots").get<int>();
    dc.ii = d.at("ii").get<int>();
    dc.exec_latency = d.at("exec_latency").get<int>();
    if (d.contains("reach_limit")) dc.reach_limit = d["reach_limit"].get<int>();
    dc.lambda_penalty = d.value("lambda_penalty", dc.lambda_penalty);
    dc.validate();
    out.extras.device = dc;
  }
  return out;
}

inline void restore_optimizer(nn::Adam& opt, const nlohmann::json& j) {
  if (j.is_null()) return;
  opt.set_steps(j.at("steps").get<long>());
  opt.first_moments().clear();
  opt.second_moments().clear();
  for (const auto& m : j.at("m")) opt.first_moments().push_back(matrix_from_json(m));
  for (const auto& v : j.at("v")) opt.second_moments().push_back(matrix_from_json(v));
}

inline void save_checkpoint(const std::string& path, ActorCritic& model, const CheckpointExtras& extras,
                            const nn::Adam* actor_opt = nullptr, const nn::Adam* critic_opt = nullptr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_to_json(model, extras, actor_opt, critic_opt).dump() << "\n";
}

inline LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j, expected);
}

}  // namespace semap

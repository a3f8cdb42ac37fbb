#pragma once

// PPO with clipped surrogate: rollouts into a buffer, discounted returns,
// advantages A = R - V, minibatch updates of actor (ascent on the clipped
// objective plus a valid-support entropy bonus) and critic (MSE regression).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "semap/device_model.hpp"
#include "semap/nn.hpp"
#include "semap/policy_models.hpp"
#include "semap/rl_env.hpp"

namespace semap {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 2000;  // training episodes in total
  int episodes_per_iter = 16;
  double clip = 0.2;
  double gamma = 0.99;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  int update_epochs = 4;
  double entropy_coef = 0.01;
  int minibatch_size = 64;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  bool use_gae = false;
  double gae_lambda = 0.95;
  std::uint64_t seed = 0;
  int workers = 1;
  bool masking = true;
  NodeOrder order = NodeOrder::kTopological;
  int checkpoint_every = 0;  // iterations between checkpoints, 0 = final only
  bool log_wall_time = true; // false writes 0 so logs are byte-reproducible

  int iterations() const { return (epochs + episodes_per_iter - 1) / episodes_per_iter; }

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (episodes_per_iter < 1) throw ConfigError("train: episodes_per_iter must be >= 1");
    if (!(clip > 0 && clip < 1)) throw ConfigError("train: clip must be in (0, 1)");
    if (!(gamma > 0 && gamma <= 1)) throw ConfigError("train: gamma must be in (0, 1]");
    if (!(lr_actor > 0) || !(lr_critic > 0)) throw ConfigError("train: learning rates must be > 0");
    if (update_epochs < 1) throw ConfigError("train: update_epochs must be >= 1");
    if (minibatch_size < 1) throw ConfigError("train: minibatch_size must be >= 1");
    if (workers < 1) throw ConfigError("train: workers must be >= 1");
    if (entropy_coef < 0) throw ConfigError("train: entropy_coef must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutBuffer {
  std::vector<Transition> steps;
  std::vector<size_t> episode_starts;
  std::vector<double> returns;
  std::vector<double> advantages;

  size_t size() const { return steps.size(); }
  size_t num_episodes() const { return episode_starts.size(); }
  size_t episode_end(size_t e) const { return e + 1 < episode_starts.size() ? episode_starts[e + 1] : steps.size(); }

  void add_episode(std::vector<Transition> trajectory) {
    episode_starts.push_back(steps.size());
    for (auto& t : trajectory) steps.push_back(std::move(t));
  }
};

struct EpisodeSummary {
  size_t graph_index = 0;
  double episode_return = 0;
  bool dead_end = false;
  std::optional<int> total_cycles;
  Mapping mapping;
};

struct RolloutBatch {
  RolloutBuffer buffer;
  std::vector<EpisodeSummary> episodes;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the episode with global index `episode`; independent of how
/// episodes are split across workers.
inline std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode) {
  return splitmix64(splitmix64(seed) ^ (episode * 0xd1342543de82ef95ULL + 1));
}

/// Plays episodes first_episode .. first_episode + n_episodes - 1, cycling
/// through `graphs`. Output order is by episode index whatever the worker
/// count.
inline RolloutBatch collect_rollouts(const ActorCritic& model, const std::vector<std::shared_ptr<const IRGraph>>& graphs,
                                     const DeviceConfig& device, const EnvOptions& env_opts, int n_episodes,
                                     std::uint64_t seed, long first_episode = 0, int workers = 1) {
  if (graphs.empty()) throw ConfigError("collect_rollouts: no graphs");
  std::vector<EpisodeResult> results(static_cast<size_t>(n_episodes));
  std::vector<size_t> graph_of(static_cast<size_t>(n_episodes));

  auto run_range = [&](int begin, int end) {
    PolicyRunner runner(model);
    std::vector<std::unique_ptr<MappingEnv>> envs(graphs.size());
    for (int i = begin; i < end; ++i) {
      const long index = first_episode + i;
      const size_t gi = static_cast<size_t>(index) % graphs.size();
      if (!envs[gi]) envs[gi] = std::make_unique<MappingEnv>(graphs[gi], device, env_opts);
      const std::uint64_t s = episode_seed(seed, static_cast<std::uint64_t>(index));
      Rng rng(s);
      results[i] = run_episode(runner, *envs[gi], s, rng);
      graph_of[i] = gi;
    }
  };

  workers = std::max(1, std::min(workers, n_episodes));
  if (workers == 1) {
    run_range(0, n_episodes);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      int begin = n_episodes * w / workers, end = n_episodes * (w + 1) / workers;
      pool.emplace_back([&, w, begin, end] {
        try {
          run_range(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  RolloutBatch batch;
  for (int i = 0; i < n_episodes; ++i) {
    EpisodeSummary s;
    s.graph_index = graph_of[i];
    s.episode_return = results[i].episode_return;
    s.dead_end = results[i].dead_end;
    s.total_cycles = results[i].total_cycles;
    s.mapping = std::move(results[i].mapping);
    batch.episodes.push_back(std::move(s));
    batch.buffer.add_episode(std::move(results[i].trajectory));
  }
  return batch;
}

/// Discounted returns within episode boundaries and advantages R - V
/// (optionally GAE), normalised per batch when requested.
inline void compute_returns_advantages(RolloutBuffer& buffer, double gamma, bool normalize = true, bool use_gae = false,
                                       double gae_lambda = 0.95) {
  const size_t n = buffer.size();
  buffer.returns.assign(n, 0.0);
  buffer.advantages.assign(n, 0.0);
  for (size_t e = 0; e < buffer.num_episodes(); ++e) {
    const size_t begin = buffer.episode_starts[e], end = buffer.episode_end(e);
    double running = 0, gae = 0;
    for (size_t t = end; t-- > begin;) {
      running = buffer.steps[t].reward + gamma * running;
      buffer.returns[t] = running;
      if (use_gae) {
        double next_value = t + 1 < end ? buffer.steps[t + 1].value : 0.0;
        double delta = buffer.steps[t].reward + gamma * next_value - buffer.steps[t].value;
        gae = delta + gamma * gae_lambda * gae;
        buffer.advantages[t] = gae;
      } else {
        buffer.advantages[t] = running - buffer.steps[t].value;
      }
    }
  }
  if (use_gae)
    for (size_t t = 0; t < n; ++t) buffer.returns[t] = buffer.advantages[t] + buffer.steps[t].value;
  if (normalize && n > 1) {
    double mean = std::accumulate(buffer.advantages.begin(), buffer.advantages.end(), 0.0) / n;
    double var = 0;
    for (double a : buffer.advantages) var += (a - mean) * (a - mean);
    double sd = std::sqrt(var / n);
    for (double& a : buffer.advantages) a = (a - mean) / (sd + 1e-8);
  }
}

// ---------------------------------------------------------------------------
// Losses

/// g(eps, A): the clipped advantage, (1 + eps) A for A >= 0, (1 - eps) A otherwise.
inline double clipped_advantage(double eps, double advantage) {
  return advantage >= 0 ? (1.0 + eps) * advantage : (1.0 - eps) * advantage;
}

/// Per-sample clipped surrogate min(r A, g(eps, A)) and its derivative with
/// respect to log pi (zero when the clipped branch is active).
inline std::pair<double, double> clipped_surrogate(double ratio, double advantage, double eps) {
  const double unclipped = ratio * advantage;
  const double clipped = clipped_advantage(eps, advantage);
  if (unclipped <= clipped) return {unclipped, unclipped};
  return {clipped, 0.0};
}

struct ActorLossStats {
  double loss = 0;       // -(surrogate) - entropy_coef * entropy
  double surrogate = 0;  // mean clipped objective
  double entropy = 0;
  double approx_kl = 0;
  double clip_fraction = 0;
};

/// Actor loss over transitions that carry an action. With `backward` set,
/// gradients are accumulated into the actor parameters.
inline ActorLossStats actor_loss(ActorCritic& model, std::span<const Transition* const> batch,
                                 std::span<const double> advantages, double eps, double entropy_coef,
                                 GraphInputCache& inputs, bool backward) {
  ActorLossStats st;
  std::vector<const Observation*> obs;
  std::vector<size_t> rows;
  for (size_t i = 0; i < batch.size(); ++i)
    if (batch[i]->action >= 0) {
      obs.push_back(&batch[i]->obs);
      rows.push_back(i);
    }
  if (obs.empty()) return st;
  NetworkTape tape = model.actor().forward(obs, inputs);
  const double inv_b = 1.0 / static_cast<double>(obs.size());
  Matrix d_logits = Matrix::Zero(tape.out.rows(), tape.out.cols());
  for (size_t j = 0; j < rows.size(); ++j) {
    const Transition& t = *batch[rows[j]];
    Eigen::RowVectorXd logits = tape.out.row(static_cast<Eigen::Index>(j));
    auto d = masked_distribution(std::span<const double>(logits.data(), logits.size()), t.mask);
    if (!t.mask[t.action]) throw std::logic_error("actor_loss: stored action violates its mask");
    const double logp = d.log_probs[t.action];
    const double ratio = std::exp(logp - t.log_prob);
    const double adv = advantages[rows[j]];
    auto [objective, d_obj_d_logp] = clipped_surrogate(ratio, adv, eps);
    st.surrogate += objective * inv_b;
    st.entropy += d.entropy * inv_b;
    st.approx_kl += (t.log_prob - logp) * inv_b;
    if (std::abs(ratio - 1.0) > eps) st.clip_fraction += inv_b;
    if (!backward) continue;
    for (size_t a = 0; a < d.probs.size(); ++a) {
      if (!t.mask[a]) continue;
      const double p = d.probs[a];
      double g = -d_obj_d_logp * ((static_cast<int>(a) == t.action ? 1.0 : 0.0) - p);
      g -= entropy_coef * (-p * (d.log_probs[a] + d.entropy));
      d_logits(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a)) = g * inv_b;
    }
  }
  st.loss = -st.surrogate - entropy_coef * st.entropy;
  if (backward) model.actor().backward(tape, d_logits);
  return st;
}

/// Mean squared error between critic values and return targets.
inline double critic_loss(ActorCritic& model, std::span<const Transition* const> batch, std::span<const double> targets,
                          GraphInputCache& inputs, bool backward) {
  if (batch.empty()) return 0;
  std::vector<const Observation*> obs;
  for (const auto* t : batch) obs.push_back(&t->obs);
  NetworkTape tape = model.critic().forward(obs, inputs);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0;
  Matrix d_out(tape.out.rows(), 1);
  for (size_t i = 0; i < batch.size(); ++i) {
    double diff = tape.out(static_cast<Eigen::Index>(i), 0) - targets[i];
    loss += diff * diff * inv_b;
    d_out(static_cast<Eigen::Index>(i), 0) = 2.0 * diff * inv_b;
  }
  if (backward) model.critic().backward(tape, d_out);
  return loss;
}

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
  double clip_fraction = 0;
  std::vector<double> value_loss_per_epoch;
};

/// update_epochs passes of shuffled minibatches over the buffer.
inline UpdateStats ppo_update(ActorCritic& model, nn::Adam& actor_opt, nn::Adam& critic_opt,
                              const RolloutBuffer& buffer, const TrainConfig& cfg, Rng& rng) {
  UpdateStats stats;
  if (buffer.size() == 0) return stats;
  if (buffer.returns.size() != buffer.size()) throw TrainingError("ppo_update: returns not computed");
  auto actor_params = model.actor_parameters();
  auto critic_params = model.critic_parameters();
  GraphInputCache inputs;
  std::vector<size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  int batches = 0;
  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_value_loss = 0;
    int epoch_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.minibatch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.minibatch_size));
      std::vector<const Transition*> mb;
      std::vector<double> adv, ret;
      for (size_t k = start; k < end; ++k) {
        mb.push_back(&buffer.steps[order[k]]);
        adv.push_back(buffer.advantages[order[k]]);
        ret.push_back(buffer.returns[order[k]]);
      }
      nn::zero_grad(actor_params);
      ActorLossStats a = actor_loss(model, mb, adv, cfg.clip, cfg.entropy_coef, inputs, true);
      nn::zero_grad(critic_params);
      double v = critic_loss(model, mb, ret, inputs, true);
      if (!std::isfinite(a.loss) || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss (policy " << a.loss << ", value " << v << ", entropy " << a.entropy
            << ", approx_kl " << a.approx_kl << ") at update epoch " << epoch << ", minibatch " << start;
        throw TrainingError(msg.str());
      }
      nn::clip_grad_norm(actor_params, cfg.max_grad_norm);
      nn::clip_grad_norm(critic_params, cfg.max_grad_norm);
      actor_opt.step(actor_params);
      critic_opt.step(critic_params);
      stats.policy_loss += a.loss;
      stats.value_loss += v;
      stats.entropy += a.entropy;
      stats.approx_kl += a.approx_kl;
      stats.clip_fraction += a.clip_fraction;
      epoch_value_loss += v;
      ++epoch_batches;
      ++batches;
    }
    stats.value_loss_per_epoch.push_back(epoch_value_loss / std::max(1, epoch_batches));
  }
  const double inv = 1.0 / std::max(1, batches);
  stats.policy_loss *= inv;
  stats.value_loss *= inv;
  stats.entropy *= inv;
  stats.approx_kl *= inv;
  stats.clip_fraction *= inv;
  return stats;
}

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRow {
  long iter = 0;
  long episodes = 0;
  double mean_return = 0;
  double best_return = 0;
  std::optional<int> best_cycles;
  double wall_time_s = 0;
};

inline std::string metrics_header() { return "iter,episodes,mean_return,best_return,best_cycles,wall_time_s\n"; }

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%ld,%.6f,%.6f,%s,%.3f\n", r.iter, r.episodes, r.mean_return, r.best_return,
                r.best_cycles ? std::to_string(*r.best_cycles).c_str() : "", r.wall_time_s);
  return buf;
}

struct GraphBest {
  double best_return = -std::numeric_limits<double>::infinity();
  std::optional<Mapping> best_return_mapping;
  std::optional<int> best_cycles;
  std::optional<Mapping> best_cycles_mapping;

  void offer(const EpisodeSummary& ep) {
    if (ep.episode_return > best_return) {
      best_return = ep.episode_return;
      best_return_mapping = ep.mapping;
    }
    if (ep.total_cycles && (!best_cycles || *ep.total_cycles < *best_cycles)) {
      best_cycles = ep.total_cycles;
      best_cycles_mapping = ep.mapping;
    }
  }
  /// Lowest-cycle complete mapping, else the best-return (dead-ended) one.
  const std::optional<Mapping>& best_mapping() const {
    return best_cycles_mapping ? best_cycles_mapping : best_return_mapping;
  }
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<GraphBest> per_graph;
  double best_return = -std::numeric_limits<double>::infinity();
  std::optional<Mapping> best_return_mapping;
  std::optional<int> best_cycles;
  std::optional<Mapping> best_cycles_mapping;
  double first_iter_best_return = -std::numeric_limits<double>::infinity();
  std::vector<double> episode_returns;  // every training episode, in order
  std::vector<UpdateStats> updates;
};

class PpoTrainer {
 public:
  PpoTrainer(ActorCritic model, DeviceConfig device, TrainConfig cfg)
      : model_(std::move(model)),
        device_(device),
        cfg_(cfg),
        actor_opt_(cfg.lr_actor),
        critic_opt_(cfg.lr_critic),
        rng_(splitmix64(cfg.seed ^ 0x5eedULL)) {
    device_.validate();
    cfg_.validate();
    if (model_.config().action_dim != device_.action_dim())
      throw ConfigError("trainer: model action_dim " + std::to_string(model_.config().action_dim) +
                        " does not match device tiles x slots = " + std::to_string(device_.action_dim()));
  }

  /// Continues from a checkpoint: parameters, optimizer moments and counters.
  static PpoTrainer from_checkpoint(LoadedCheckpoint ckpt, DeviceConfig device, TrainConfig cfg) {
    PpoTrainer t(std::move(ckpt.model), device, cfg);
    if (ckpt.optimizer.is_object()) {
      restore_optimizer(t.actor_opt_, ckpt.optimizer.at("actor"));
      restore_optimizer(t.critic_opt_, ckpt.optimizer.at("critic"));
    }
    t.episodes_done_ = ckpt.extras.step;
    if (!ckpt.extras.rng_state.empty()) {
      std::istringstream in(ckpt.extras.rng_state);
      in >> t.rng_;
    }
    t.iterations_done_ = ckpt.extras.iteration;
    return t;
  }

  ActorCritic& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  long episodes_done() const { return episodes_done_; }

  void save_checkpoint(const std::string& path) {
    std::ostringstream rng_state;
    rng_state << rng_;
    semap::save_checkpoint(path, model_, {episodes_done_, iterations_done_, rng_state.str(), actor_opt_.steps(), device_},
                           &actor_opt_, &critic_opt_);
  }

  /// Runs cfg.epochs episodes (in iterations of episodes_per_iter) over
  /// `graphs`. When out_dir is set, writes metrics.csv, checkpoint.json and
  /// best_mapping.json there.
  TrainResult train(const std::vector<std::shared_ptr<const IRGraph>>& graphs, const std::string& out_dir = "") {
    if (graphs.empty()) throw ConfigError("train: no graphs");
    TrainResult result;
    result.per_graph.resize(graphs.size());
    EnvOptions env_opts{cfg_.order, cfg_.masking};
    std::ofstream metrics;
    if (!out_dir.empty()) {
      std::filesystem::create_directories(out_dir);
      metrics.open(std::filesystem::path(out_dir) / "metrics.csv");
      metrics << metrics_header();
    }
    const auto t0 = std::chrono::steady_clock::now();
    int remaining = cfg_.epochs;
    for (long it = 0; remaining > 0; ++it) {
      const int n = std::min(remaining, cfg_.episodes_per_iter);
      remaining -= n;
      RolloutBatch batch = collect_rollouts(model_, graphs, device_, env_opts, n, cfg_.seed, episodes_done_, cfg_.workers);
      episodes_done_ += n;

      double sum = 0, iter_best = -std::numeric_limits<double>::infinity();
      for (auto& ep : batch.episodes) {
        result.per_graph[ep.graph_index].offer(ep);
        sum += ep.episode_return;
        iter_best = std::max(iter_best, ep.episode_return);
        result.episode_returns.push_back(ep.episode_return);
        if (ep.episode_return > result.best_return) {
          result.best_return = ep.episode_return;
          result.best_return_mapping = ep.mapping;
        }
        if (ep.total_cycles && (!result.best_cycles || *ep.total_cycles < *result.best_cycles)) {
          result.best_cycles = ep.total_cycles;
          result.best_cycles_mapping = ep.mapping;
        }
      }
      if (it == 0) result.first_iter_best_return = iter_best;

      compute_returns_advantages(batch.buffer, cfg_.gamma, cfg_.normalize_advantages, cfg_.use_gae, cfg_.gae_lambda);
      result.updates.push_back(ppo_update(model_, actor_opt_, critic_opt_, batch.buffer, cfg_, rng_));
      ++iterations_done_;

      MetricsRow row;
      row.iter = iterations_done_;
      row.episodes = episodes_done_;
      row.mean_return = sum / n;
      row.best_return = result.best_return;
      row.best_cycles = result.best_cycles;
      row.wall_time_s =
          cfg_.log_wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
      result.metrics.push_back(row);
      if (metrics.is_open()) {
        metrics << format_metrics_row(row);
        metrics.flush();
      }
      if (!out_dir.empty() && cfg_.checkpoint_every > 0 && iterations_done_ % cfg_.checkpoint_every == 0)
        save_checkpoint((std::filesystem::path(out_dir) / "checkpoint.json").string());
    }
    if (!out_dir.empty()) {
      save_checkpoint((std::filesystem::path(out_dir) / "checkpoint.json").string());
      for (size_t gi = 0; gi < graphs.size(); ++gi) {
        const auto& best = result.per_graph[gi].best_mapping();
        if (!best) continue;
        std::string name = graphs.size() == 1 ? "best_mapping.json" : "best_mapping_" + std::to_string(gi) + ".json";
        std::ofstream out(std::filesystem::path(out_dir) / name);
        out << serialize_mapping(*best);
      }
    }
    return result;
  }

 private:
  ActorCritic model_;
  DeviceConfig device_;
  TrainConfig cfg_;
  nn::Adam actor_opt_, critic_opt_;
  Rng rng_;
  long episodes_done_ = 0;
  long iterations_done_ = 0;
};

/// Continues training a checkpoint on one target graph.
inline TrainResult finetune(const LoadedCheckpoint& ckpt, std::shared_ptr<const IRGraph> target,
                            const DeviceConfig& device, const TrainConfig& cfg, const std::string& out_dir = "") {
  if (ckpt.model.config().action_dim != device.action_dim())
    throw ConfigError("finetune: checkpoint action_dim " + std::to_string(ckpt.model.config().action_dim) +
                      " does not match device tiles x slots = " + std::to_string(device.action_dim()));
  PpoTrainer trainer = PpoTrainer::from_checkpoint(ckpt, device, cfg);
  return trainer.train({std::move(target)}, out_dir);
}

}  // namespace semap

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "semap/baselines.hpp"
#include "semap/ppo_trainer.hpp"

using namespace semap;
using fixtures::make_graph;
using fixtures::share;

namespace {

DeviceConfig tiny_device() {
  DeviceConfig d;
  d.num_tiles = 4;
  d.num_slots = 2;
  d.ii = 2;
  return d;
}

ModelConfig small_model(const DeviceConfig& d, bool gga = true) {
  ModelConfig c;
  c.gnn_hidden = 16;
  c.embed_width = 16;
  c.attention_heads = 2;
  c.mlp_hidden = 32;
  c.action_dim = d.action_dim();
  c.use_gga = gga;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RolloutBuffer two_step_buffer(double v0, double v1) {
  RolloutBuffer b;
  std::vector<Transition> ep(2);
  ep[0].reward = -3;
  ep[1].reward = -4;
  ep[0].value = v0;
  ep[1].value = v1;
  b.add_episode(ep);
  return b;
}

}  // namespace

TEST(Returns, Undiscounted) {
  auto b = two_step_buffer(0, 0);
  compute_returns_advantages(b, 1.0, false);
  EXPECT_EQ(b.returns, (std::vector<double>{-7, -4}));
  EXPECT_EQ(b.advantages, (std::vector<double>{-7, -4}));
}

TEST(Returns, Discounted) {
  auto b = two_step_buffer(-1, 2);
  compute_returns_advantages(b, 0.5, false);
  EXPECT_EQ(b.returns, (std::vector<double>{-5, -4}));
  EXPECT_EQ(b.advantages, (std::vector<double>{-4, -6}));
}

TEST(Returns, EpisodeBoundaries) {
  auto b = two_step_buffer(0, 0);
  std::vector<Transition> second(1);
  second[0].reward = -10;
  b.add_episode(second);
  compute_returns_advantages(b, 1.0, false);
  EXPECT_EQ(b.returns, (std::vector<double>{-7, -4, -10}));
}

TEST(Returns, NormalisedAdvantages) {
  auto b = two_step_buffer(0, 0);
  std::vector<Transition> second(1);
  second[0].reward = -10;
  b.add_episode(second);
  compute_returns_advantages(b, 1.0, true);
  double mean = 0, sq = 0;
  for (double a : b.advantages) mean += a / 3;
  for (double a : b.advantages) sq += (a - mean) * (a - mean) / 3;
  EXPECT_NEAR(mean, 0, 1e-12);
  EXPECT_NEAR(sq, 1, 1e-6);
}

TEST(ClippedObjective, Examples) {
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.0, 2.5, 0.2).first, 2.5);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.0, -2.5, 0.2).first, -2.5);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 2.0, 0.2).first, 1.2 * 2.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 2.0, 0.2).second, 0.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -2.0, 0.2).first, 0.8 * -2.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -2.0, 0.2).second, 0.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.9, 2.0, 0.2).first, 1.8);
}

TEST(Rollouts, ChainEpisodeLength) {
  DeviceConfig d = tiny_device();
  ActorCritic model(small_model(d), 1);
  auto batch = collect_rollouts(model, {share(fixtures::chain(3))}, d, {}, 1, 7);
  EXPECT_EQ(batch.buffer.size(), 3u);
  EXPECT_EQ(batch.buffer.num_episodes(), 1u);
}

TEST(Rollouts, DeterministicAndWorkerIndependent) {
  DeviceConfig d = tiny_device();
  ActorCritic model(small_model(d), 1);
  std::vector<std::shared_ptr<const IRGraph>> graphs{share(random_graph(6, 1)), share(random_graph(5, 2))};
  auto a = collect_rollouts(model, graphs, d, {}, 9, 3, 0, 1);
  auto b = collect_rollouts(model, graphs, d, {}, 9, 3, 0, 1);
  auto c = collect_rollouts(model, graphs, d, {}, 9, 3, 0, 3);
  ASSERT_EQ(a.buffer.size(), b.buffer.size());
  ASSERT_EQ(a.buffer.size(), c.buffer.size());
  for (size_t i = 0; i < a.buffer.size(); ++i) {
    EXPECT_EQ(a.buffer.steps[i].action, b.buffer.steps[i].action);
    EXPECT_EQ(a.buffer.steps[i].action, c.buffer.steps[i].action);
    EXPECT_EQ(a.buffer.steps[i].log_prob, c.buffer.steps[i].log_prob);
  }
  for (size_t e = 0; e < a.episodes.size(); ++e) EXPECT_EQ(a.episodes[e].graph_index, e % 2);
}

TEST(Rollouts, DeadEndFinalRewardIsPenalty) {
  DeviceConfig d;
  d.num_tiles = 2;
  d.num_slots = 3;
  // Four siblings can never fit on two tiles.
  auto g = share(make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}));
  ActorCritic model(small_model(d), 1);
  auto batch = collect_rollouts(model, {g}, d, {}, 3, 1);
  for (size_t e = 0; e < batch.buffer.num_episodes(); ++e) {
    EXPECT_EQ(batch.buffer.steps[batch.buffer.episode_end(e) - 1].reward, -100.0);
    EXPECT_TRUE(batch.episodes[e].dead_end);
  }
}

TEST(Rollouts, StoredActionsRespectMasks) {
  DeviceConfig d = tiny_device();
  ActorCritic model(small_model(d), 2);
  auto batch = collect_rollouts(model, {share(random_graph(7, 4))}, d, {}, 20, 5);
  for (const auto& t : batch.buffer.steps)
    if (t.action >= 0) EXPECT_TRUE(t.mask[t.action]);
}

TEST(PpoUpdate, ZeroAdvantageLeavesPolicyUnchanged) {
  DeviceConfig d = tiny_device();
  ActorCritic model(small_model(d), 3);
  auto batch = collect_rollouts(model, {share(fixtures::chain(3))}, d, {}, 4, 1);
  compute_returns_advantages(batch.buffer, 1.0, false);
  for (size_t i = 0; i < batch.buffer.size(); ++i) {
    batch.buffer.steps[i].value = batch.buffer.returns[i];
    batch.buffer.advantages[i] = 0.0;
  }
  TrainConfig cfg;
  cfg.entropy_coef = 0.0;
  auto before = model.actor_parameters();
  std::vector<Matrix> saved;
  for (auto& p : before) saved.push_back(*p.value);
  nn::Adam a(cfg.lr_actor), c(cfg.lr_critic);
  Rng rng(1);
  ppo_update(model, a, c, batch.buffer, cfg, rng);
  auto after = model.actor_parameters();
  for (size_t i = 0; i < after.size(); ++i) EXPECT_EQ(*after[i].value, saved[i]) << after[i].name;
}

TEST(PpoUpdate, LooseClipMatchesVanillaGradientAtFirstStep) {
  DeviceConfig d = tiny_device();
  ActorCritic model(small_model(d), 4);
  auto batch = collect_rollouts(model, {share(random_graph(5, 3))}, d, {}, 2, 2);
  compute_returns_advantages(batch.buffer, 0.99, true);
  std::vector<const Transition*> steps;
  std::vector<double> adv;
  for (size_t i = 0; i < batch.buffer.size(); ++i)
    if (batch.buffer.steps[i].action >= 0) {
      steps.push_back(&batch.buffer.steps[i]);
      adv.push_back(batch.buffer.advantages[i]);
    }
  GraphInputCache cache;
  auto params = model.actor_parameters();
  nn::zero_grad(params);
  actor_loss(model, steps, adv, 1e9, 0.0, cache, true);
  std::vector<Matrix> loose;
  for (auto& p : params) loose.push_back(*p.grad);
  // Vanilla surrogate -mean(A * ratio) by central differences on a few weights.
  auto vanilla = [&] {
    double s = 0;
    int k = 0;
    for (size_t i = 0; i < steps.size(); ++i) {
      const Observation* o[1] = {&steps[i]->obs};
      NetworkTape t = model.actor().forward(o, cache);
      auto dist = masked_distribution(std::span<const double>(t.out.data(), t.out.cols()), steps[i]->mask);
      s -= adv[i] * std::exp(dist.log_probs[steps[i]->action] - steps[i]->log_prob);
      ++k;
    }
    return s / k;
  };
  const double h = 1e-6;
  for (size_t pi = 0; pi < params.size(); pi += 3) {
    Matrix& w = *params[pi].value;
    for (int e = 0; e < std::min<Eigen::Index>(3, w.size()); ++e) {
      double keep = w.data()[e];
      w.data()[e] = keep + h;
      double up = vanilla();
      w.data()[e] = keep - h;
      double down = vanilla();
      w.data()[e] = keep;
      double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(loose[pi].data()[e], numeric, 1e-4 * std::max(1.0, std::abs(numeric))) << params[pi].name;
    }
  }
}

TEST(PpoUpdate, ValueLossDecreasesOnFrozenBuffer) {
  DeviceConfig d = tiny_device();
  for (int rep = 0; rep < 10; ++rep) {
    ActorCritic model(small_model(d), 100 + rep);
    auto batch = collect_rollouts(model, {share(random_graph(6, rep))}, d, {}, 4, rep);
    compute_returns_advantages(batch.buffer, 0.99, true);
    TrainConfig cfg;
    cfg.update_epochs = 5;
    cfg.minibatch_size = 1000;  // one full batch per epoch
    cfg.lr_critic = 1e-4;
    nn::Adam a(cfg.lr_actor), c(cfg.lr_critic);
    Rng rng(rep);
    auto stats = ppo_update(model, a, c, batch.buffer, cfg, rng);
    for (size_t e = 1; e < stats.value_loss_per_epoch.size(); ++e)
      EXPECT_LT(stats.value_loss_per_epoch[e], stats.value_loss_per_epoch[e - 1]) << rep;
  }
}

TEST(PpoUpdate, NonFiniteLossAborts) {
  DeviceConfig d = tiny_device();
  ActorCritic model(small_model(d), 5);
  auto batch = collect_rollouts(model, {share(fixtures::chain(3))}, d, {}, 2, 1);
  compute_returns_advantages(batch.buffer, 0.99, true);
  (*model.critic_parameters().back().value)(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  nn::Adam a, c;
  Rng rng(1);
  EXPECT_THROW(ppo_update(model, a, c, batch.buffer, cfg, rng), TrainingError);
}

TEST(Train, ReachesOptimumOnSmallChain) {
  DeviceConfig d = tiny_device();
  IRGraph g = fixtures::chain(3);
  int optimum = brute_force_optimal(d, g).optimal_cycles;
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.seed = 1;
  PpoTrainer trainer(ActorCritic(small_model(d), 1), d, cfg);
  auto r = trainer.train({share(g)});
  ASSERT_TRUE(r.best_cycles);
  EXPECT_EQ(*r.best_cycles, optimum);
}

TEST(Train, BestReturnMonotoneAndArtifactsWritten) {
  DeviceConfig d = tiny_device();
  TrainConfig cfg;
  cfg.epochs = 64;
  cfg.seed = 2;
  auto dir = std::filesystem::temp_directory_path() / "semap_train_test";
  std::filesystem::remove_all(dir);
  PpoTrainer trainer(ActorCritic(small_model(d), 2), d, cfg);
  auto r = trainer.train({share(random_graph(6, 9))}, dir.string());
  ASSERT_EQ(r.metrics.size(), 4u);
  for (size_t i = 1; i < r.metrics.size(); ++i) EXPECT_GE(r.metrics[i].best_return, r.metrics[i - 1].best_return);
  EXPECT_EQ(r.metrics.back().episodes, 64);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "best_mapping.json"));
  EXPECT_EQ(slurp(dir / "metrics.csv").substr(0, 56), "iter,episodes,mean_return,best_return,best_cycles,wall_t");
}

TEST(Train, ByteIdenticalLogsForSameSeed) {
  DeviceConfig d = tiny_device();
  TrainConfig cfg;
  cfg.epochs = 48;
  cfg.seed = 5;
  cfg.log_wall_time = false;
  auto base = std::filesystem::temp_directory_path();
  std::string outs[2];
  for (int k = 0; k < 2; ++k) {
    auto dir = base / ("semap_det_" + std::to_string(k));
    std::filesystem::remove_all(dir);
    PpoTrainer trainer(ActorCritic(small_model(d), 5), d, cfg);
    trainer.train({share(random_graph(7, 3))}, dir.string());
    outs[k] = slurp(dir / "metrics.csv") + slurp(dir / "best_mapping.json");
  }
  EXPECT_EQ(outs[0], outs[1]);
}

TEST(Finetune, ContinuesFromCheckpoint) {
  DeviceConfig d = tiny_device();
  TrainConfig cfg;
  cfg.epochs = 32;
  auto dir = std::filesystem::temp_directory_path() / "semap_pretrain";
  std::filesystem::remove_all(dir);
  PpoTrainer pre(ActorCritic(small_model(d), 1), d, cfg);
  pre.train({share(random_graph(6, 1)), share(random_graph(6, 2))}, dir.string());
  auto ckpt = load_checkpoint((dir / "checkpoint.json").string());
  EXPECT_EQ(ckpt.extras.step, 32);
  auto target = share(random_graph(6, 3));
  auto r = finetune(ckpt, target, d, cfg);
  ASSERT_TRUE(r.per_graph[0].best_cycles_mapping);
  EXPECT_TRUE(validate_mapping(d, *target, *r.per_graph[0].best_cycles_mapping).ok());

  DeviceConfig big = d;
  big.num_tiles = 64;
  EXPECT_THROW(finetune(ckpt, target, big, cfg), ConfigError);
}

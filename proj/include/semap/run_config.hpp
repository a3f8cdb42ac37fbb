#pragma once

// One JSON file configures a run. Every section is optional, unknown keys are
// errors, and to_json(parse(x)) is the canonical echo written next to results.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semap/baselines.hpp"
#include "semap/device_model.hpp"
#include "semap/policy_models.hpp"
#include "semap/ppo_trainer.hpp"

namespace semap {

struct RunConfig {
  DeviceConfig device;
  TrainConfig train;
  ModelConfig model;  // action_dim is always derived from the device
  SAConfig sa;
  std::vector<std::string> graphs;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  /// Propagates the shared seed and device shape into the sections.
  void finalize() {
    train.seed = seed;
    sa.seed = seed;
    model.action_dim = device.action_dim();
    device.validate();
    train.validate();
    model.validate();
    sa.validate();
  }
};

namespace detail {

class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  SectionReader& field(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return *this;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  SectionReader& optional_int(const char* key, std::optional<int>& out) {
    seen_.push_back(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return *this;
    if (!j_.at(key).is_number_integer()) throw ConfigError(path_ + "." + key + ": expected an integer or null");
    out = j_.at(key).get<int>();
    return *this;
  }

  SectionReader& custom(const char* key) {
    seen_.push_back(key);
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw ConfigError(path_ + "." + key + ": unknown key");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline NodeOrder parse_order(const std::string& s) {
  if (s == "topological") return NodeOrder::kTopological;
  if (s == "random") return NodeOrder::kRandom;
  throw ConfigError("train.order: expected \"topological\" or \"random\", got \"" + s + "\"");
}

inline SAObjective parse_sa_objective(const std::string& s) {
  if (s == "cycles") return SAObjective::kCycles;
  if (s == "return") return SAObjective::kReturn;
  throw ConfigError("sa.objective: expected \"cycles\" or \"return\", got \"" + s + "\"");
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::SectionReader top(j, "config");
  top.field("seed", c.seed).custom("device").custom("train").custom("model").custom("sa").custom("paths").finish();

  if (j.contains("device")) {
    detail::SectionReader r(j["device"], "device");
    r.field("num_tiles", c.device.num_tiles)
        .field("num_slots", c.device.num_slots)
        .field("ii", c.device.ii)
        .field("exec_latency", c.device.exec_latency)
        .optional_int("reach_limit", c.device.reach_limit)
        .field("lambda_penalty", c.device.lambda_penalty)
        .finish();
  }
  if (j.contains("train")) {
    auto& t = c.train;
    std::string order = "topological";
    detail::SectionReader r(j["train"], "train");
    r.field("epochs", t.epochs)
        .field("episodes_per_iter", t.episodes_per_iter)
        .field("clip", t.clip)
        .field("gamma", t.gamma)
        .field("lr_actor", t.lr_actor)
        .field("lr_critic", t.lr_critic)
        .field("update_epochs", t.update_epochs)
        .field("entropy_coef", t.entropy_coef)
        .field("minibatch_size", t.minibatch_size)
        .field("max_grad_norm", t.max_grad_norm)
        .field("normalize_advantages", t.normalize_advantages)
        .field("use_gae", t.use_gae)
        .field("gae_lambda", t.gae_lambda)
        .field("workers", t.workers)
        .field("masking", t.masking)
        .field("order", order)
        .field("checkpoint_every", t.checkpoint_every)
        .field("log_wall_time", t.log_wall_time)
        .finish();
    t.order = detail::parse_order(order);
  }
  if (j.contains("model")) {
    detail::SectionReader r(j["model"], "model");
    r.field("gnn_hidden", c.model.gnn_hidden)
        .field("embed_width", c.model.embed_width)
        .field("attention_heads", c.model.attention_heads)
        .field("mlp_hidden", c.model.mlp_hidden)
        .field("use_gga", c.model.use_gga)
        .finish();
  }
  if (j.contains("sa")) {
    std::string objective = "cycles";
    detail::SectionReader r(j["sa"], "sa");
    r.field("initial_temperature", c.sa.initial_temperature)
        .field("alpha", c.sa.alpha)
        .field("steps", c.sa.steps)
        .field("objective", objective)
        .field("max_restarts", c.sa.max_restarts)
        .finish();
    c.sa.objective = detail::parse_sa_objective(objective);
  }
  if (j.contains("paths")) {
    detail::SectionReader r(j["paths"], "paths");
    r.field("graphs", c.graphs).field("out_dir", c.out_dir).finish();
  }
  c.finalize();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json device = {{"num_tiles", c.device.num_tiles},     {"num_slots", c.device.num_slots},
                           {"ii", c.device.ii},                   {"exec_latency", c.device.exec_latency},
                           {"lambda_penalty", c.device.lambda_penalty}};
  device["reach_limit"] = c.device.reach_limit ? nlohmann::json(*c.device.reach_limit) : nlohmann::json(nullptr);
  const auto& t = c.train;
  nlohmann::json train = {{"epochs", t.epochs},
                          {"episodes_per_iter", t.episodes_per_iter},
                          {"clip", t.clip},
                          {"gamma", t.gamma},
                          {"lr_actor", t.lr_actor},
                          {"lr_critic", t.lr_critic},
                          {"update_epochs", t.update_epochs},
                          {"entropy_coef", t.entropy_coef},
                          {"minibatch_size", t.minibatch_size},
                          {"max_grad_norm", t.max_grad_norm},
                          {"normalize_advantages", t.normalize_advantages},
                          {"use_gae", t.use_gae},
                          {"gae_lambda", t.gae_lambda},
                          {"workers", t.workers},
                          {"masking", t.masking},
                          {"order", t.order == NodeOrder::kRandom ? "random" : "topological"},
                          {"checkpoint_every", t.checkpoint_every},
                          {"log_wall_time", t.log_wall_time}};
  nlohmann::json model = to_json(c.model);
  model.erase("action_dim");
  nlohmann::json sa = {{"initial_temperature", c.sa.initial_temperature},
                       {"alpha", c.sa.alpha},
                       {"steps", c.sa.steps},
                       {"objective", c.sa.objective == SAObjective::kReturn ? "return" : "cycles"},
                       {"max_restarts", c.sa.max_restarts}};
  return {{"seed", c.seed},   {"device", device}, {"train", train},
          {"model", model},   {"sa", sa},         {"paths", {{"graphs", c.graphs}, {"out_dir", c.out_dir}}}};
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace semap

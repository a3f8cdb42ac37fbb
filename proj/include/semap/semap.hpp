#pragma once

#include "semap/ir_graph.hpp"
#include "semap/device_model.hpp"
#include "semap/rl_env.hpp"
#include "semap/nn.hpp"
#include "semap/policy_models.hpp"
#include "semap/ppo_trainer.hpp"
#include "semap/baselines.hpp"

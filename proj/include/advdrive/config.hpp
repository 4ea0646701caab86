#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "advdrive/ppo.hpp"
#include "advdrive/raster.hpp"
#include "advdrive/reward.hpp"
#include "advdrive/world.hpp"

namespace advdrive {

inline constexpr const char* kCodeVersion = "advdrive 0.1.0";

enum class Phase { kBaseline, kAdversaryTraining, kRetraining, kEvaluation };
std::string ToString(Phase phase);

struct PhaseBudget {
  int episodes = 0;
  std::int64_t total_steps = 0;  // world ticks across the phase; 0 = no cap
  int max_steps = 0;             // per episode; 0 = scenario sim.max_steps
};

struct EvaluationBudget {
  int episodes = 50;
  int max_steps = 2000;
  bool greedy = false;
};

struct PhasePlan {
  PhaseBudget baseline{610, 300672, 0};
  PhaseBudget adversary{101, 57728, 0};
  PhaseBudget retraining{306, 133888, 0};
  EvaluationBudget evaluation;
};

struct RunConfig {
  ScenarioConfig scenario = DefaultScenario();
  RasterConfig raster;
  RewardParams reward;
  PpoHyper ppo;
  PhasePlan phases;
  std::uint64_t seed = 0;
  std::string out = "runs";
  int workers = 1;
  std::string adversary_target = "T1";
  int checkpoint_every = 25;

  // Throws ConfigError naming the offending key.
  void Validate() const;
  nlohmann::json ToJson() const;
};

// Desk-scale settings for the end-to-end demo: lite21 observations and the
// reduced 120 / 40 / 60 episode budgets with 20 x 400 evaluation.
RunConfig DemoConfig();

// Unset keys keep their defaults; unknown keys and out-of-range values throw
// ConfigError naming the key.
RunConfig ConfigFromJson(const nlohmann::json& j, RunConfig base = {});
RunConfig LoadConfig(const std::string& path, RunConfig base = {});

}  // namespace advdrive

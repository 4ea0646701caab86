#pragma once

// Multi-agent episode execution and the three training phases: baseline
// victims, adversary training against frozen victims, and victim retraining
// against a frozen adversary.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "advdrive/checkpoint.hpp"
#include "advdrive/config.hpp"
#include "advdrive/nn.hpp"
#include "advdrive/ppo.hpp"
#include "advdrive/raster.hpp"
#include "advdrive/reward.hpp"
#include "advdrive/world.hpp"

namespace advdrive {

struct AgentPolicy {
  std::string agent_id;
  Role role = Role::kVictim;
  RewardKind reward_kind = RewardKind::kVictim;
  NetworkParams params;
  AdamState adam;
  double kl_coef = 0.3;
  bool frozen = false;
  std::int64_t episodes_trained = 0;
  std::int64_t steps_trained = 0;

  static AgentPolicy Fresh(const AgentSpec& spec, const NetArch& arch, std::uint64_t seed,
                           double kl_coef);
  static AgentPolicy FromCheckpoint(const Checkpoint& ckpt, const PpoHyper& hyper);
  Checkpoint ToCheckpoint() const;
};

// One row per agent per recorded tick (tick 0 is the spawn state).
struct TickRecord {
  std::int64_t tick = 0;
  std::string agent_id;
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  bool active = true;  // the agent acted on this tick
  StepFlags flags;
};

struct FlagEvent {
  std::int64_t tick = 0;
  std::string agent_id;
  std::string kind;  // "cv", "co", "io", "iol", "goal"
  Vec2 position;
};

struct EpisodeLog {
  std::vector<std::string> agent_ids;
  std::vector<TickRecord> records;
  std::vector<FlagEvent> events;
  std::int64_t ticks = 0;  // recorded ticks including tick 0
  double dt = 0.05;
};

struct EpisodeOptions {
  RasterConfig raster;
  RewardParams reward;
  bool greedy = false;
  // Agents whose transitions (with observations) are recorded.
  std::set<std::string> collect;
};

struct EpisodeResult {
  std::map<std::string, Trajectory> trajectories;
  std::map<std::string, double> episode_reward;
  EpisodeLog log;
};

// Runs one episode. All policies act simultaneously on the same pre-step
// world; each renders only its own observation.
EpisodeResult RunEpisode(const std::vector<const AgentPolicy*>& policies,
                         const ScenarioConfig& scenario, int max_steps, std::uint64_t seed,
                         const EpisodeOptions& options);

struct PhaseSpec {
  std::string name;  // unique tag; seeds derive from it
  Phase phase = Phase::kBaseline;
  PhaseBudget budget;
};

struct PhaseResult {
  std::string name;
  std::int64_t episodes = 0;
  std::int64_t steps = 0;
  std::map<std::string, std::vector<double>> episode_rewards;
  std::vector<nlohmann::json> batch_stats;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> final_checkpoints;  // agent -> path
};

// Shared context for the phase runners.
struct RunContext {
  RunConfig config;
  std::string out_dir;
  std::ostream* stats = nullptr;  // line-delimited JSON batch records
  std::function<void(const std::string&)> progress;
};

// Trains all non-frozen policies for the budget; frozen ones act only.
// Checkpoints every `checkpoint_every` episodes and at the end under
// out_dir/checkpoints/<phase>/. Throws DivergenceError on a non-finite update.
PhaseResult RunTrainingPhase(std::map<std::string, AgentPolicy>& policies,
                             const ScenarioConfig& scenario, const PhaseSpec& spec,
                             const RunContext& ctx);

// Phase entry points. Each writes <out_dir>/<phase>/manifest.json and returns
// agent -> checkpoint path.
std::map<std::string, std::string> TrainBaseline(const RunContext& ctx);
std::string TrainAdversary(const RunContext& ctx,
                           const std::map<std::string, std::string>& victim_checkpoints,
                           RewardKind reward_kind);
std::map<std::string, std::string> RetrainVictims(
    const RunContext& ctx, const std::map<std::string, std::string>& victim_checkpoints,
    const std::string& adversary_checkpoint);

// Loads policies (frozen) for evaluation: victims plus an optional adversary.
std::map<std::string, AgentPolicy> LoadFrozenPolicies(
    const std::map<std::string, std::string>& victim_checkpoints,
    const std::optional<std::string>& adversary_checkpoint, const PpoHyper& hyper);

// Scenario restricted to the agents that have policies; the adversary's
// reward kind follows its policy.
ScenarioConfig ScenarioFor(const ScenarioConfig& base,
                           const std::map<std::string, AgentPolicy>& policies);

}  // namespace advdrive

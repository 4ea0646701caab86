#include "advdrive/orchestrator.hpp"

#include <algorithm>
#include <filesystem>

#include "advdrive/errors.hpp"
#include "advdrive/random.hpp"

namespace advdrive {

namespace fs = std::filesystem;
using nlohmann::json;

AgentPolicy AgentPolicy::Fresh(const AgentSpec& spec, const NetArch& arch, std::uint64_t seed,
                               double kl_coef) {
  AgentPolicy p;
  p.agent_id = spec.id;
  p.role = spec.role;
  p.reward_kind = spec.reward_kind;
  p.params = NetworkParams::Initialize(arch, seed);
  p.adam = AdamState::Zeros(arch);
  p.kl_coef = kl_coef;
  return p;
}

AgentPolicy AgentPolicy::FromCheckpoint(const Checkpoint& ckpt, const PpoHyper& hyper) {
  AgentPolicy p;
  p.agent_id = ckpt.agent_id;
  p.role = ckpt.role;
  p.reward_kind = ckpt.reward_kind;
  p.params = ckpt.params;
  p.adam = ckpt.adam ? *ckpt.adam : AdamState::Zeros(ckpt.params.arch);
  p.kl_coef = ckpt.adam ? ckpt.kl_coef : hyper.kl_coef_init;
  p.episodes_trained = ckpt.episodes;
  p.steps_trained = ckpt.steps;
  return p;
}

Checkpoint AgentPolicy::ToCheckpoint() const {
  Checkpoint c;
  c.agent_id = agent_id;
  c.role = role;
  c.reward_kind = reward_kind;
  c.params = params;
  c.adam = adam;
  c.kl_coef = kl_coef;
  c.episodes = episodes_trained;
  c.steps = steps_trained;
  return c;
}

namespace {

struct PendingAction {
  ActionSample sample;
  NetOutput output;
  ObservationImage obs;
};

void RecordTick(EpisodeLog& log, const WorldState& world,
                const std::map<std::string, StepFlags>& flags,
                const std::set<std::string>& acted) {
  for (const auto& id : log.agent_ids) {
    const VehicleState& v = world.vehicles.at(id);
    TickRecord r;
    r.tick = world.tick;
    r.agent_id = id;
    r.position = v.position;
    r.heading = v.heading;
    r.speed = v.speed;
    r.active = world.tick == 0 ? true : acted.count(id) > 0;
    auto it = flags.find(id);
    if (it != flags.end() && (world.tick == 0 || r.active)) r.flags = it->second;
    if (!r.active) r.flags = StepFlags{0, 0, 0, 0, 0.0, r.flags.remaining_distance};
    log.records.push_back(r);
  }
  log.ticks += 1;
}

void RecordEvents(EpisodeLog& log, const WorldState& world, const std::string& id,
                  const StepFlags& f) {
  const Vec2 p = world.vehicles.at(id).position;
  auto add = [&](bool on, const char* kind) {
    if (on) log.events.push_back({world.tick, id, kind, p});
  };
  add(f.cv, "cv");
  add(f.co, "co");
  add(f.io, "io");
  add(f.iol, "iol");
  add(world.reached_goal.at(id), "goal");
}

}  // namespace

EpisodeResult RunEpisode(const std::vector<const AgentPolicy*>& policies,
                         const ScenarioConfig& scenario, int max_steps, std::uint64_t seed,
                         const EpisodeOptions& options) {
  std::map<std::string, const AgentPolicy*> by_id;
  for (const AgentPolicy* p : policies) by_id[p->agent_id] = p;
  for (const auto& a : scenario.agents) {
    if (!by_id.count(a.id)) throw ContractViolation("no policy for agent '" + a.id + "'");
  }

  WorldState world = InitWorld(scenario, seed);
  std::map<std::string, std::mt19937_64> rngs;
  EpisodeResult result;
  result.log.dt = scenario.sim.dt;
  for (const auto& a : scenario.agents) {
    rngs.emplace(a.id, std::mt19937_64(DeriveSeed(seed, "agent", DeriveSeed(0, a.id))));
    result.log.agent_ids.push_back(a.id);
    result.episode_reward[a.id] = 0.0;
    if (options.collect.count(a.id)) result.trajectories[a.id].agent_id = a.id;
  }
  std::map<std::string, StepFlags> prev = InitialFlags(world);
  RecordTick(result.log, world, prev, {});

  while (world.tick < max_steps) {
    std::map<std::string, ActionCommand> actions;
    std::map<std::string, PendingAction> pending;
    for (const auto& a : scenario.agents) {
      if (!world.Active(a.id)) continue;
      PendingAction act;
      act.obs = Render(world, a.id, options.raster);
      act.output = Forward(by_id.at(a.id)->params, act.obs);
      act.sample = options.greedy ? GreedyAction(act.output.logits)
                                  : SampleAction(act.output.logits, rngs.at(a.id));
      actions[a.id] = ActionFromIndex(act.sample.index);
      pending.emplace(a.id, std::move(act));
    }
    if (actions.empty()) break;

    StepResult step = Step(world, actions);
    std::set<std::string> acted;
    for (auto& [id, act] : pending) {
      const StepFlags& cur = step.flags.at(id);
      const double reward = Reward(by_id.at(id)->reward_kind, prev.at(id), cur, options.reward);
      result.episode_reward[id] += reward;
      auto traj = result.trajectories.find(id);
      if (traj != result.trajectories.end()) {
        Transition t;
        t.obs = std::move(act.obs);
        t.action = act.sample.index;
        t.log_prob_old = act.sample.log_prob;
        t.logits_old = act.output.logits;
        t.value_old = act.output.value;
        t.reward = reward;
        t.done = step.world.terminated.at(id);
        traj->second.transitions.push_back(std::move(t));
      }
      prev[id] = cur;
      acted.insert(id);
      RecordEvents(result.log, step.world, id, cur);
    }
    world = std::move(step.world);
    RecordTick(result.log, world, step.flags, acted);
  }

  // Episodes cut at max_steps bootstrap from the value of the final state.
  for (auto& [id, traj] : result.trajectories) {
    if (!traj.transitions.empty() && !traj.transitions.back().done) {
      traj.bootstrap_value =
          Forward(by_id.at(id)->params, Render(world, id, options.raster)).value;
    }
  }
  return result;
}

namespace {

std::string PhaseDir(const RunContext& ctx, const std::string& name) {
  return (fs::path(ctx.out_dir) / name).string();
}

std::string SaveAgent(const AgentPolicy& p, const std::string& path) {
  SaveCheckpoint(path, p.ToCheckpoint());
  return path;
}

void Emit(const RunContext& ctx, const json& record) {
  if (ctx.stats) *ctx.stats << record.dump() << '\n';
}

void Progress(const RunContext& ctx, const std::string& msg) {
  if (ctx.progress) ctx.progress(msg);
}

}  // namespace

PhaseResult RunTrainingPhase(std::map<std::string, AgentPolicy>& policies,
                             const ScenarioConfig& scenario, const PhaseSpec& spec,
                             const RunContext& ctx) {
  const RunConfig& cfg = ctx.config;
  PhaseResult result;
  result.name = spec.name;
  const std::string dir = PhaseDir(ctx, spec.name);
  fs::create_directories(fs::path(dir) / "checkpoints");

  std::vector<std::string> trainable;
  for (const auto& a : scenario.agents) {
    if (!policies.at(a.id).frozen) trainable.push_back(a.id);
  }
  std::map<std::string, std::mt19937_64> shuffle_rngs;
  std::map<std::string, std::vector<Trajectory>> pending;
  std::map<std::string, std::size_t> pending_steps;
  std::map<std::string, std::string> last_good;
  for (const auto& id : trainable) {
    shuffle_rngs.emplace(id, std::mt19937_64(DeriveSeed(cfg.seed, spec.name, DeriveSeed(0, id))));
    pending_steps[id] = 0;
    result.episode_rewards[id];
  }

  std::vector<const AgentPolicy*> acting;
  for (const auto& a : scenario.agents) acting.push_back(&policies.at(a.id));

  EpisodeOptions options;
  options.raster = cfg.raster;
  options.reward = cfg.reward;
  options.collect = {trainable.begin(), trainable.end()};
  const int max_steps = spec.budget.max_steps > 0 ? spec.budget.max_steps : scenario.sim.max_steps;

  for (std::int64_t ep = 0; ep < spec.budget.episodes; ++ep) {
    if (spec.budget.total_steps > 0 && result.steps >= spec.budget.total_steps) break;
    const std::uint64_t seed = DeriveSeed(cfg.seed, spec.name, static_cast<std::uint64_t>(ep));
    EpisodeResult episode = RunEpisode(acting, scenario, max_steps, seed, options);
    result.episodes += 1;
    result.steps += episode.log.ticks - 1;

    for (const auto& id : trainable) {
      AgentPolicy& policy = policies.at(id);
      Trajectory& traj = episode.trajectories.at(id);
      traj.episode = ep;
      result.episode_rewards[id].push_back(episode.episode_reward.at(id));
      policy.episodes_trained += 1;
      policy.steps_trained += static_cast<std::int64_t>(traj.size());
      pending_steps[id] += traj.size();
      pending[id].push_back(std::move(traj));

      if (pending_steps[id] < static_cast<std::size_t>(cfg.ppo.train_batch)) continue;
      double mean_reward = 0.0;
      for (const auto& t : pending[id]) mean_reward += t.TotalReward();
      mean_reward /= static_cast<double>(pending[id].size());
      RolloutBatch batch = RolloutBatch::FromTrajectories(std::move(pending[id]), cfg.ppo);
      pending[id].clear();
      pending_steps[id] = 0;
      UpdateStats stats;
      try {
        stats = UpdatePolicy(policy.params, policy.adam, batch, cfg.ppo, policy.kl_coef,
                             shuffle_rngs.at(id));
      } catch (const NumericError& e) {
        throw DivergenceError("training of '" + id + "' diverged in phase " + spec.name + ": " +
                                  e.what(),
                              last_good.count(id) ? last_good.at(id) : "");
      }
      json record = {{"phase", spec.name},
                     {"agent", id},
                     {"episode", ep},
                     {"batch_episodes", batch.episodes},
                     {"timesteps", stats.timesteps},
                     {"mean_reward", mean_reward},
                     {"kl", stats.mean_kl},
                     {"kl_coef", stats.kl_coef_after},
                     {"entropy", stats.entropy},
                     {"total_loss", stats.total_loss},
                     {"surrogate", stats.surrogate},
                     {"vf_loss", stats.vf_loss}};
      result.batch_stats.push_back(record);
      Emit(ctx, record);
    }

    if ((ep + 1) % cfg.checkpoint_every == 0) {
      for (const auto& id : trainable) {
        last_good[id] = SaveAgent(policies.at(id), (fs::path(dir) / "checkpoints" /
                                                    (id + "_ep" + std::to_string(ep + 1) + ".ckpt"))
                                                       .string());
      }
    }
    if ((ep + 1) % 10 == 0) {
      std::string msg = spec.name + ": episode " + std::to_string(ep + 1) + "/" +
                        std::to_string(spec.budget.episodes);
      for (const auto& id : trainable) {
        const auto& r = result.episode_rewards[id];
        const std::size_t n = std::min<std::size_t>(10, r.size());
        double avg = 0.0;
        for (std::size_t i = r.size() - n; i < r.size(); ++i) avg += r[i];
        msg += "  " + id + " reward(last10)=" + std::to_string(n ? avg / n : 0.0);
      }
      Progress(ctx, msg);
    }
  }
  for (const auto& id : trainable) {
    result.final_checkpoints[id] =
        SaveAgent(policies.at(id), (fs::path(dir) / (id + ".ckpt")).string());
  }
  return result;
}

namespace {

json CheckpointEntry(const std::string& path) {
  const Checkpoint c = LoadCheckpoint(path);
  return {{"path", path},
          {"sha256", FileSha256(path)},
          {"params_checksum", ParamsChecksum(c.params)},
          {"agent", c.agent_id},
          {"role", ToString(c.role)},
          {"reward_kind", ToString(c.reward_kind)}};
}

void WriteManifest(const RunContext& ctx, const PhaseSpec& spec, const PhaseResult& result,
                   const std::map<std::string, std::string>& inputs) {
  json in = json::object();
  for (const auto& [id, path] : inputs) in[id] = CheckpointEntry(path);
  json out = json::object();
  for (const auto& [id, path] : result.final_checkpoints) out[id] = CheckpointEntry(path);
  json manifest = {
      {"phase", ToString(spec.phase)},
      {"name", spec.name},
      {"code_version", kCodeVersion},
      {"master_seed", ctx.config.seed},
      {"episode_seeds", "DeriveSeed(master_seed, name, episode_index)"},
      {"budget",
       {{"episodes", spec.budget.episodes},
        {"total_steps", spec.budget.total_steps},
        {"max_steps", spec.budget.max_steps}}},
      {"consumed", {{"episodes", result.episodes}, {"steps", result.steps}}},
      {"checkpoints_in", in},
      {"checkpoints_out", out},
      {"warnings", result.warnings},
      {"config", ctx.config.ToJson()},
  };
  WriteFileAtomic((fs::path(PhaseDir(ctx, spec.name)) / "manifest.json").string(),
                  manifest.dump(2) + "\n");
}

AgentPolicy LoadPolicy(const std::string& path, const PpoHyper& hyper, bool frozen,
                       std::vector<std::string>* warnings) {
  const Checkpoint ckpt = LoadCheckpoint(path);
  if (!ckpt.adam && !frozen && warnings) {
    warnings->push_back("checkpoint '" + path +
                        "' has no optimizer state; resuming with a fresh Adam state");
  }
  AgentPolicy p = AgentPolicy::FromCheckpoint(ckpt, hyper);
  p.frozen = frozen;
  return p;
}

void CheckFrozen(const std::string& id, const std::string& path, const std::string& file_digest,
                 const std::string& params_digest, const AgentPolicy& policy) {
  if (ParamsChecksum(policy.params) != params_digest) {
    throw FreezeViolation("parameters of frozen agent '" + id + "' changed during the phase");
  }
  if (FileSha256(path) != file_digest) {
    throw FreezeViolation("checkpoint of frozen agent '" + id + "' changed during the phase");
  }
}

}  // namespace

ScenarioConfig ScenarioFor(const ScenarioConfig& base,
                           const std::map<std::string, AgentPolicy>& policies) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : policies) ids.push_back(id);
  ScenarioConfig s = base.Subset(ids);
  for (auto& a : s.agents) a.reward_kind = policies.at(a.id).reward_kind;
  if (s.agents.size() != policies.size()) {
    for (const auto& [id, _] : policies) s.Agent(id);  // throws for the missing id
  }
  return s;
}

std::map<std::string, std::string> TrainBaseline(const RunContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const NetArch arch = NetArch::ForMode(cfg.raster.mode);
  std::map<std::string, AgentPolicy> policies;
  for (const auto& a : cfg.scenario.agents) {
    if (a.role != Role::kVictim) continue;
    if (a.reward_kind != RewardKind::kVictim) {
      throw ConfigError("victim '" + a.id + "' must use the victim reward");
    }
    policies.emplace(a.id, AgentPolicy::Fresh(a, arch, DeriveSeed(cfg.seed, "init", DeriveSeed(0, a.id)),
                                              cfg.ppo.kl_coef_init));
  }
  if (policies.empty()) throw ConfigError("scenario has no victims to train");
  const ScenarioConfig scenario = ScenarioFor(cfg.scenario, policies);
  const PhaseSpec spec{"baseline", Phase::kBaseline, cfg.phases.baseline};
  const PhaseResult result = RunTrainingPhase(policies, scenario, spec, ctx);
  WriteManifest(ctx, spec, result, {});
  return result.final_checkpoints;
}

std::string TrainAdversary(const RunContext& ctx,
                           const std::map<std::string, std::string>& victim_checkpoints,
                           RewardKind reward_kind) {
  const RunConfig& cfg = ctx.config;
  if (reward_kind == RewardKind::kVictim) {
    throw ConfigError("adversary reward must be adv_collision or adv_offroad");
  }
  const auto target = victim_checkpoints.find(cfg.adversary_target);
  if (target == victim_checkpoints.end()) {
    throw ConfigError("no checkpoint for adversary_target '" + cfg.adversary_target + "'");
  }
  const auto adversaries = cfg.scenario.AgentIds(Role::kAdversary);
  if (adversaries.empty()) throw ConfigError("scenario has no adversary agent");

  std::map<std::string, AgentPolicy> policies;
  PhaseResult result;
  policies.emplace(target->first, LoadPolicy(target->second, cfg.ppo, true, nullptr));
  const std::string victim_file = FileSha256(target->second);
  const std::string victim_params = ParamsChecksum(policies.at(target->first).params);

  AgentSpec adv = cfg.scenario.Agent(adversaries.front());
  adv.reward_kind = reward_kind;
  const NetArch arch = policies.at(target->first).params.arch;
  policies.emplace(adv.id, AgentPolicy::Fresh(adv, arch, DeriveSeed(cfg.seed, "init", DeriveSeed(0, adv.id)),
                                              cfg.ppo.kl_coef_init));

  const ScenarioConfig scenario = ScenarioFor(cfg.scenario, policies);
  const PhaseSpec spec{"adversary_" + ToString(reward_kind), Phase::kAdversaryTraining,
                       cfg.phases.adversary};
  result = RunTrainingPhase(policies, scenario, spec, ctx);
  CheckFrozen(target->first, target->second, victim_file, victim_params, policies.at(target->first));
  WriteManifest(ctx, spec, result, {{target->first, target->second}});
  return result.final_checkpoints.at(adv.id);
}

std::map<std::string, std::string> RetrainVictims(
    const RunContext& ctx, const std::map<std::string, std::string>& victim_checkpoints,
    const std::string& adversary_checkpoint) {
  const RunConfig& cfg = ctx.config;
  std::map<std::string, AgentPolicy> policies;
  std::vector<std::string> warnings;
  for (const auto& [id, path] : victim_checkpoints) {
    AgentPolicy p = LoadPolicy(path, cfg.ppo, false, &warnings);
    if (p.role != Role::kVictim) throw ConfigError("checkpoint '" + path + "' is not a victim");
    policies.emplace(id, std::move(p));
  }
  AgentPolicy adversary = LoadPolicy(adversary_checkpoint, cfg.ppo, true, nullptr);
  if (adversary.role != Role::kAdversary) {
    throw ConfigError("checkpoint '" + adversary_checkpoint + "' is not an adversary");
  }
  const std::string adv_id = adversary.agent_id;
  const std::string adv_file = FileSha256(adversary_checkpoint);
  const std::string adv_params = ParamsChecksum(adversary.params);
  const std::string tag = ToString(adversary.reward_kind);
  policies.emplace(adv_id, std::move(adversary));

  const ScenarioConfig scenario = ScenarioFor(cfg.scenario, policies);
  const PhaseSpec spec{"retrain_" + tag, Phase::kRetraining, cfg.phases.retraining};
  PhaseResult result = RunTrainingPhase(policies, scenario, spec, ctx);
  result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());
  CheckFrozen(adv_id, adversary_checkpoint, adv_file, adv_params, policies.at(adv_id));
  std::map<std::string, std::string> inputs = victim_checkpoints;
  inputs[adv_id] = adversary_checkpoint;
  WriteManifest(ctx, spec, result, inputs);
  return result.final_checkpoints;
}

std::map<std::string, AgentPolicy> LoadFrozenPolicies(
    const std::map<std::string, std::string>& victim_checkpoints,
    const std::optional<std::string>& adversary_checkpoint, const PpoHyper& hyper) {
  std::map<std::string, AgentPolicy> policies;
  for (const auto& [id, path] : victim_checkpoints) {
    AgentPolicy p = LoadPolicy(path, hyper, true, nullptr);
    policies.emplace(id, std::move(p));
  }
  if (adversary_checkpoint) {
    AgentPolicy p = LoadPolicy(*adversary_checkpoint, hyper, true, nullptr);
    const std::string id = p.agent_id;
    policies.emplace(id, std::move(p));
  }
  return policies;
}

}  // namespace advdrive

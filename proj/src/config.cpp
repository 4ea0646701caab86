#include "advdrive/config.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "advdrive/errors.hpp"

namespace advdrive {

using nlohmann::json;

std::string ToString(Phase phase) {
  switch (phase) {
    case Phase::kBaseline:
      return "baseline";
    case Phase::kAdversaryTraining:
      return "adversary_training";
    case Phase::kRetraining:
      return "retraining";
    case Phase::kEvaluation:
      return "evaluation";
  }
  return "baseline";
}

namespace {

void CheckKeys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  if (!obj.is_object()) throw ConfigError("'" + prefix + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + (prefix.empty() ? key : prefix + "." + key) + "'");
    }
  }
}

std::string Join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

template <typename T>
void Read(const json& obj, const std::string& key, const std::string& prefix, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + Join(prefix, key) + "' has the wrong type");
  }
}

Vec2 ReadPoint(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() < 2 || v.size() > 3 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError("key '" + key + "' must be [x, y] (an optional z is ignored)");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

void Require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("key '" + key + "' " + what);
}

PhaseBudget ReadBudget(const json& obj, const std::string& prefix, PhaseBudget b) {
  CheckKeys(obj, {"episodes", "total_steps", "max_steps"}, prefix);
  Read(obj, "episodes", prefix, b.episodes);
  Read(obj, "total_steps", prefix, b.total_steps);
  Read(obj, "max_steps", prefix, b.max_steps);
  return b;
}

json BudgetJson(const PhaseBudget& b) {
  return {{"episodes", b.episodes}, {"total_steps", b.total_steps}, {"max_steps", b.max_steps}};
}

}  // namespace

void RunConfig::Validate() const {
  Require(scenario.lane_width > scenario.vehicle.width, "map.lane_width",
          "must exceed the vehicle width (2.0 m)");
  Require(scenario.map_kind == "t_intersection" || scenario.map_kind == "corridor", "map.kind",
          "must be t_intersection or corridor");
  Require(scenario.sim.dt > 0.0, "sim.dt", "must be positive");
  Require(scenario.sim.max_steps >= 1, "sim.max_steps", "must be at least 1");
  Require(scenario.sim.spawn_jitter >= 0.0, "sim.spawn_jitter", "must be non-negative");
  Require(scenario.sim.goal_tolerance > 0.0, "sim.goal_tolerance", "must be positive");
  Require(!scenario.agents.empty(), "agents", "must list at least one agent");
  for (const auto& a : scenario.agents) {
    Require(!a.id.empty(), "agents[].id", "must be non-empty");
    if (a.role == Role::kAdversary) {
      Require(a.reward_kind != RewardKind::kVictim, "agents[].reward_kind",
              "of an adversary must be adv_collision or adv_offroad");
    } else {
      Require(a.reward_kind == RewardKind::kVictim, "agents[].reward_kind",
              "of a victim must be victim");
    }
  }
  Require(raster.view_ahead > 0.0, "raster.view_ahead", "must be positive");
  Require(raster.view_side > 0.0, "raster.view_side", "must be positive");
  Require(reward.beta >= 0.0, "reward.beta", "must be non-negative");
  ppo.Validate();
  for (const auto& [name, b] : {std::pair{"phases.baseline", phases.baseline},
                                std::pair{"phases.adversary", phases.adversary},
                                std::pair{"phases.retraining", phases.retraining}}) {
    Require(b.episodes >= 0, std::string(name) + ".episodes", "must be non-negative");
    Require(b.total_steps >= 0, std::string(name) + ".total_steps", "must be non-negative");
    Require(b.max_steps >= 0, std::string(name) + ".max_steps", "must be non-negative");
  }
  Require(phases.evaluation.episodes >= 1, "phases.evaluation.episodes", "must be at least 1");
  Require(phases.evaluation.max_steps >= 1, "phases.evaluation.max_steps", "must be at least 1");
  Require(workers >= 1, "workers", "must be at least 1");
  Require(checkpoint_every >= 1, "checkpoint_every", "must be at least 1");
}

json RunConfig::ToJson() const {
  json agents = json::array();
  for (const auto& a : scenario.agents) {
    json ja = {{"id", a.id},
               {"role", ToString(a.role)},
               {"reward_kind", ToString(a.reward_kind)},
               {"spawn", {a.spawn.x, a.spawn.y}},
               {"goal", {a.goal.x, a.goal.y}}};
    if (a.route) {
      json r = json::array();
      for (const auto& p : *a.route) r.push_back({p.x, p.y});
      ja["route"] = r;
    }
    agents.push_back(ja);
  }
  return {
      {"seed", seed},
      {"out", out},
      {"workers", workers},
      {"adversary_target", adversary_target},
      {"checkpoint_every", checkpoint_every},
      {"map", {{"kind", scenario.map_kind}, {"lane_width", scenario.lane_width}}},
      {"sim",
       {{"dt", scenario.sim.dt},
        {"max_steps", scenario.sim.max_steps},
        {"spawn_jitter", scenario.sim.spawn_jitter},
        {"goal_tolerance", scenario.sim.goal_tolerance}}},
      {"agents", agents},
      {"raster",
       {{"view_ahead", raster.view_ahead},
        {"view_side", raster.view_side},
        {"mode", ToString(raster.mode)}}},
      {"reward", {{"beta", reward.beta}}},
      {"ppo",
       {{"gamma", ppo.gamma},
        {"gae_lambda", ppo.gae_lambda},
        {"clip", ppo.clip},
        {"kl_target", ppo.kl_target},
        {"kl_coef_init", ppo.kl_coef_init},
        {"vf_coef", ppo.vf_coef},
        {"ent_coef", ppo.ent_coef},
        {"minibatch", ppo.minibatch},
        {"epochs_per_batch", ppo.epochs_per_batch},
        {"train_batch", ppo.train_batch},
        {"lr", ppo.lr}}},
      {"phases",
       {{"baseline", BudgetJson(phases.baseline)},
        {"adversary", BudgetJson(phases.adversary)},
        {"retraining", BudgetJson(phases.retraining)},
        {"evaluation",
         {{"episodes", phases.evaluation.episodes},
          {"max_steps", phases.evaluation.max_steps},
          {"greedy", phases.evaluation.greedy}}}}},
  };
}

RunConfig DemoConfig() {
  RunConfig c;
  c.raster.mode = ObsMode::kLite21;
  c.scenario.sim.max_steps = 300;
  c.phases.baseline = {120, 0, 0};
  c.phases.adversary = {40, 0, 0};
  c.phases.retraining = {60, 0, 0};
  c.phases.evaluation = {20, 400, false};
  c.out = "runs/demo";
  return c;
}

RunConfig ConfigFromJson(const json& j, RunConfig c) {
  CheckKeys(j, {"seed", "out", "workers", "adversary_target", "checkpoint_every", "map", "sim",
                "agents", "raster", "reward", "ppo", "phases"},
            "");
  Read(j, "seed", "", c.seed);
  Read(j, "out", "", c.out);
  Read(j, "workers", "", c.workers);
  Read(j, "adversary_target", "", c.adversary_target);
  Read(j, "checkpoint_every", "", c.checkpoint_every);

  if (j.contains("map")) {
    const json& m = j["map"];
    CheckKeys(m, {"kind", "lane_width"}, "map");
    Read(m, "kind", "map", c.scenario.map_kind);
    Read(m, "lane_width", "map", c.scenario.lane_width);
  }
  if (j.contains("sim")) {
    const json& s = j["sim"];
    CheckKeys(s, {"dt", "max_steps", "spawn_jitter", "goal_tolerance"}, "sim");
    Read(s, "dt", "sim", c.scenario.sim.dt);
    Read(s, "max_steps", "sim", c.scenario.sim.max_steps);
    Read(s, "spawn_jitter", "sim", c.scenario.sim.spawn_jitter);
    Read(s, "goal_tolerance", "sim", c.scenario.sim.goal_tolerance);
  }
  if (j.contains("agents")) {
    const json& agents = j["agents"];
    if (!agents.is_array()) throw ConfigError("key 'agents' must be a list");
    c.scenario.agents.clear();
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const json& a = agents[i];
      const std::string prefix = "agents[" + std::to_string(i) + "]";
      CheckKeys(a, {"id", "role", "reward_kind", "spawn", "goal", "route"}, prefix);
      AgentSpec spec;
      std::string role = "victim";
      Read(a, "role", prefix, role);
      spec.role = ParseRole(role);
      std::string kind = spec.role == Role::kVictim ? "victim" : "adv_offroad";
      Read(a, "reward_kind", prefix, kind);
      spec.reward_kind = ParseRewardKind(kind);
      spec.id = spec.role == Role::kVictim ? "T" + std::to_string(i + 1) : "adversary";
      Read(a, "id", prefix, spec.id);
      if (!a.contains("spawn") || !a.contains("goal")) {
        throw ConfigError("key '" + prefix + ".spawn' and '" + prefix + ".goal' are required");
      }
      spec.spawn = ReadPoint(a["spawn"], prefix + ".spawn");
      spec.goal = ReadPoint(a["goal"], prefix + ".goal");
      if (a.contains("route")) {
        std::vector<Vec2> route;
        for (const auto& p : a["route"]) route.push_back(ReadPoint(p, prefix + ".route"));
        if (route.size() < 2) throw ConfigError("key '" + prefix + ".route' needs two points");
        spec.route = route;
      }
      c.scenario.agents.push_back(spec);
    }
  }
  if (j.contains("raster")) {
    const json& r = j["raster"];
    CheckKeys(r, {"view_ahead", "view_side", "mode"}, "raster");
    Read(r, "view_ahead", "raster", c.raster.view_ahead);
    Read(r, "view_side", "raster", c.raster.view_side);
    if (r.contains("mode")) c.raster.mode = ParseObsMode(r["mode"].get<std::string>());
  }
  if (j.contains("reward")) {
    CheckKeys(j["reward"], {"beta"}, "reward");
    Read(j["reward"], "beta", "reward", c.reward.beta);
  }
  if (j.contains("ppo")) {
    const json& p = j["ppo"];
    CheckKeys(p, {"gamma", "gae_lambda", "clip", "kl_target", "kl_coef_init", "vf_coef", "ent_coef",
                  "minibatch", "epochs_per_batch", "train_batch", "lr"},
              "ppo");
    Read(p, "gamma", "ppo", c.ppo.gamma);
    Read(p, "gae_lambda", "ppo", c.ppo.gae_lambda);
    Read(p, "clip", "ppo", c.ppo.clip);
    Read(p, "kl_target", "ppo", c.ppo.kl_target);
    Read(p, "kl_coef_init", "ppo", c.ppo.kl_coef_init);
    Read(p, "vf_coef", "ppo", c.ppo.vf_coef);
    Read(p, "ent_coef", "ppo", c.ppo.ent_coef);
    Read(p, "minibatch", "ppo", c.ppo.minibatch);
    Read(p, "epochs_per_batch", "ppo", c.ppo.epochs_per_batch);
    Read(p, "train_batch", "ppo", c.ppo.train_batch);
    Read(p, "lr", "ppo", c.ppo.lr);
  }
  if (j.contains("phases")) {
    const json& ph = j["phases"];
    CheckKeys(ph, {"baseline", "adversary", "retraining", "evaluation"}, "phases");
    if (ph.contains("baseline")) c.phases.baseline = ReadBudget(ph["baseline"], "phases.baseline", c.phases.baseline);
    if (ph.contains("adversary")) c.phases.adversary = ReadBudget(ph["adversary"], "phases.adversary", c.phases.adversary);
    if (ph.contains("retraining")) c.phases.retraining = ReadBudget(ph["retraining"], "phases.retraining", c.phases.retraining);
    if (ph.contains("evaluation")) {
      const json& e = ph["evaluation"];
      CheckKeys(e, {"episodes", "max_steps", "greedy"}, "phases.evaluation");
      Read(e, "episodes", "phases.evaluation", c.phases.evaluation.episodes);
      Read(e, "max_steps", "phases.evaluation", c.phases.evaluation.max_steps);
      Read(e, "greedy", "phases.evaluation", c.phases.evaluation.greedy);
    }
  }
  c.Validate();
  return c;
}

RunConfig LoadConfig(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError("cannot parse config file '" + path + "': " + e.what());
    }
  }
  return ConfigFromJson(j, std::move(base));
}

}  // namespace advdrive

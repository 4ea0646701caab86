#include "advdrive/world.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "advdrive/errors.hpp"
#include "advdrive/random.hpp"

namespace advdrive {

std::string ToString(Role role) {
  return role == Role::kVictim ? "victim" : "adversary";
}

std::string ToString(RewardKind kind) {
  switch (kind) {
    case RewardKind::kVictim:
      return "victim";
    case RewardKind::kAdvCollision:
      return "adv_collision";
    case RewardKind::kAdvOffroad:
      return "adv_offroad";
  }
  return "victim";
}

Role ParseRole(const std::string& s) {
  if (s == "victim") return Role::kVictim;
  if (s == "adversary") return Role::kAdversary;
  throw ConfigError("unknown role '" + s + "'");
}

RewardKind ParseRewardKind(const std::string& s) {
  if (s == "victim") return RewardKind::kVictim;
  if (s == "adv_collision") return RewardKind::kAdvCollision;
  if (s == "adv_offroad") return RewardKind::kAdvOffroad;
  throw ConfigError("unknown reward_kind '" + s + "'");
}

bool MapGeometry::OnDrivable(Vec2 p) const {
  return std::any_of(drivable.begin(), drivable.end(),
                     [p](const Polygon& poly) { return poly.Contains(p); });
}

namespace {

// Lane centers of the main road and the stem of the T, in meters.
constexpr double kWestboundY = 59.0;
constexpr double kEastboundY = 62.65;
constexpr double kStemNorthX = 167.0;
constexpr double kStemSouthX = 170.5;
constexpr double kTurnRadius = 9.0;
constexpr int kArcSegments = 16;

MapGeometry TIntersection(double lane_width) {
  MapGeometry m;
  m.kind = "t_intersection";
  m.lane_width = lane_width;
  const double half = lane_width / 2.0;
  const double road_min_y = kWestboundY - half;
  const double road_max_y = kEastboundY + half;
  const double stem_min_x = kStemNorthX - half;
  const double stem_max_x = kStemSouthX + half;

  m.drivable.push_back(Polygon::Box(130.0, road_min_y, 205.0, road_max_y));
  // Overlaps the main road slightly so the seam is never a gap.
  m.drivable.push_back(Polygon::Box(stem_min_x, road_max_y - 0.5, stem_max_x, 95.0));

  const double turn_top = kWestboundY + kTurnRadius;
  m.intersection_region = Polygon::Box(kStemSouthX - kTurnRadius, road_min_y,
                                       kStemNorthX + kTurnRadius, turn_top);

  // T1: westbound, right turn into the stem, north to its goal.
  {
    std::vector<Vec2> pts{{188.0, kWestboundY}, {kStemNorthX + kTurnRadius, kWestboundY}};
    AppendArc(pts, {kStemNorthX + kTurnRadius, turn_top}, kTurnRadius, -kPi / 2.0, -kPi,
              kArcSegments);
    pts.push_back({kStemNorthX, 75.7});
    m.lanes.push_back({"t1_route", Polyline(std::move(pts)), lane_width});
  }
  // T2: straight eastbound across the intersection.
  m.lanes.push_back({"t2_route", Polyline({{147.6, 62.6}, {191.2, 62.7}}), lane_width});
  // Adversary: south down the stem, turning onto the westbound lane.
  {
    std::vector<Vec2> pts{{kStemSouthX, 80.0}, {kStemSouthX, turn_top}};
    AppendArc(pts, {kStemSouthX - kTurnRadius, turn_top}, kTurnRadius, 0.0, -kPi / 2.0,
              kArcSegments);
    pts.push_back({144.0, kWestboundY});
    m.lanes.push_back({"adv_route", Polyline(std::move(pts)), lane_width});
  }

  const double divider_y = (kWestboundY + kEastboundY) / 2.0;
  m.markings.emplace_back(std::vector<Vec2>{{130.0, divider_y}, {stem_min_x, divider_y}});
  m.markings.emplace_back(std::vector<Vec2>{{stem_max_x, divider_y}, {205.0, divider_y}});
  const double stem_divider_x = (kStemNorthX + kStemSouthX) / 2.0;
  m.markings.emplace_back(std::vector<Vec2>{{stem_divider_x, turn_top}, {stem_divider_x, 95.0}});
  return m;
}

MapGeometry Corridor(double lane_width) {
  MapGeometry m;
  m.kind = "corridor";
  m.lane_width = lane_width;
  const double half = lane_width / 2.0;
  m.drivable.push_back(Polygon::Box(-20.0, -half - 1.0, 60.0, half + 1.0));
  m.lanes.push_back({"corridor", Polyline({{0.0, 0.0}, {30.0, 0.0}}), lane_width});
  m.markings.emplace_back(std::vector<Vec2>{{-20.0, half}, {60.0, half}});
  m.markings.emplace_back(std::vector<Vec2>{{-20.0, -half}, {60.0, -half}});
  return m;
}

}  // namespace

MapGeometry BuildMap(const std::string& kind, double lane_width) {
  if (lane_width <= VehicleParams{}.width) {
    throw ConfigError("map.lane_width must exceed the vehicle width");
  }
  if (kind == "t_intersection") return TIntersection(lane_width);
  if (kind == "corridor") return Corridor(lane_width);
  throw ConfigError("unknown map kind '" + kind + "'");
}

const AgentSpec& ScenarioConfig::Agent(const std::string& id) const {
  for (const auto& a : agents) {
    if (a.id == id) return a;
  }
  throw ContractViolation("unknown agent id '" + id + "'");
}

ScenarioConfig ScenarioConfig::Subset(const std::vector<std::string>& ids) const {
  ScenarioConfig out = *this;
  out.agents.clear();
  for (const auto& a : agents) {
    if (std::find(ids.begin(), ids.end(), a.id) != ids.end()) out.agents.push_back(a);
  }
  return out;
}

std::vector<std::string> ScenarioConfig::AgentIds(std::optional<Role> role) const {
  std::vector<std::string> ids;
  for (const auto& a : agents) {
    if (!role || a.role == *role) ids.push_back(a.id);
  }
  return ids;
}

ScenarioConfig DefaultScenario() {
  ScenarioConfig s;
  s.agents = {
      {"T1", Role::kVictim, RewardKind::kVictim, {188.0, 59.0}, {167.0, 75.7}, std::nullopt},
      {"T2", Role::kVictim, RewardKind::kVictim, {147.6, 62.6}, {191.2, 62.7}, std::nullopt},
      {"adversary", Role::kAdversary, RewardKind::kAdvOffroad, {170.5, 80.0}, {144.0, 59.0},
       std::nullopt},
  };
  return s;
}

ScenarioConfig CorridorScenario() {
  ScenarioConfig s;
  s.map_kind = "corridor";
  s.sim.max_steps = 200;
  s.agents = {{"T1", Role::kVictim, RewardKind::kVictim, {0.0, 0.0}, {30.0, 0.0}, std::nullopt}};
  return s;
}

const Polyline& WorldState::Route(const std::string& id) const {
  auto it = statics->routes.find(id);
  if (it == statics->routes.end()) throw ContractViolation("unknown agent id '" + id + "'");
  return it->second;
}

namespace {

template <typename T>
void AppendBytes(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

Polyline ResolveRoute(const MapGeometry& map, const AgentSpec& a, double tolerance) {
  if (a.route) return Polyline(*a.route);
  for (const auto& lane : map.lanes) {
    const auto& pts = lane.centerline.points();
    if ((pts.front() - a.spawn).Norm() <= tolerance && (pts.back() - a.goal).Norm() <= tolerance) {
      return lane.centerline;
    }
  }
  return Polyline({a.spawn, a.goal});
}

}  // namespace

std::string WorldState::Serialize() const {
  std::string out;
  AppendBytes(out, tick);
  for (const auto& [id, v] : vehicles) {
    out += id;
    out.push_back('\0');
    AppendBytes(out, v.position.x);
    AppendBytes(out, v.position.y);
    AppendBytes(out, v.heading);
    AppendBytes(out, v.speed);
    AppendBytes(out, v.goal.x);
    AppendBytes(out, v.goal.y);
    out.push_back(terminated.at(id) ? 1 : 0);
    out.push_back(reached_goal.at(id) ? 1 : 0);
  }
  std::ostringstream rng_state;
  rng_state << rng;
  out += rng_state.str();
  return out;
}

OrientedBox VehicleBox(const VehicleState& v, const VehicleParams& p) {
  return {v.position, v.heading, p.length, p.width};
}

WorldState MakeWorld(MapGeometry map, ScenarioConfig scenario,
                     std::map<std::string, Polyline> routes,
                     std::map<std::string, VehicleState> vehicles) {
  WorldState w;
  auto statics = std::make_shared<StaticWorld>();
  statics->map = std::move(map);
  statics->scenario = std::move(scenario);
  statics->routes = std::move(routes);
  w.statics = std::move(statics);
  w.vehicles = std::move(vehicles);
  for (const auto& [id, v] : w.vehicles) {
    w.terminated[id] = false;
    w.reached_goal[id] = false;
  }
  return w;
}

WorldState InitWorld(const ScenarioConfig& scenario, std::uint64_t seed) {
  if (scenario.agents.empty()) throw ConfigError("scenario has no agents");
  MapGeometry map = BuildMap(scenario.map_kind, scenario.lane_width);
  std::mt19937_64 rng(seed);

  std::map<std::string, Polyline> routes;
  std::map<std::string, VehicleState> vehicles;
  for (const auto& a : scenario.agents) {
    if (vehicles.count(a.id)) throw ConfigError("duplicate agent id '" + a.id + "'");
    Polyline route = ResolveRoute(map, a, scenario.sim.goal_tolerance);
    VehicleState v;
    v.position = a.spawn;
    if (scenario.sim.spawn_jitter > 0.0) {
      const double j = scenario.sim.spawn_jitter;
      v.position.x += (2.0 * UniformUnit(rng) - 1.0) * j;
      v.position.y += (2.0 * UniformUnit(rng) - 1.0) * j;
    }
    v.heading = NormalizeAngle(route.HeadingAt(route.Project(v.position).arc_length));
    v.speed = 0.0;
    v.goal = a.goal;
    if (!map.OnDrivable(v.position)) {
      throw ConfigError("spawn of agent '" + a.id + "' lies outside the drivable region");
    }
    routes.emplace(a.id, std::move(route));
    vehicles.emplace(a.id, v);
  }
  for (auto i = vehicles.begin(); i != vehicles.end(); ++i) {
    for (auto j = std::next(i); j != vehicles.end(); ++j) {
      if (Overlaps(VehicleBox(i->second, scenario.vehicle), VehicleBox(j->second, scenario.vehicle))) {
        throw ConfigError("spawns of agents '" + i->first + "' and '" + j->first + "' overlap");
      }
    }
  }
  WorldState w = MakeWorld(std::move(map), scenario, std::move(routes), std::move(vehicles));
  w.rng = rng;
  return w;
}

std::pair<bool, bool> OffroadFlags(const WorldState& world, const std::string& agent_id) {
  const VehicleState& v = world.vehicles.at(agent_id);
  const double lateral = world.Route(agent_id).Project(v.position).distance;
  const bool iol = lateral > world.map().lane_width / 2.0;
  const bool io = iol && world.map().InIntersection(v.position);
  return {io, iol};
}

double RemainingDistance(const WorldState& world, const std::string& agent_id) {
  const VehicleState& v = world.vehicles.at(agent_id);
  const double to_goal = (v.goal - v.position).Norm();
  if (to_goal <= world.statics->scenario.sim.goal_tolerance) return 0.0;
  const Polyline& route = world.Route(agent_id);
  const double along = route.Length() - route.Project(v.position).arc_length;
  // Past the end of the route the projection clamps; fall back to straight-line.
  return along > 0.0 ? along : to_goal;
}

std::map<std::string, StepFlags> InitialFlags(const WorldState& world) {
  std::map<std::string, StepFlags> flags;
  for (const auto& [id, v] : world.vehicles) {
    StepFlags f;
    f.forward_speed = v.speed;
    f.remaining_distance = RemainingDistance(world, id);
    flags[id] = f;
  }
  return flags;
}

namespace {

void ValidateAction(const std::string& id, const ActionCommand& a) {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(a.steer, -1.0, 1.0) || !in(a.throttle, 0.0, 1.0) || !in(a.brake, 0.0, 1.0)) {
    throw ContractViolation("action for agent '" + id + "' out of range");
  }
}

void Integrate(VehicleState& v, const ActionCommand& a, const VehicleParams& p, double dt) {
  const double accel = p.max_accel * a.throttle - p.max_brake * a.brake - p.drag * v.speed;
  v.speed = std::clamp(v.speed + accel * dt, 0.0, p.max_speed);
  v.heading = NormalizeAngle(v.heading +
                             (v.speed / p.wheelbase) * std::tan(a.steer * p.max_steer_rad) * dt);
  v.position = v.position + Vec2{std::cos(v.heading), std::sin(v.heading)} * (v.speed * dt);
}

}  // namespace

StepResult Step(const WorldState& world, const std::map<std::string, ActionCommand>& actions) {
  for (const auto& [id, a] : actions) {
    auto it = world.terminated.find(id);
    if (it == world.terminated.end()) {
      throw ContractViolation("action for unknown agent '" + id + "'");
    }
    if (it->second) throw ContractViolation("action for terminated agent '" + id + "'");
    ValidateAction(id, a);
  }
  for (const auto& [id, done] : world.terminated) {
    if (!done && !actions.count(id)) {
      throw ContractViolation("missing action for active agent '" + id + "'");
    }
  }

  const ScenarioConfig& scenario = world.statics->scenario;
  StepResult result{world, {}};
  WorldState& next = result.world;
  next.tick = world.tick + 1;

  std::vector<std::string> active;
  for (const auto& [id, a] : actions) {
    Integrate(next.vehicles.at(id), a, scenario.vehicle, scenario.sim.dt);
    active.push_back(id);
  }

  for (const auto& id : active) {
    StepFlags f;
    const VehicleState& v = next.vehicles.at(id);
    const OrientedBox box = VehicleBox(v, scenario.vehicle);
    // Terminated vehicles are out of play and are neither hit nor drawn.
    for (const auto& other : active) {
      if (other != id && Overlaps(box, VehicleBox(next.vehicles.at(other), scenario.vehicle))) {
        f.cv = true;
        break;
      }
    }
    f.co = !next.map().OnDrivable(v.position);
    std::tie(f.io, f.iol) = OffroadFlags(next, id);
    f.forward_speed = v.speed;
    f.remaining_distance = RemainingDistance(next, id);
    result.flags[id] = f;
  }
  for (const auto& id : active) {
    const StepFlags& f = result.flags[id];
    const bool goal = f.remaining_distance == 0.0;
    next.reached_goal[id] = goal;
    next.terminated[id] = f.cv || f.co || goal;
  }
  return result;
}

}  // namespace advdrive

#pragma once

// 2D driving world: T-intersection map, kinematic bicycle vehicles, and the
// per-tick collision / offroad / progress flags consumed by the rewards.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "advdrive/geometry.hpp"

namespace advdrive {

enum class Role { kVictim, kAdversary };
enum class RewardKind { kVictim, kAdvCollision, kAdvOffroad };

std::string ToString(Role role);
std::string ToString(RewardKind kind);
Role ParseRole(const std::string& s);
RewardKind ParseRewardKind(const std::string& s);

struct LaneSegment {
  std::string name;
  Polyline centerline;
  double lane_width = 3.5;
};

struct MapGeometry {
  std::string kind;
  double lane_width = 3.5;
  std::vector<LaneSegment> lanes;
  Polygon intersection_region;
  std::vector<Polygon> drivable;  // union of these
  std::vector<Polyline> markings;

  bool OnDrivable(Vec2 p) const;
  bool InIntersection(Vec2 p) const { return intersection_region.Contains(p); }
};

// Known map kinds: "t_intersection" (default) and "corridor".
MapGeometry BuildMap(const std::string& kind, double lane_width);

struct VehicleParams {
  double wheelbase = 2.7;
  double max_accel = 4.0;
  double max_brake = 8.0;
  double max_steer_rad = 35.0 * kPi / 180.0;
  double drag = 0.1;
  double max_speed = 15.0;
  double length = 4.5;
  double width = 2.0;
};

struct SimParams {
  double dt = 0.05;
  int max_steps = 500;
  double spawn_jitter = 0.0;  // uniform +/- meters, 0 disables
  double goal_tolerance = 1.0;
};

struct AgentSpec {
  std::string id;
  Role role = Role::kVictim;
  RewardKind reward_kind = RewardKind::kVictim;
  Vec2 spawn;
  Vec2 goal;
  std::optional<std::vector<Vec2>> route;  // defaults to the matching map lane
};

struct ScenarioConfig {
  std::string map_kind = "t_intersection";
  double lane_width = 3.5;
  std::vector<AgentSpec> agents;
  SimParams sim;
  VehicleParams vehicle;

  const AgentSpec& Agent(const std::string& id) const;
  // Copy restricted to the given agent ids, preserving order.
  ScenarioConfig Subset(const std::vector<std::string>& ids) const;
  std::vector<std::string> AgentIds(std::optional<Role> role = std::nullopt) const;
};

// Two victims and one adversary around the T-intersection.
ScenarioConfig DefaultScenario();
// One victim on a straight 30 m single-lane road.
ScenarioConfig CorridorScenario();

struct VehicleState {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  Vec2 goal;
};

struct ActionCommand {
  double steer = 0.0;     // [-1, 1]
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
};

struct StepFlags {
  bool cv = false;  // collision with a vehicle
  bool co = false;  // collision with a non-vehicle object (left the road)
  bool io = false;  // offroad inside the intersection
  bool iol = false; // outside the desired lane
  double forward_speed = 0.0;
  double remaining_distance = 0.0;
};

// Immutable parts of a world shared between ticks.
struct StaticWorld {
  MapGeometry map;
  ScenarioConfig scenario;
  std::map<std::string, Polyline> routes;
};

struct WorldState {
  std::int64_t tick = 0;
  std::map<std::string, VehicleState> vehicles;
  std::map<std::string, bool> terminated;
  std::map<std::string, bool> reached_goal;
  std::shared_ptr<const StaticWorld> statics;
  std::mt19937_64 rng;

  const MapGeometry& map() const { return statics->map; }
  const Polyline& Route(const std::string& id) const;
  bool Active(const std::string& id) const { return !terminated.at(id); }
  // Byte image of the dynamic state, for determinism checks.
  std::string Serialize() const;
};

struct StepResult {
  WorldState world;
  std::map<std::string, StepFlags> flags;
};

// Builds a world from a scenario; throws ConfigError on invalid spawns.
WorldState InitWorld(const ScenarioConfig& scenario, std::uint64_t seed);

// Assembles a world from explicit parts (used for synthetic layouts).
WorldState MakeWorld(MapGeometry map, ScenarioConfig scenario,
                     std::map<std::string, Polyline> routes,
                     std::map<std::string, VehicleState> vehicles);

// Advances every active vehicle by one tick. Throws ContractViolation when an
// action is missing for an active agent or given for a terminated/unknown one.
StepResult Step(const WorldState& world, const std::map<std::string, ActionCommand>& actions);

// Flags describing the state at tick 0 (no collisions, speed as spawned).
std::map<std::string, StepFlags> InitialFlags(const WorldState& world);

// (IO, IOL) for an agent at its current pose.
std::pair<bool, bool> OffroadFlags(const WorldState& world, const std::string& agent_id);

double RemainingDistance(const WorldState& world, const std::string& agent_id);

OrientedBox VehicleBox(const VehicleState& v, const VehicleParams& p);

}  // namespace advdrive

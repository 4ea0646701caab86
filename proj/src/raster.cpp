#include "advdrive/raster.hpp"

#include <algorithm>
#include <cmath>

#include "advdrive/errors.hpp"

namespace advdrive {

std::string ToString(ObsMode mode) { return mode == ObsMode::kFull84 ? "full84" : "lite21"; }

ObsMode ParseObsMode(const std::string& s) {
  if (s == "full84") return ObsMode::kFull84;
  if (s == "lite21") return ObsMode::kLite21;
  throw ConfigError("unknown obs mode '" + s + "'");
}

ObservationImage::ObservationImage()
    : levels_(static_cast<std::size_t>(kObsSize) * kObsSize * kObsChannels, 0) {}

Color ObservationImage::color(int row, int col) const {
  const std::size_t i = Index(row, col, 0);
  return {levels_[i], levels_[i + 1], levels_[i + 2]};
}

void ObservationImage::set(int row, int col, Color c) {
  const std::size_t i = Index(row, col, 0);
  levels_[i] = c[0];
  levels_[i + 1] = c[1];
  levels_[i + 2] = c[2];
}

std::vector<double> ObservationImage::ToDoubles() const {
  std::vector<double> out(levels_.size());
  std::transform(levels_.begin(), levels_.end(), out.begin(),
                 [](std::uint8_t l) { return l / 255.0; });
  return out;
}

std::size_t ObservationImage::CountColor(Color c) const {
  std::size_t n = 0;
  for (int r = 0; r < kObsSize; ++r) {
    for (int col = 0; col < kObsSize; ++col) {
      if (color(r, col) == c) ++n;
    }
  }
  return n;
}

std::string ObservationImage::ToPpm() const {
  std::string out = "P6\n84 84\n255\n";
  out.append(levels_.begin(), levels_.end());
  return out;
}

namespace {

// Ego frame: +forward is image-up, +left is toward column 0.
struct EgoFrame {
  Vec2 origin;
  double heading;

  Vec2 ToWorld(double forward, double left) const {
    return origin + Rotate({forward, left}, heading);
  }
  Vec2 ToEgo(Vec2 p) const { return Rotate(p - origin, -heading); }
};

// Axis-aligned pixel footprint in the ego frame.
struct Footprint {
  double forward;  // center
  double left;     // center
  double half_forward;
  double half_left;
};

bool FootprintHitsBox(const Footprint& px, const OrientedBox& ego_box) {
  const OrientedBox pixel{{px.forward, px.left}, 0.0, 2.0 * px.half_forward, 2.0 * px.half_left};
  return Overlaps(pixel, ego_box);
}

bool FootprintHitsDisc(const Footprint& px, Vec2 center, double radius) {
  const double df = std::max(std::abs(center.x - px.forward) - px.half_forward, 0.0);
  const double dl = std::max(std::abs(center.y - px.left) - px.half_left, 0.0);
  return df * df + dl * dl <= radius * radius;
}

OrientedBox ToEgoBox(const EgoFrame& frame, const VehicleState& v, const VehicleParams& p) {
  return {frame.ToEgo(v.position), NormalizeAngle(v.heading - frame.heading), p.length, p.width};
}

}  // namespace

ObservationImage Render(const WorldState& world, const std::string& agent_id,
                        const RasterConfig& cfg) {
  const VehicleState& self = world.vehicles.at(agent_id);
  const VehicleParams& vp = world.statics->scenario.vehicle;
  const MapGeometry& map = world.map();
  const EgoFrame frame{self.position, self.heading};

  const int block = cfg.mode == ObsMode::kLite21 ? 4 : 1;
  const int cells = kObsSize / block;
  const double row_m = cfg.MetersPerRow();
  const double col_m = cfg.MetersPerCol();
  const double half_forward = 0.5 * block * row_m;
  const double half_left = 0.5 * block * col_m;
  const double marking_reach = std::max(cfg.marking_half_width, std::min(half_forward, half_left));

  // Window bounds in the ego frame, padded by one vehicle diagonal.
  const double pad = std::hypot(vp.length, vp.width);
  const double ahead_max = (kAnchorRow + 0.5) * row_m + pad;
  const double behind_max = (kObsSize - kAnchorRow + 0.5) * row_m + pad;
  const double side_max = (kAnchorCol + 0.5) * col_m + pad;

  std::vector<OrientedBox> others;
  for (const auto& [id, v] : world.vehicles) {
    if (id == agent_id || world.terminated.at(id)) continue;
    const Vec2 e = frame.ToEgo(v.position);
    if (e.x > ahead_max || e.x < -behind_max || std::abs(e.y) > side_max) continue;
    others.push_back(ToEgoBox(frame, v, vp));
  }
  const OrientedBox own{{0.0, 0.0}, 0.0, vp.length, vp.width};
  const Vec2 goal = frame.ToEgo(self.goal);

  ObservationImage img;
  img.agent_id = agent_id;
  img.tick = world.tick;
  for (int cr = 0; cr < cells; ++cr) {
    for (int cc = 0; cc < cells; ++cc) {
      const double row_center = cr * block + 0.5 * (block - 1);
      const double col_center = cc * block + 0.5 * (block - 1);
      const Footprint px{(kAnchorRow - row_center) * row_m, (kAnchorCol - col_center) * col_m,
                         half_forward, half_left};
      const Vec2 world_pt = frame.ToWorld(px.forward, px.left);

      Color c = map.OnDrivable(world_pt) ? cfg.road : cfg.offroad;
      for (const auto& m : map.markings) {
        if (m.Project(world_pt).distance <= marking_reach) {
          c = cfg.marking;
          break;
        }
      }
      if (FootprintHitsDisc(px, goal, cfg.goal_radius)) c = cfg.goal_marker;
      for (const auto& box : others) {
        if (FootprintHitsBox(px, box)) {
          c = cfg.other_vehicle;
          break;
        }
      }
      if (FootprintHitsBox(px, own)) c = cfg.own_vehicle;

      for (int dr = 0; dr < block; ++dr) {
        for (int dc = 0; dc < block; ++dc) img.set(cr * block + dr, cc * block + dc, c);
      }
    }
  }
  return img;
}

}  // namespace advdrive

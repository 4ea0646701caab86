#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "advdrive/world.hpp"

namespace advdrive {

inline constexpr int kObsSize = 84;
inline constexpr int kObsChannels = 3;
inline constexpr int kAnchorRow = 70;
inline constexpr int kAnchorCol = 42;

enum class ObsMode { kFull84, kLite21 };

std::string ToString(ObsMode mode);
ObsMode ParseObsMode(const std::string& s);

// Pixel intensities are stored as 8-bit levels; value = level / 255.
using Color = std::array<std::uint8_t, 3>;

struct RasterConfig {
  double view_ahead = 40.0;  // meters from the anchor row to the top edge
  double view_side = 20.0;   // meters from the anchor column to each side
  Color offroad{30, 30, 30};
  Color road{110, 110, 110};
  Color marking{255, 255, 255};
  Color own_vehicle{0, 90, 255};
  Color other_vehicle{255, 40, 40};
  Color goal_marker{40, 220, 40};
  double goal_radius = 1.0;
  double marking_half_width = 0.15;
  ObsMode mode = ObsMode::kFull84;

  double MetersPerRow() const { return view_ahead / kAnchorRow; }
  double MetersPerCol() const { return view_side / kAnchorCol; }
};

class ObservationImage {
 public:
  ObservationImage();

  std::string agent_id;
  std::int64_t tick = 0;

  double at(int row, int col, int channel) const {
    return levels_[Index(row, col, channel)] / 255.0;
  }
  std::uint8_t level(int row, int col, int channel) const {
    return levels_[Index(row, col, channel)];
  }
  Color color(int row, int col) const;
  void set(int row, int col, Color c);

  int height() const { return kObsSize; }
  int width() const { return kObsSize; }
  const std::vector<std::uint8_t>& levels() const { return levels_; }
  // Row-major height x width x channel intensities in [0, 1].
  std::vector<double> ToDoubles() const;
  std::size_t CountColor(Color c) const;

  bool operator==(const ObservationImage& o) const { return levels_ == o.levels_; }

  // Binary portable pixmap (P6).
  std::string ToPpm() const;

 private:
  static std::size_t Index(int r, int c, int ch) {
    return (static_cast<std::size_t>(r) * kObsSize + c) * kObsChannels + ch;
  }
  std::vector<std::uint8_t> levels_;
};

// Egocentric bird's-eye render: the agent sits at (kAnchorRow, kAnchorCol)
// facing image-up. lite21 renders a 21x21 grid replicated 4x4.
ObservationImage Render(const WorldState& world, const std::string& agent_id,
                        const RasterConfig& cfg);

}  // namespace advdrive

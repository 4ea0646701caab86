#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace advdrive {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;

  double Dot(Vec2 o) const { return x * o.x + y * o.y; }
  double Cross(Vec2 o) const { return x * o.y - y * o.x; }
  double Norm() const { return std::hypot(x, y); }
};

// Wraps an angle into (-pi, pi].
double NormalizeAngle(double angle);

// Rotates `p` by `angle` radians about the origin.
Vec2 Rotate(Vec2 p, double angle);

// Simple polygon (closed implicitly, either winding).
struct Polygon {
  std::vector<Vec2> vertices;

  bool Contains(Vec2 p) const;
  static Polygon Box(double min_x, double min_y, double max_x, double max_y);
};

struct Projection {
  Vec2 point;          // closest point on the polyline
  double distance = 0; // Euclidean distance to it
  double arc_length = 0;
};

// Open polyline with cumulative arc lengths.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  const std::vector<Vec2>& points() const { return points_; }
  double Length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  bool empty() const { return points_.size() < 2; }

  // Closest point; on ties the earliest segment wins.
  Projection Project(Vec2 p) const;
  Vec2 PointAt(double arc_length) const;
  // Direction of travel (radians) of the segment containing `arc_length`.
  double HeadingAt(double arc_length) const;

 private:
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

// Rectangle of given length (along heading) and width centered at `center`.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> Corners() const;
};

// Separating-axis overlap test. Touching edges count as overlap.
bool Overlaps(const OrientedBox& a, const OrientedBox& b);

double DistanceToSegment(Vec2 p, Vec2 a, Vec2 b);

// Appends a circular arc (excluding its first point) to `out`.
void AppendArc(std::vector<Vec2>& out, Vec2 center, double radius,
               double start_angle, double end_angle, int segments);

}  // namespace advdrive

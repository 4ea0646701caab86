#include "advdrive/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace advdrive {

double NormalizeAngle(double angle) {
  angle = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (angle <= -kPi) angle += 2.0 * kPi;
  return angle;
}

Vec2 Rotate(Vec2 p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

bool Polygon::Contains(Vec2 p) const {
  bool inside = false;
  const std::size_t n = vertices.size();
  if (n < 3) return false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

Polygon Polygon::Box(double min_x, double min_y, double max_x, double max_y) {
  return Polygon{{{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y}}};
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.size() < 2) {
    throw std::invalid_argument("polyline needs at least two points");
  }
  cumulative_.reserve(points_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    cumulative_.push_back(cumulative_.back() + (points_[i] - points_[i - 1]).Norm());
  }
}

Projection Polyline::Project(Vec2 p) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Vec2 a = points_[i];
    const Vec2 ab = points_[i + 1] - a;
    const double len2 = ab.Dot(ab);
    double t = len2 > 0.0 ? (p - a).Dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = a + ab * t;
    const double d = (p - q).Norm();
    if (d < best.distance) {
      best.point = q;
      best.distance = d;
      best.arc_length = cumulative_[i] + t * (cumulative_[i + 1] - cumulative_[i]);
    }
  }
  return best;
}

namespace {

std::size_t SegmentIndex(const std::vector<double>& cumulative, double s) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
  std::size_t idx = it == cumulative.begin() ? 0 : static_cast<std::size_t>(it - cumulative.begin()) - 1;
  return std::min(idx, cumulative.size() - 2);
}

}  // namespace

Vec2 Polyline::PointAt(double arc_length) const {
  const double s = std::clamp(arc_length, 0.0, Length());
  const std::size_t i = SegmentIndex(cumulative_, s);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return points_[i] + (points_[i + 1] - points_[i]) * t;
}

double Polyline::HeadingAt(double arc_length) const {
  const double s = std::clamp(arc_length, 0.0, Length());
  const std::size_t i = SegmentIndex(cumulative_, s);
  const Vec2 d = points_[i + 1] - points_[i];
  return std::atan2(d.y, d.x);
}

std::array<Vec2, 4> OrientedBox::Corners() const {
  const Vec2 f{std::cos(heading) * length * 0.5, std::sin(heading) * length * 0.5};
  const Vec2 l{-std::sin(heading) * width * 0.5, std::cos(heading) * width * 0.5};
  return {center + f + l, center + f - l, center - f - l, center - f + l};
}

namespace {

bool SeparatedOnAxis(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b, Vec2 axis) {
  double a_min = std::numeric_limits<double>::infinity(), a_max = -a_min;
  double b_min = a_min, b_max = -a_min;
  for (const Vec2& p : a) {
    const double v = p.Dot(axis);
    a_min = std::min(a_min, v);
    a_max = std::max(a_max, v);
  }
  for (const Vec2& p : b) {
    const double v = p.Dot(axis);
    b_min = std::min(b_min, v);
    b_max = std::max(b_max, v);
  }
  return a_max < b_min || b_max < a_min;
}

}  // namespace

bool Overlaps(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.Corners();
  const auto cb = b.Corners();
  const Vec2 axes[4] = {
      {std::cos(a.heading), std::sin(a.heading)},
      {-std::sin(a.heading), std::cos(a.heading)},
      {std::cos(b.heading), std::sin(b.heading)},
      {-std::sin(b.heading), std::cos(b.heading)},
  };
  for (const Vec2& axis : axes) {
    if (SeparatedOnAxis(ca, cb, axis)) return false;
  }
  return true;
}

double DistanceToSegment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.Dot(ab);
  const double t = len2 > 0.0 ? std::clamp((p - a).Dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).Norm();
}

void AppendArc(std::vector<Vec2>& out, Vec2 center, double radius,
               double start_angle, double end_angle, int segments) {
  for (int i = 1; i <= segments; ++i) {
    const double a = start_angle + (end_angle - start_angle) * i / segments;
    out.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
  }
}

}  // namespace advdrive

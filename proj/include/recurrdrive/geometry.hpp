#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace rdn {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Vec2&) const = default;

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  // z-component of the 3D cross product; positive when `o` is counter-clockwise of *this.
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 unit_from_heading(double heading) { return {std::cos(heading), std::sin(heading)}; }

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// Wraps into [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

// Rectangle centred at `center`, `length` along the heading axis and `width` across it.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> corners() const;
  bool contains(const Vec2& p) const;
};

// Separating-axis overlap test. Touching boxes (zero-measure contact) do not overlap.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

// Proper or touching intersection of the closed segments [p1,p2] and [q1,q2].
bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2);

struct Projection {
  double s = 0.0;        // arc length of the closest point
  double lateral = 0.0;  // signed offset, positive to the left of the direction of travel
  double distance = 0.0;
  Vec2 point;
};

// Piecewise-linear curve parameterised by arc length.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  std::span<const Vec2> points() const { return points_; }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  Vec2 point_at(double s) const;
  double heading_at(double s) const;
  Projection project(const Vec2& p) const;

  // Resamples at (at most) `step` spacing, preserving the end points.
  Polyline resampled(double step) const;

 private:
  std::size_t segment_index(double s) const;

  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

}  // namespace rdn

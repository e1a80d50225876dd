#include "recurrdrive/geometry.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace rdn {

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 fwd = unit_from_heading(heading) * (0.5 * length);
  const Vec2 left = Vec2{-std::sin(heading), std::cos(heading)} * (0.5 * width);
  return {center + fwd + left, center + fwd - left, center - fwd - left, center - fwd + left};
}

bool OrientedBox::contains(const Vec2& p) const {
  const Vec2 d = p - center;
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  const double along = d.x * c + d.y * s;
  const double across = -d.x * s + d.y * c;
  return std::abs(along) <= 0.5 * length && std::abs(across) <= 0.5 * width;
}

namespace {

void project_onto(const std::array<Vec2, 4>& pts, const Vec2& axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const Vec2& p : pts) {
    const double v = p.dot(axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {unit_from_heading(a.heading),
                                    unit_from_heading(a.heading + std::numbers::pi / 2),
                                    unit_from_heading(b.heading),
                                    unit_from_heading(b.heading + std::numbers::pi / 2)};
  for (const Vec2& axis : axes) {
    double a_lo, a_hi, b_lo, b_hi;
    project_onto(ca, axis, a_lo, a_hi);
    project_onto(cb, axis, b_lo, b_hi);
    if (a_hi <= b_lo || b_hi <= a_lo) return false;
  }
  return true;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) { return (b - a).cross(c - a); };
  auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
  };
  const double d1 = orient(q1, q2, p1);
  const double d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1);
  const double d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw std::invalid_argument("polyline needs at least two points");
  cumulative_.resize(points_.size());
  cumulative_[0] = 0.0;
  for (std::size_t i = 1; i < points_.size(); ++i) {
    cumulative_[i] = cumulative_[i - 1] + distance(points_[i - 1], points_[i]);
  }
}

std::size_t Polyline::segment_index(double s) const {
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  return std::min(i, points_.size() - 2);
}

Vec2 Polyline::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  const std::size_t i = segment_index(s);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return points_[i] + (points_[i + 1] - points_[i]) * t;
}

double Polyline::heading_at(double s) const {
  const std::size_t i = segment_index(std::clamp(s, 0.0, length()));
  const Vec2 d = points_[i + 1] - points_[i];
  return std::atan2(d.y, d.x);
}

Projection Polyline::project(const Vec2& p) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Vec2 a = points_[i];
    const Vec2 d = points_[i + 1] - a;
    const double len2 = d.dot(d);
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = a + d * t;
    const double dist = distance(p, q);
    if (dist < best.distance) {
      best.distance = dist;
      best.point = q;
      best.s = cumulative_[i] + t * std::sqrt(len2);
      const double side = d.cross(p - a);
      best.lateral = side >= 0.0 ? dist : -dist;
    }
  }
  return best;
}

Polyline Polyline::resampled(double step) const {
  const double total = length();
  const int n = std::max(1, static_cast<int>(std::ceil(total / step - 1e-9)));
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) out.push_back(point_at(total * i / n));
  return Polyline(std::move(out));
}

}  // namespace rdn

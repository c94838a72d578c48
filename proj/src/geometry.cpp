#include "teleop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace teleop {

double normalize_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

Pose2D to_local(const Pose2D& frame, const Pose2D& global) {
  const double c = std::cos(frame.psi);
  const double s = std::sin(frame.psi);
  const double dx = global.x - frame.x;
  const double dy = global.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy, normalize_angle(global.psi - frame.psi)};
}

Pose2D to_global(const Pose2D& frame, const Pose2D& local) {
  const double c = std::cos(frame.psi);
  const double s = std::sin(frame.psi);
  return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y,
          normalize_angle(local.psi + frame.psi)};
}

Trajectory::Trajectory(std::vector<PathPoint> points) : points_(std::move(points)) {
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i].s > points_[i - 1].s)) {
      throw std::invalid_argument("trajectory arc length must be strictly increasing");
    }
  }
}

Pose2D Trajectory::pose_at(double s) const {
  if (points_.empty()) throw std::logic_error("pose_at on empty trajectory");
  if (points_.size() == 1 || s <= 0.0) {
    const auto& p = points_.front();
    return {p.x, p.y, normalize_angle(p.psi)};
  }
  if (s >= length()) {
    const auto& p = points_.back();
    return {p.x, p.y, normalize_angle(p.psi)};
  }
  auto it = std::upper_bound(points_.begin(), points_.end(), s,
                             [](double v, const PathPoint& p) { return v < p.s; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double w = (s - a.s) / (b.s - a.s);
  return {a.x + w * (b.x - a.x), a.y + w * (b.y - a.y),
          normalize_angle(a.psi + w * (b.psi - a.psi))};
}

PathProjection Trajectory::project(double x, double y) const {
  if (points_.empty()) throw std::logic_error("projection onto empty trajectory");
  return project_range(x, y, 0, points_.size() - 1);
}

PathProjection Trajectory::project_near(double x, double y, double hint_s, double back,
                                        double ahead) const {
  if (points_.empty()) throw std::logic_error("projection onto empty trajectory");
  auto lower = [&](double s) {
    auto it = std::lower_bound(points_.begin(), points_.end(), s,
                               [](const PathPoint& p, double v) { return p.s < v; });
    return static_cast<std::size_t>(it - points_.begin());
  };
  std::size_t first = lower(hint_s - back);
  if (first > 0) --first;
  std::size_t last = std::min(lower(hint_s + ahead), points_.size() - 1);
  if (last <= first) last = std::min(first + 1, points_.size() - 1);
  return project_range(x, y, first, last);
}

PathProjection Trajectory::project_range(double x, double y, std::size_t first,
                                         std::size_t last) const {
  PathProjection best;
  if (first == last) {
    const auto& p = points_[first];
    const double c = std::cos(p.psi), s = std::sin(p.psi);
    best.s = p.s;
    best.heading = p.psi;
    best.lateral = -s * (x - p.x) + c * (y - p.y);
    best.segment = first;
    return best;
  }
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = first; i < last; ++i) {
    const auto& a = points_[i];
    const auto& b = points_[i + 1];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    double w = len2 > 0.0 ? ((x - a.x) * ex + (y - a.y) * ey) / len2 : 0.0;
    w = std::clamp(w, 0.0, 1.0);
    const double fx = a.x + w * ex, fy = a.y + w * ey;
    const double d2 = (x - fx) * (x - fx) + (y - fy) * (y - fy);
    // strict comparison keeps the smaller arc length on ties
    if (d2 < best_d2) {
      best_d2 = d2;
      const double len = std::sqrt(len2);
      best.s = a.s + w * (b.s - a.s);
      best.heading = a.psi + w * (b.psi - a.psi);
      // offset from the segment line, so beyond the end caps it is measured
      // perpendicular to the end tangent
      if (len > 0.0) {
        best.lateral = (ex * (y - a.y) - ey * (x - a.x)) / len;
      } else {
        best.lateral = -std::sin(a.psi) * (x - a.x) + std::cos(a.psi) * (y - a.y);
      }
      best.segment = i;
    }
  }
  return best;
}

}  // namespace teleop

#pragma once

#include <cstddef>
#include <numbers>
#include <vector>

namespace teleop {

/// Wraps an angle to (-pi, pi].
double normalize_angle(double angle);

struct Pose2D {
  double x = 0.0;    // [m]
  double y = 0.0;    // [m]
  double psi = 0.0;  // heading [rad]
};

/// Expresses `global` in the frame whose origin and heading are given by `frame`.
Pose2D to_local(const Pose2D& frame, const Pose2D& global);
/// Inverse of to_local.
Pose2D to_global(const Pose2D& frame, const Pose2D& local);

struct PathPoint {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;  // unwrapped tangent heading [rad]
  double s = 0.0;    // arc length from the first point [m]
};

/// Result of projecting a point onto a polyline.
struct PathProjection {
  double s = 0.0;          // arc-length coordinate of the foot point
  double lateral = 0.0;    // signed distance, positive left of the tangent
  double heading = 0.0;    // path tangent heading at the foot point
  std::size_t segment = 0; // index of the segment start
};

/// Dense G1 polyline with arc length and heading at each vertex.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<PathPoint> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  double length() const { return points_.empty() ? 0.0 : points_.back().s; }
  const std::vector<PathPoint>& points() const { return points_; }

  /// Pose at arc length `s`, clamped to [0, length()].
  Pose2D pose_at(double s) const;

  /// Global nearest-segment projection. Ties go to the smaller arc length.
  PathProjection project(double x, double y) const;

  /// Nearest-segment projection restricted to arc lengths within
  /// [hint_s - back, hint_s + ahead].
  PathProjection project_near(double x, double y, double hint_s, double back,
                              double ahead) const;

 private:
  PathProjection project_range(double x, double y, std::size_t first,
                               std::size_t last) const;

  std::vector<PathPoint> points_;
};

}  // namespace teleop

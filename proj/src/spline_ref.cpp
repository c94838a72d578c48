#include "teleop/spline_ref.hpp"

#include <cmath>
#include <numbers>

namespace teleop::spline {

SplineCoeffs fit_spline(const Pose2D& ref_pose, double beta) {
  const double x = ref_pose.x;
  if (!(x > kMinTargetDistance)) {
    throw SplineFitError("target pose is not ahead of the vehicle");
  }
  if (!(std::abs(ref_pose.psi) < 0.5 * std::numbers::pi)) {
    throw SplineFitError("target heading outside (-pi/2, pi/2)");
  }
  if (!(std::abs(beta) < 0.5 * std::numbers::pi)) {
    throw SplineFitError("side slip outside (-pi/2, pi/2)");
  }
  // Rows y(0) and y'(0) fix D and C; the remaining 2x2 block has determinant -x^4.
  SplineCoeffs k;
  k.d = 0.0;
  k.c = std::tan(beta);
  const double r_pos = ref_pose.y - k.c * x;
  const double r_slope = std::tan(ref_pose.psi) - k.c;
  k.a = (x * r_slope - 2.0 * r_pos) / (x * x * x);
  k.b = (3.0 * r_pos - x * r_slope) / (x * x);
  return k;
}

std::pair<double, double> spline_errors(const SplineCoeffs& coeffs, const Pose2D& point) {
  return {coeffs.value(point.x) - point.y, std::atan(coeffs.slope(point.x)) - point.psi};
}

}  // namespace teleop::spline

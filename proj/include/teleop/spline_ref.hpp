#pragma once

// Cubic reference curve y = A x^3 + B x^2 + C x + D from the vehicle CG to a
// target pose expressed in the vehicle frame.

#include <stdexcept>
#include <utility>

#include "teleop/geometry.hpp"

namespace teleop::spline {

/// Targets closer than this along the vehicle x axis are rejected.
inline constexpr double kMinTargetDistance = 0.1;  // [m]

struct SplineCoeffs {
  double a = 0.0;  // [1/m^2]
  double b = 0.0;  // [1/m]
  double c = 0.0;  // [-]
  double d = 0.0;  // [m]

  double value(double x) const { return ((a * x + b) * x + c) * x + d; }
  double slope(double x) const { return (3.0 * a * x + 2.0 * b) * x + c; }
};

/// Raised when no usable cubic exists; callers hold their previous command.
class SplineFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cubic with y(0) = 0, y'(0) = tan(beta), y(x_ref) = y_ref, y'(x_ref) = tan(psi_ref).
SplineCoeffs fit_spline(const Pose2D& ref_pose, double beta);

/// Terminal residuals (lateral [m], heading [rad]) of a point against the cubic.
std::pair<double, double> spline_errors(const SplineCoeffs& coeffs, const Pose2D& point);

}  // namespace teleop::spline

#pragma once

// Operator-side and onboard controllers: Smith predictor feedback, the Stanley
// operator surrogate, the look-ahead pose selector and the PI cruise control.

#include <cstddef>
#include <deque>
#include <optional>

#include "teleop/geometry.hpp"
#include "teleop/vehicle_models.hpp"

namespace teleop::control {

using vehicle::VehicleParams;
using vehicle::VehicleState;

/// Steering actuator shared by every mode: rate and position limits.
struct ActuatorLimits {
  double steer_max = vehicle::kSteerMax;           // [rad]
  double steer_rate_max = vehicle::kSteerRateMax;  // [rad/s]

  void validate() const;
};

/// Steering rate that moves `current` towards `command` within one step of
/// `dt`, respecting both limits.
double limited_steer_rate(double current, double command, double dt, const ActuatorLimits& limits);

/// History of the local model output X'(t), sampled on the station clock.
class PredictorBuffer {
 public:
  explicit PredictorBuffer(std::size_t capacity);

  /// Timestamps must strictly increase; the oldest sample is dropped when full.
  void push(double t, const VehicleState& state);

  /// Linear interpolation; nullopt outside the stored time span.
  std::optional<VehicleState> sample(double t) const;

  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  double oldest_time() const;
  double newest_time() const;

 private:
  struct Sample {
    double t;
    VehicleState state;
  };
  std::size_t capacity_;
  std::deque<Sample> samples_;
};

struct SmithFeedback {
  VehicleState state;
  bool warming_up = false;  // buffer did not reach back far enough
};

/// X_p(t) = X'(t) - X'(t - tau1 - tau2) + delayed measurement, componentwise.
SmithFeedback smith_feedback(const PredictorBuffer& buffer, const VehicleState& delayed_measurement,
                             double t, double tau1, double tau2);

/// Local model P' of the Smith predictor: the lateral/yaw/position part of the
/// prediction model with zero acceleration and full adhesion. The steering
/// command sets the wheel angle directly (position limit only), so P' does not
/// know the vehicle's steer-rate limit. Its speed is re-anchored to each fresh
/// measurement.
class SmithLocalModel {
 public:
  SmithLocalModel(VehicleParams params, ActuatorLimits limits, VehicleState initial);

  void step(double steer_command, double dt);
  void reset_speed(double v) { state_.v = v; }
  const VehicleState& state() const { return state_; }

 private:
  VehicleParams params_;
  ActuatorLimits limits_;
  VehicleState state_;
};

struct StanleyConfig {
  double gain = 0.7;                       // k
  double steer_max = vehicle::kSteerMax;   // [rad]

  void validate() const;
};

/// delta = sat(psi_rel + atan(k e / max(0.01, V))).
double stanley_steer(double psi_rel, double e, double v, const StanleyConfig& config);

/// Heading error and front-axle cross-track error of a pose against the path.
struct StanleyErrors {
  double psi_rel = 0.0;  // path heading minus vehicle heading [rad]
  double e = 0.0;        // positive when the front axle is right of the path [m]
  double s = 0.0;        // arc length of the front-axle projection [m]
};
StanleyErrors stanley_errors(const Trajectory& path, const Pose2D& pose, double lf);

/// Stanley command for a pose on the path.
double stanley_command(const Trajectory& path, const Pose2D& pose, double v, double lf,
                       const StanleyConfig& config);

/// Pose on the path V (tau2 + tau1 + horizon) ahead of the projection of the
/// delayed pose, clamped to the path end. Throws on an empty path.
Pose2D lookahead_select(const Trajectory& path, const Pose2D& delayed_pose, double v, double tau2,
                        double tau1, double horizon);

/// Arc length at which lookahead_select picks its pose.
double lookahead_arc_length(const Trajectory& path, const Pose2D& delayed_pose, double v,
                            double tau2, double tau1, double horizon);

struct CruiseConfig {
  double kp = 800.0 / 1180.0;   // [1/s]
  double ki = 120.0 / 1180.0;   // [1/s^2]
  // back-calculation gain; 3 / kp keeps a step from rest free of overshoot
  double tracking_gain = 3.0 / (800.0 / 1180.0);
  double ff_offset = 0.0;       // steady-state acceleration at any speed [m/s^2]
  double ff_drag = 0.0;         // additional term proportional to V_Ref^2 [1/m]
  double accel_min = -4.0;
  double accel_max = 1.0;

  double feed_forward(double v_ref) const { return ff_offset + ff_drag * v_ref * v_ref; }
  void validate() const;
};

/// Feed-forward that holds a constant speed on the plant: the front rolling
/// loss not carried by the axle force law.
CruiseConfig default_cruise(const VehicleParams& params);

struct CruiseState {
  double integral = 0.0;  // integral of the speed error [m]
};

/// a = kp err + ki int(err) + FF(V_Ref) + extra_ff, saturated, with
/// back-calculation anti-windup on the integrator.
double pi_cruise(double v_ref, double v_measured, double dt, CruiseState& state,
                 const CruiseConfig& config, double extra_ff = 0.0);

/// Same law with explicit actuator limits for this call.
double pi_cruise(double v_ref, double v_measured, double dt, CruiseState& state,
                 const CruiseConfig& config, double extra_ff, double accel_min, double accel_max);

}  // namespace teleop::control

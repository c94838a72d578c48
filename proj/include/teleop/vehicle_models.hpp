#pragma once

// Single-track prediction model (nine states, steer-rate and acceleration
// inputs), the augmented plant used in closed loop, and the RK4 integrator.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "teleop/dual.hpp"
#include "teleop/geometry.hpp"

namespace teleop::vehicle {

inline constexpr int kNx = 9;
inline constexpr int kNu = 2;
inline constexpr double kSpeedGuard = 0.01;  // replaces V in denominators
inline constexpr double kDeg = std::numbers::pi / 180.0;
inline constexpr double kSteerMax = 25.0 * kDeg;
inline constexpr double kSteerRateMax = 10.0 * kDeg;

enum StateIndex : int { kBeta = 0, kYawRate, kPsi, kFyFront, kFyRear, kX, kY, kDelta, kV };
enum InputIndex : int { kSteerRate = 0, kAccel };

template <typename T>
using StateVec = std::array<T, kNx>;
template <typename T>
using InputVec = std::array<T, kNu>;

struct VehicleState {
  double beta = 0.0;      // side slip [rad]
  double yaw_rate = 0.0;  // [rad/s]
  double psi = 0.0;       // heading [rad], unwrapped
  double fy_front = 0.0;  // [N]
  double fy_rear = 0.0;   // [N]
  double x = 0.0;         // [m]
  double y = 0.0;         // [m]
  double delta = 0.0;     // steering angle [rad]
  double v = 0.0;         // longitudinal speed [m/s]

  StateVec<double> to_array() const {
    return {beta, yaw_rate, psi, fy_front, fy_rear, x, y, delta, v};
  }
  static VehicleState from_array(const StateVec<double>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]};
  }
  Pose2D pose() const { return {x, y, psi}; }
};

struct ControlInput {
  double steer_rate = 0.0;  // [rad/s]
  double accel = 0.0;       // [m/s^2]

  InputVec<double> to_array() const { return {steer_rate, accel}; }
};

/// Single-track parameters; defaults reproduce the reference vehicle.
struct VehicleParams {
  double mass = 1180.0;              // m [kg]
  double yaw_inertia = 2066.0;       // I_Z [kg m^2]
  double lf = 1.515;                 // CG to front axle [m]
  double lr = 1.504;                 // CG to rear axle [m]
  double c_alpha_front = 46000.0;    // [N/rad]
  double c_alpha_rear = 46000.0;     // [N/rad]
  double relaxation_length = 0.3;    // lambda [m]
  double brake_bias = 0.6;           // gamma, front share of braking
  double c_aero = 0.4;               // [N/(m^2/s^2)]
  double rolling_resistance = 0.025; // f_V
  double gravity = 9.81;             // [m/s^2]

  double wheelbase() const { return lf + lr; }
  double mass_front() const { return mass * lr / (lf + lr); }
  double mass_rear() const { return mass * lf / (lf + lr); }
  void validate() const;
};

VehicleParams load_vehicle_params(const std::string& path);
void save_vehicle_params(const VehicleParams& params, const std::string& path);

struct Disturbance {
  double mu_road = 1.0;       // road adhesion
  double wind_speed = 0.0;    // [m/s]
  double wind_bearing = 0.0;  // direction the wind blows towards [rad]

  void validate() const;
};

/// Settings of the augmented plant that stand in for unpublished vehicle data.
struct PlantConfig {
  double tire_knee = 0.5;         // fraction of capacity where the tire leaves its linear range
  double air_density = 1.225;     // [kg/m^3]
  double side_area = 2.0;         // C_side * A_side [m^2]
  double resistance_fade_speed = 0.1;  // below this speed resistances fade out [m/s]
};

struct PlantState {
  VehicleState vehicle;
  double fx_front = 0.0;  // last applied longitudinal force [N]
  double fx_rear = 0.0;
};

// ---------------------------------------------------------------------------
// Model pieces, templated on the scalar so the NMPC can differentiate them.

template <typename T>
T speed_guard(const T& v) {
  return value_of(v) < kSpeedGuard ? T(kSpeedGuard) : v;
}

/// Width of the acceleration band below zero in which the axle forces move
/// from the traction law to the braking law.
inline constexpr double kBrakeBlend = 1.0;  // [m/s^2]

/// Front/rear longitudinal axle forces for commanded acceleration `a`. The two
/// laws disagree at a = 0, so a cubic smoothstep over [-kBrakeBlend, 0] joins
/// them; outside that band each law applies exactly.
template <typename T>
std::pair<T, T> longitudinal_forces(const T& v, const T& a, const VehicleParams& p) {
  const double g = p.gravity;
  const T traction_front = p.mass * a + p.rolling_resistance * p.mass_rear() * g + p.c_aero * v * v;
  const T traction_rear = T(-p.rolling_resistance * p.mass_rear() * g);
  if (value_of(a) >= 0.0) return {traction_front, traction_rear};
  const T total = p.mass * a + p.rolling_resistance * p.mass * g + p.c_aero * v * v;
  const T brake_front = p.brake_bias * total;
  const T brake_rear = (1.0 - p.brake_bias) * total;
  if (value_of(a) <= -kBrakeBlend) return {brake_front, brake_rear};
  const T t = (a + kBrakeBlend) / kBrakeBlend;
  const T w = t * t * (3.0 - 2.0 * t);
  return {w * traction_front + (1.0 - w) * brake_front, w * traction_rear + (1.0 - w) * brake_rear};
}

/// Cornering stiffness reduction sqrt(1 - (F_x / (mu m_axle g))^2); zero once
/// the longitudinal force uses the whole friction budget.
template <typename T>
T stiffness_reduction_factor(const T& fx, double axle_mass, double mu, double gravity) {
  const T ratio = fx / (mu * axle_mass * gravity);
  const T radicand = 1.0 - ratio * ratio;
  if (value_of(radicand) <= 0.0) return T(0.0);
  using std::sqrt;
  return sqrt(radicand);
}

struct StiffnessReduction {
  double zeta = 1.0;
  bool saturated = false;
};

StiffnessReduction stiffness_reduction(double fx, double axle_mass, double mu_cons,
                                       double gravity = 9.81);

template <typename T>
std::pair<T, T> slip_angles(const T& beta, const T& yaw_rate, const T& delta, const T& v,
                            const VehicleParams& p) {
  using std::atan;
  using std::tan;
  const T vg = speed_guard(v);
  return {atan(tan(delta) - beta - yaw_rate * p.lf / vg), atan(-beta + yaw_rate * p.lr / vg)};
}

/// Prediction model right-hand side.
template <typename T>
StateVec<T> prediction_rhs(const StateVec<T>& x, const InputVec<T>& u, const VehicleParams& p,
                           double mu_cons) {
  using std::cos;
  using std::sin;
  const T& beta = x[kBeta];
  const T& r = x[kYawRate];
  const T& delta = x[kDelta];
  const T& v = x[kV];
  const T& a = u[kAccel];
  const T vg = speed_guard(v);

  const auto [fx_f, fx_r] = longitudinal_forces(v, a, p);
  const T zeta_f = stiffness_reduction_factor(fx_f, p.mass_front(), mu_cons, p.gravity);
  const T zeta_r = stiffness_reduction_factor(fx_r, p.mass_rear(), mu_cons, p.gravity);
  const auto [alpha_f, alpha_r] = slip_angles(beta, r, delta, v, p);

  const T front_lat = x[kFyFront] * cos(delta) + fx_f * sin(delta);
  StateVec<T> dx;
  dx[kBeta] = (front_lat + x[kFyRear]) / (p.mass * vg) - beta * a / vg - r;
  dx[kYawRate] = (front_lat * p.lf - x[kFyRear] * p.lr) / p.yaw_inertia;
  dx[kPsi] = r;
  dx[kFyFront] = v / p.relaxation_length * (zeta_f * p.c_alpha_front * alpha_f - x[kFyFront]);
  dx[kFyRear] = v / p.relaxation_length * (zeta_r * p.c_alpha_rear * alpha_r - x[kFyRear]);
  dx[kX] = v * cos(x[kPsi] + beta);
  dx[kY] = v * sin(x[kPsi] + beta);
  dx[kDelta] = u[kSteerRate];
  dx[kV] = a;
  return dx;
}

/// Friction-ellipse utilization ||(zeta C_alpha alpha, F_x)|| / (m_axle g) per axle.
template <typename T>
std::pair<T, T> friction_utilization(const StateVec<T>& x, const InputVec<T>& u,
                                     const VehicleParams& p, double mu_cons) {
  using std::sqrt;
  const auto [fx_f, fx_r] = longitudinal_forces(x[kV], u[kAccel], p);
  const T zeta_f = stiffness_reduction_factor(fx_f, p.mass_front(), mu_cons, p.gravity);
  const T zeta_r = stiffness_reduction_factor(fx_r, p.mass_rear(), mu_cons, p.gravity);
  const auto [alpha_f, alpha_r] = slip_angles(x[kBeta], x[kYawRate], x[kDelta], x[kV], p);
  const T fy_f = zeta_f * p.c_alpha_front * alpha_f;
  const T fy_r = zeta_r * p.c_alpha_rear * alpha_r;
  // the 1e-9 N^2 floor keeps the derivative finite at the origin
  const T norm_f = sqrt(fy_f * fy_f + fx_f * fx_f + 1e-9);
  const T norm_r = sqrt(fy_r * fy_r + fx_r * fx_r + 1e-9);
  return {norm_f / (p.mass_front() * p.gravity), norm_r / (p.mass_rear() * p.gravity)};
}

VehicleState prediction_dynamics(const VehicleState& state, const ControlInput& input,
                                 const VehicleParams& params, double mu_cons);

/// Lateral tire force law of the plant: linear up to `knee * capacity`, then a
/// tanh blend with unit slope at the knee that approaches `capacity`.
double saturate_tire_force(double linear_force, double capacity, double knee);

/// Lateral wind force [N], positive to the vehicle's left.
double crosswind_force(double heading, const Disturbance& dist, const PlantConfig& config);

StateVec<double> plant_dynamics(const PlantState& state, const ControlInput& input,
                                const VehicleParams& params, const Disturbance& dist,
                                const PlantConfig& config = {});

/// Classical fourth-order Runge-Kutta step of dx/dt = f(x, u).
template <typename T, std::size_t N, typename U, typename F>
std::array<T, N> rk4_step(F&& f, const std::array<T, N>& x, const U& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4 step needs dt > 0");
  auto axpy = [](const std::array<T, N>& base, double h, const std::array<T, N>& k) {
    std::array<T, N> r = base;
    for (std::size_t i = 0; i < N; ++i) r[i] = base[i] + h * k[i];
    return r;
  };
  auto check = [](const std::array<T, N>& k, int stage) {
    for (std::size_t i = 0; i < N; ++i) {
      if (!std::isfinite(value_of(k[i]))) {
        throw std::runtime_error("rk4: non-finite derivative in stage " + std::to_string(stage) +
                                 ", component " + std::to_string(i));
      }
    }
  };
  const auto k1 = f(x, u);
  check(k1, 1);
  const auto k2 = f(axpy(x, 0.5 * dt, k1), u);
  check(k2, 2);
  const auto k3 = f(axpy(x, 0.5 * dt, k2), u);
  check(k3, 3);
  const auto k4 = f(axpy(x, dt, k3), u);
  check(k4, 4);
  std::array<T, N> out = x;
  for (std::size_t i = 0; i < N; ++i) {
    out[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

/// One RK4 step of the prediction model.
VehicleState predict_step(const VehicleState& state, const ControlInput& input,
                          const VehicleParams& params, double mu_cons, double dt);

/// One RK4 step of the plant; clamps V >= 0 and refreshes the force memory.
PlantState plant_step(const PlantState& state, const ControlInput& input,
                      const VehicleParams& params, const Disturbance& dist,
                      const PlantConfig& config, double dt);

}  // namespace teleop::vehicle

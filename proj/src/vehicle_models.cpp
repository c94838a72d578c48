#include "teleop/vehicle_models.hpp"

#include <fstream>

#include "json.hpp"

namespace teleop::vehicle {

void VehicleParams::validate() const {
  const double positive[] = {mass, yaw_inertia, lf, lr, c_alpha_front, c_alpha_rear,
                             relaxation_length, c_aero, rolling_resistance, gravity};
  for (double v : positive) {
    if (!(v > 0.0)) throw std::invalid_argument("vehicle parameters must be positive");
  }
  if (!(brake_bias >= 0.0 && brake_bias <= 1.0)) {
    throw std::invalid_argument("brake bias must lie in [0, 1]");
  }
}

VehicleParams load_vehicle_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vehicle parameter file " + path);
  const auto j = nlohmann::json::parse(in);
  VehicleParams p;
  p.mass = j.value("m", p.mass);
  p.yaw_inertia = j.value("I_Z", p.yaw_inertia);
  p.lf = j.value("l_F", p.lf);
  p.lr = j.value("l_R", p.lr);
  p.c_alpha_front = j.value("C_alpha_F", p.c_alpha_front);
  p.c_alpha_rear = j.value("C_alpha_R", p.c_alpha_rear);
  p.relaxation_length = j.value("lambda", p.relaxation_length);
  p.brake_bias = j.value("gamma", p.brake_bias);
  p.c_aero = j.value("C_Aero", p.c_aero);
  p.rolling_resistance = j.value("f_V", p.rolling_resistance);
  p.gravity = j.value("g", p.gravity);
  p.validate();
  return p;
}

void save_vehicle_params(const VehicleParams& p, const std::string& path) {
  nlohmann::ordered_json j;
  j["m"] = p.mass;
  j["I_Z"] = p.yaw_inertia;
  j["l_F"] = p.lf;
  j["l_R"] = p.lr;
  j["C_alpha_F"] = p.c_alpha_front;
  j["C_alpha_R"] = p.c_alpha_rear;
  j["lambda"] = p.relaxation_length;
  j["gamma"] = p.brake_bias;
  j["C_Aero"] = p.c_aero;
  j["f_V"] = p.rolling_resistance;
  j["g"] = p.gravity;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vehicle parameter file " + path);
  out << j.dump(2) << '\n';
}

void Disturbance::validate() const {
  if (!(mu_road > 0.0 && mu_road <= 1.2)) throw std::invalid_argument("mu_road must be in (0, 1.2]");
  if (!(wind_speed >= 0.0)) throw std::invalid_argument("wind speed must be >= 0");
}

StiffnessReduction stiffness_reduction(double fx, double axle_mass, double mu_cons,
                                       double gravity) {
  const double ratio = fx / (mu_cons * axle_mass * gravity);
  const double radicand = 1.0 - ratio * ratio;
  if (radicand <= 0.0) return {0.0, true};
  return {std::sqrt(radicand), false};
}

VehicleState prediction_dynamics(const VehicleState& state, const ControlInput& input,
                                 const VehicleParams& params, double mu_cons) {
  return VehicleState::from_array(
      prediction_rhs<double>(state.to_array(), input.to_array(), params, mu_cons));
}

double saturate_tire_force(double linear_force, double capacity, double knee) {
  if (!(capacity > 0.0)) return 0.0;
  const double magnitude = std::abs(linear_force);
  const double linear_limit = knee * capacity;
  if (magnitude <= linear_limit) return linear_force;
  const double span = (1.0 - knee) * capacity;
  const double saturated = linear_limit + span * std::tanh((magnitude - linear_limit) / span);
  return std::copysign(saturated, linear_force);
}

double crosswind_force(double heading, const Disturbance& dist, const PlantConfig& config) {
  const double v_perp = dist.wind_speed * std::sin(dist.wind_bearing - heading);
  return 0.5 * config.air_density * config.side_area * v_perp * std::abs(v_perp);
}

StateVec<double> plant_dynamics(const PlantState& state, const ControlInput& input,
                                const VehicleParams& p, const Disturbance& dist,
                                const PlantConfig& config) {
  const VehicleState& s = state.vehicle;
  const double g = p.gravity;
  const double vg = speed_guard(s.v);
  const double a = input.accel;

  auto [fx_f, fx_r] = longitudinal_forces(s.v, a, p);
  const double cap_f = dist.mu_road * p.mass_front() * g;
  const double cap_r = dist.mu_road * p.mass_rear() * g;
  fx_f = std::clamp(fx_f, -cap_f, cap_f);
  fx_r = std::clamp(fx_r, -cap_r, cap_r);
  const double zeta_f = stiffness_reduction_factor(fx_f, p.mass_front(), dist.mu_road, g);
  const double zeta_r = stiffness_reduction_factor(fx_r, p.mass_rear(), dist.mu_road, g);
  const auto [alpha_f, alpha_r] = slip_angles(s.beta, s.yaw_rate, s.delta, s.v, p);
  const double target_f =
      saturate_tire_force(zeta_f * p.c_alpha_front * alpha_f, zeta_f * cap_f, config.tire_knee);
  const double target_r =
      saturate_tire_force(zeta_r * p.c_alpha_rear * alpha_r, zeta_r * cap_r, config.tire_knee);
  const double wind = crosswind_force(s.psi, dist, config);

  const double front_lat = s.fy_front * std::cos(s.delta) + fx_f * std::sin(s.delta);
  StateVec<double> dx;
  dx[kBeta] = (front_lat + s.fy_rear + wind) / (p.mass * vg) - s.beta * a / vg - s.yaw_rate;
  dx[kYawRate] = (front_lat * p.lf - s.fy_rear * p.lr) / p.yaw_inertia;
  dx[kPsi] = s.yaw_rate;
  dx[kFyFront] = s.v / p.relaxation_length * (target_f - s.fy_front);
  dx[kFyRear] = s.v / p.relaxation_length * (target_r - s.fy_rear);
  dx[kX] = s.v * std::cos(s.psi + s.beta);
  dx[kY] = s.v * std::sin(s.psi + s.beta);
  dx[kDelta] = input.steer_rate;

  // The axle forces already carry drag and the rear rolling loss; the body
  // additionally loses drag and the front rolling resistance.
  const double fade = std::clamp(s.v / config.resistance_fade_speed, 0.0, 1.0);
  const double resist =
      (p.c_aero * s.v * s.v + p.rolling_resistance * p.mass_front() * g) * fade;
  double dv = (fx_f * std::cos(s.delta) - s.fy_front * std::sin(s.delta) + fx_r - resist) / p.mass;
  if (s.v <= 0.0 && dv < 0.0) dv = 0.0;
  dx[kV] = dv;
  return dx;
}

VehicleState predict_step(const VehicleState& state, const ControlInput& input,
                          const VehicleParams& params, double mu_cons, double dt) {
  auto f = [&](const StateVec<double>& x, const InputVec<double>& u) {
    return prediction_rhs<double>(x, u, params, mu_cons);
  };
  return VehicleState::from_array(rk4_step(f, state.to_array(), input.to_array(), dt));
}

PlantState plant_step(const PlantState& state, const ControlInput& input,
                      const VehicleParams& params, const Disturbance& dist,
                      const PlantConfig& config, double dt) {
  auto f = [&](const StateVec<double>& x, const ControlInput& u) {
    PlantState ps = state;
    ps.vehicle = VehicleState::from_array(x);
    return plant_dynamics(ps, u, params, dist, config);
  };
  PlantState next = state;
  next.vehicle = VehicleState::from_array(rk4_step(f, state.vehicle.to_array(), input, dt));
  next.vehicle.v = std::max(0.0, next.vehicle.v);
  auto [fx_f, fx_r] = longitudinal_forces(next.vehicle.v, input.accel, params);
  const double cap_f = dist.mu_road * params.mass_front() * params.gravity;
  const double cap_r = dist.mu_road * params.mass_rear() * params.gravity;
  next.fx_front = std::clamp(fx_f, -cap_f, cap_f);
  next.fx_rear = std::clamp(fx_r, -cap_r, cap_r);
  return next;
}

}  // namespace teleop::vehicle

#include "teleop/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace teleop::control {

void ActuatorLimits::validate() const {
  if (!(steer_max > 0.0) || !(steer_rate_max > 0.0)) {
    throw std::invalid_argument("actuator limits must be positive");
  }
}

double limited_steer_rate(double current, double command, double dt, const ActuatorLimits& lim) {
  if (!(dt > 0.0)) throw std::invalid_argument("limited_steer_rate needs dt > 0");
  const double target = std::clamp(command, -lim.steer_max, lim.steer_max);
  return std::clamp((target - current) / dt, -lim.steer_rate_max, lim.steer_rate_max);
}

PredictorBuffer::PredictorBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 2) throw std::invalid_argument("predictor buffer needs capacity >= 2");
}

void PredictorBuffer::push(double t, const VehicleState& state) {
  if (!samples_.empty() && !(t > samples_.back().t)) {
    throw std::invalid_argument("predictor buffer timestamps must increase");
  }
  if (samples_.size() == capacity_) samples_.pop_front();
  samples_.push_back({t, state});
}

double PredictorBuffer::oldest_time() const {
  if (samples_.empty()) throw std::logic_error("predictor buffer is empty");
  return samples_.front().t;
}

double PredictorBuffer::newest_time() const {
  if (samples_.empty()) throw std::logic_error("predictor buffer is empty");
  return samples_.back().t;
}

std::optional<VehicleState> PredictorBuffer::sample(double t) const {
  // 1 ns slack absorbs round-off of t - tau1 - tau2 on the tick grid
  constexpr double eps = 1e-9;
  if (samples_.empty() || t < samples_.front().t - eps || t > samples_.back().t + eps) {
    return std::nullopt;
  }
  auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                             [](const Sample& s, double v) { return s.t < v; });
  if (it == samples_.end()) return samples_.back().state;
  if (std::abs(it->t - t) <= eps || it == samples_.begin()) return it->state;
  const Sample& hi = *it;
  const Sample& lo = *(it - 1);
  if (std::abs(lo.t - t) <= eps) return lo.state;
  const double w = (t - lo.t) / (hi.t - lo.t);
  const auto a = lo.state.to_array();
  const auto b = hi.state.to_array();
  vehicle::StateVec<double> r;
  for (int i = 0; i < vehicle::kNx; ++i) r[i] = a[i] + w * (b[i] - a[i]);
  return VehicleState::from_array(r);
}

SmithFeedback smith_feedback(const PredictorBuffer& buffer, const VehicleState& measurement,
                             double t, double tau1, double tau2) {
  const auto now = buffer.sample(t);
  const auto past = buffer.sample(t - tau1 - tau2);
  if (!now || !past) return {measurement, true};
  const auto xn = now->to_array();
  const auto xp = past->to_array();
  const auto xm = measurement.to_array();
  vehicle::StateVec<double> r;
  for (int i = 0; i < vehicle::kNx; ++i) r[i] = xn[i] - xp[i] + xm[i];
  return {VehicleState::from_array(r), false};
}

SmithLocalModel::SmithLocalModel(VehicleParams params, ActuatorLimits limits, VehicleState initial)
    : params_(params), limits_(limits), state_(initial) {}

void SmithLocalModel::step(double steer_command, double dt) {
  // the command acts on the road wheels directly: P' carries no steering actuator
  state_.delta = std::clamp(steer_command, -limits_.steer_max, limits_.steer_max);
  state_ = vehicle::predict_step(state_, vehicle::ControlInput{0.0, 0.0}, params_, 1.0, dt);
}

void StanleyConfig::validate() const {
  if (!(gain > 0.0)) throw std::invalid_argument("Stanley gain must be positive");
  if (!(steer_max > 0.0)) throw std::invalid_argument("Stanley steer limit must be positive");
}

double stanley_steer(double psi_rel, double e, double v, const StanleyConfig& cfg) {
  const double raw = psi_rel + std::atan(cfg.gain * e / std::max(vehicle::kSpeedGuard, v));
  return std::clamp(raw, -cfg.steer_max, cfg.steer_max);
}

StanleyErrors stanley_errors(const Trajectory& path, const Pose2D& pose, double lf) {
  if (path.empty()) throw std::invalid_argument("empty reference path");
  const double fx = pose.x + lf * std::cos(pose.psi);
  const double fy = pose.y + lf * std::sin(pose.psi);
  const PathProjection p = path.project(fx, fy);
  return {normalize_angle(p.heading - pose.psi), -p.lateral, p.s};
}

double stanley_command(const Trajectory& path, const Pose2D& pose, double v, double lf,
                       const StanleyConfig& config) {
  const StanleyErrors err = stanley_errors(path, pose, lf);
  return stanley_steer(err.psi_rel, err.e, v, config);
}

double lookahead_arc_length(const Trajectory& path, const Pose2D& delayed_pose, double v,
                            double tau2, double tau1, double horizon) {
  if (path.empty()) throw std::invalid_argument("empty reference path");
  const PathProjection p = path.project(delayed_pose.x, delayed_pose.y);
  const double ahead = std::max(0.0, v) * (tau2 + tau1 + horizon);
  return std::min(p.s + ahead, path.length());
}

Pose2D lookahead_select(const Trajectory& path, const Pose2D& delayed_pose, double v, double tau2,
                        double tau1, double horizon) {
  return path.pose_at(lookahead_arc_length(path, delayed_pose, v, tau2, tau1, horizon));
}

void CruiseConfig::validate() const {
  if (kp < 0.0 || ki < 0.0 || tracking_gain < 0.0) {
    throw std::invalid_argument("cruise gains must be non-negative");
  }
  if (!(accel_min < accel_max)) throw std::invalid_argument("cruise limits are inverted");
}

CruiseConfig default_cruise(const VehicleParams& p) {
  CruiseConfig c;
  c.kp = 800.0 / p.mass;
  c.ki = 120.0 / p.mass;
  c.tracking_gain = 3.0 / c.kp;
  c.ff_offset = p.rolling_resistance * p.mass_front() * p.gravity / p.mass;
  return c;
}

double pi_cruise(double v_ref, double v, double dt, CruiseState& state, const CruiseConfig& cfg,
                 double extra_ff, double accel_min, double accel_max) {
  if (!(dt > 0.0)) throw std::invalid_argument("pi_cruise needs dt > 0");
  const double err = v_ref - v;
  const double unsat =
      cfg.kp * err + cfg.ki * state.integral + cfg.feed_forward(v_ref) + extra_ff;
  const double sat = std::clamp(unsat, accel_min, accel_max);
  state.integral += dt * (err + cfg.tracking_gain * (sat - unsat));
  return sat;
}

double pi_cruise(double v_ref, double v, double dt, CruiseState& state, const CruiseConfig& cfg,
                 double extra_ff) {
  return pi_cruise(v_ref, v, dt, state, cfg, extra_ff, cfg.accel_min, cfg.accel_max);
}

}  // namespace teleop::control

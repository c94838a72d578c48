#include "teleop/nmpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "teleop/dual.hpp"

namespace teleop::nmpc {

namespace {

constexpr int NZ = NX + NU;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSnapTol = 1e-7;

using vehicle::kDelta;
using vehicle::kPsi;
using vehicle::kV;
using vehicle::kX;
using vehicle::kY;

struct Iterate {
  std::vector<Vec9> x;
  std::vector<Vec2> u;
};

// Bounds of one shooting node in absolute variables.
struct NodeBounds {
  Vec9 x_lo = Vec9::Constant(-kInf), x_hi = Vec9::Constant(kInf);
  Vec2 u_lo, u_hi;
};

NodeBounds node_bounds(const OcpProblem& pb) {
  NodeBounds b;
  b.x_lo[kDelta] = -pb.steer_max;
  b.x_hi[kDelta] = pb.steer_max;
  b.x_lo[kV] = pb.speed_min;
  b.u_lo << -pb.steer_rate_max, pb.accel_min;
  b.u_hi << pb.steer_rate_max, pb.accel_max;
  return b;
}

// Residual vector of the least-squares objective at one stage:
// [sqrt(R) u; sqrt(Q)(V_ref - V); sqrt(w) max(0, util - mu)].
using StageResidual = Eigen::Matrix<double, 5, 1>;
using StageJacobian = Eigen::Matrix<double, 5, NZ>;

struct Evaluation {
  double half_cost = 0.0;  // 1/2 sum of squared residuals incl. penalty
  double defect_l1 = 0.0;  // weighted by the merit penalties when given
  double defect_max = 0.0;
  bool finite = true;
};

class Problem {
 public:
  Problem(const OcpProblem& pb, double weight) : pb_(pb), weight_(weight) {
    sqrt_r_ << std::sqrt(pb.penalties.steer_rate), std::sqrt(pb.penalties.accel);
    sqrt_q_ = std::sqrt(pb.penalties.speed);
    sqrt_p_ << std::sqrt(pb.penalties.lateral), std::sqrt(pb.penalties.heading);
  }

  void set_weight(double w) { weight_ = w; }
  double weight() const { return weight_; }

  StageResidual stage_residual(const Vec9& x, const Vec2& u, StageJacobian* jac) const {
    StageResidual r = StageResidual::Zero();
    r[0] = sqrt_r_[0] * u[0];
    r[1] = sqrt_r_[1] * u[1];
    r[2] = sqrt_q_ * (pb_.v_ref - x[kV]);
    const double sw = std::sqrt(weight_);
    if (jac) {
      jac->setZero();
      (*jac)(0, NX + 0) = sqrt_r_[0];
      (*jac)(1, NX + 1) = sqrt_r_[1];
      (*jac)(2, kV) = -sqrt_q_;
      const FrictionLinearization fr = linearize_friction(x, u, pb_.params, pb_.mu_cons);
      for (int a = 0; a < 2; ++a) {
        const double excess = fr.value[a] - pb_.mu_cons;
        if (excess > 0.0) {
          r[3 + a] = sw * excess;
          jac->row(3 + a) = sw * fr.jac.row(a);
        }
      }
    } else {
      const auto util = vehicle::friction_utilization<double>(
          std::array<double, NX>{x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8]},
          std::array<double, NU>{u[0], u[1]}, pb_.params, pb_.mu_cons);
      r[3] = sw * std::max(0.0, util.first - pb_.mu_cons);
      r[4] = sw * std::max(0.0, util.second - pb_.mu_cons);
    }
    return r;
  }

  Eigen::Vector2d terminal_residual(const Vec9& x, Eigen::Matrix<double, 2, NX>* jac) const {
    const TerminalLinearization t = linearize_terminal(x, pb_.spline);
    if (jac) *jac = sqrt_p_.asDiagonal() * t.jac;
    return sqrt_p_.cwiseProduct(t.value);
  }

  Evaluation evaluate(const Iterate& it, const std::vector<Vec9>* penalty = nullptr) const {
    Evaluation e;
    const int n = pb_.intervals;
    const double h = pb_.step();
    for (int k = 0; k < n; ++k) {
      e.half_cost += 0.5 * stage_residual(it.x[k], it.u[k], nullptr).squaredNorm();
      Vec9 next;
      try {
        next = shoot_interval(it.x[k], it.u[k], pb_.params, pb_.mu_cons, h);
      } catch (const std::runtime_error&) {
        e.finite = false;
        return e;
      }
      const Vec9 d = next - it.x[k + 1];
      e.defect_l1 += penalty ? (*penalty)[k].dot(d.cwiseAbs()) : d.lpNorm<1>();
      e.defect_max = std::max(e.defect_max, d.lpNorm<Eigen::Infinity>());
    }
    e.half_cost += 0.5 * terminal_residual(it.x[n], nullptr).squaredNorm();
    e.finite = std::isfinite(e.half_cost) && std::isfinite(e.defect_l1);
    return e;
  }

  // Unpenalized cost sum U'RU + Q (V_ref - V)^2 + e'Pe.
  double objective(const Iterate& it) const {
    double c = 0.0;
    for (int k = 0; k < pb_.intervals; ++k) {
      c += stage_residual(it.x[k], it.u[k], nullptr).head<3>().squaredNorm();
    }
    return c + terminal_residual(it.x[pb_.intervals], nullptr).squaredNorm();
  }

  // Linearized QP in the step variables. Returns false on non-finite data.
  bool build_qp(const Iterate& it, const NodeBounds& nb, double reg, LqProblem& qp,
                std::vector<Eigen::Matrix<double, NZ, NZ>>& hess,
                std::vector<Eigen::Matrix<double, NZ, 1>>& grad) const {
    const int n = pb_.intervals;
    const double h = pb_.step();
    qp.x0.setZero();
    qp.stages.resize(n);
    hess.resize(n + 1);
    grad.resize(n + 1);
    for (int k = 0; k < n; ++k) {
      LqStage& st = qp.stages[k];
      IntervalLinearization lin;
      try {
        lin = linearize_interval(it.x[k], it.u[k], pb_.params, pb_.mu_cons, h);
      } catch (const std::runtime_error&) {
        return false;
      }
      st.A = lin.A;
      st.B = lin.B;
      st.b = lin.next - it.x[k + 1];
      StageJacobian J;
      const StageResidual r = stage_residual(it.x[k], it.u[k], &J);
      Eigen::Matrix<double, NZ, NZ> H = J.transpose() * J;
      H.diagonal().array() += reg;
      const Eigen::Matrix<double, NZ, 1> g = J.transpose() * r;
      hess[k] = H;
      grad[k] = g;
      st.Q = H.topLeftCorner<NX, NX>();
      st.S = H.bottomLeftCorner<NU, NX>();
      st.R = H.bottomRightCorner<NU, NU>();
      st.q = g.head<NX>();
      st.r = g.tail<NU>();
      st.u_lo = nb.u_lo - it.u[k];
      st.u_hi = nb.u_hi - it.u[k];
      if (k > 0) {
        st.x_lo = nb.x_lo - it.x[k];
        st.x_hi = nb.x_hi - it.x[k];
      }
      if (!st.A.allFinite() || !st.B.allFinite() || !H.allFinite() || !g.allFinite()) {
        return false;
      }
    }
    Eigen::Matrix<double, 2, NX> Jt;
    const Eigen::Vector2d rt = terminal_residual(it.x[n], &Jt);
    qp.QN = Jt.transpose() * Jt;
    qp.QN.diagonal().array() += reg;
    qp.qN = Jt.transpose() * rt;
    qp.xN_lo = nb.x_lo - it.x[n];
    qp.xN_hi = nb.x_hi - it.x[n];
    hess[n].setZero();
    hess[n].topLeftCorner<NX, NX>() = qp.QN;
    grad[n].setZero();
    grad[n].head<NX>() = qp.qN;
    return qp.QN.allFinite() && qp.qN.allFinite();
  }

  double max_friction(const Iterate& it) const {
    double m = 0.0;
    for (int k = 0; k < pb_.intervals; ++k) {
      const auto util = vehicle::friction_utilization<double>(
          std::array<double, NX>{it.x[k][0], it.x[k][1], it.x[k][2], it.x[k][3], it.x[k][4],
                                 it.x[k][5], it.x[k][6], it.x[k][7], it.x[k][8]},
          std::array<double, NU>{it.u[k][0], it.u[k][1]}, pb_.params, pb_.mu_cons);
      m = std::max({m, util.first, util.second});
    }
    return m;
  }

 private:
  const OcpProblem& pb_;
  double weight_;
  Eigen::Vector2d sqrt_r_;
  double sqrt_q_;
  Eigen::Vector2d sqrt_p_;
};

void clamp_to_bounds(Iterate& it, const NodeBounds& nb) {
  for (auto& u : it.u) u = u.cwiseMax(nb.u_lo).cwiseMin(nb.u_hi);
  for (std::size_t k = 1; k < it.x.size(); ++k) {
    it.x[k] = it.x[k].cwiseMax(nb.x_lo).cwiseMin(nb.x_hi);
  }
}

Iterate rollout(const OcpProblem& pb) {
  Iterate it;
  it.x.assign(pb.intervals + 1, to_vec(pb.initial));
  it.u.assign(pb.intervals, Vec2::Zero());
  for (int k = 0; k < pb.intervals; ++k) {
    it.x[k + 1] = shoot_interval(it.x[k], it.u[k], pb.params, pb.mu_cons, pb.step());
  }
  return it;
}

double bound_violation(const Iterate& it, const NodeBounds& nb) {
  double v = 0.0;
  for (const auto& u : it.u) {
    v = std::max(v, (nb.u_lo - u).maxCoeff());
    v = std::max(v, (u - nb.u_hi).maxCoeff());
  }
  for (std::size_t k = 1; k < it.x.size(); ++k) {
    v = std::max(v, (nb.x_lo - it.x[k]).maxCoeff());
    v = std::max(v, (it.x[k] - nb.x_hi).maxCoeff());
  }
  return v;
}

void snap_inputs(Iterate& it, const NodeBounds& nb) {
  for (auto& u : it.u) {
    for (int j = 0; j < NU; ++j) {
      if (std::abs(u[j] - nb.u_lo[j]) <= kSnapTol) u[j] = nb.u_lo[j];
      if (std::abs(u[j] - nb.u_hi[j]) <= kSnapTol) u[j] = nb.u_hi[j];
    }
  }
}

template <int N>
Dual<N> seed(double v, int i) {
  return Dual<N>::variable(v, i);
}

}  // namespace

Vec9 to_vec(const VehicleState& s) {
  const auto a = s.to_array();
  return Eigen::Map<const Vec9>(a.data());
}

VehicleState to_state(const Vec9& v) {
  vehicle::StateVec<double> a;
  for (int i = 0; i < NX; ++i) a[i] = v[i];
  return VehicleState::from_array(a);
}

Vec2 to_vec(const ControlInput& u) { return Vec2(u.steer_rate, u.accel); }
ControlInput to_input(const Vec2& v) { return {v[0], v[1]}; }

void OcpProblem::validate() const {
  if (!(mu_cons > 0.0 && mu_cons <= 1.2)) throw std::invalid_argument("mu_cons must be in (0, 1.2]");
  if (!(v_ref >= 0.0)) throw std::invalid_argument("V_Ref must be >= 0");
  if (!(horizon > 0.0) || intervals <= 0) throw std::invalid_argument("bad horizon discretization");
  if (std::abs(initial.x) > 1e-12 || std::abs(initial.y) > 1e-12 || std::abs(initial.psi) > 1e-12) {
    throw std::invalid_argument("initial pose must be the frame origin");
  }
}

std::pair<VehicleState, Pose2D> frame_reset(const VehicleState& global_state,
                                            const Pose2D& global_ref) {
  const Pose2D frame = global_state.pose();
  VehicleState local = global_state;
  local.x = 0.0;
  local.y = 0.0;
  local.psi = 0.0;
  return {local, to_local(frame, global_ref)};
}

OcpProblem build_ocp(const VehicleState& local_state, const Pose2D& local_ref, double v_ref,
                     double mu_cons, const VehicleParams& params) {
  OcpProblem pb;
  pb.initial = local_state;
  pb.ref_pose = local_ref;
  pb.v_ref = v_ref;
  pb.mu_cons = mu_cons;
  pb.accel_min = -4.0 * mu_cons;
  pb.accel_max = 1.0 * mu_cons;
  pb.params = params;
  pb.validate();
  pb.spline = spline::fit_spline(local_ref, local_state.beta);
  return pb;
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIter: return "max_iter";
    case SolveStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

Vec9 shoot_interval(const Vec9& x, const Vec2& u, const VehicleParams& params, double mu_cons,
                    double h) {
  vehicle::StateVec<double> xa;
  for (int i = 0; i < NX; ++i) xa[i] = x[i];
  const vehicle::InputVec<double> ua{u[0], u[1]};
  auto f = [&](const vehicle::StateVec<double>& s, const vehicle::InputVec<double>& in) {
    return vehicle::prediction_rhs<double>(s, in, params, mu_cons);
  };
  const auto next = vehicle::rk4_step(f, xa, ua, h);
  return Eigen::Map<const Vec9>(next.data());
}

IntervalLinearization linearize_interval(const Vec9& x, const Vec2& u,
                                         const VehicleParams& params, double mu_cons, double h) {
  using D = Dual<NZ>;
  vehicle::StateVec<D> xd;
  for (int i = 0; i < NX; ++i) xd[i] = seed<NZ>(x[i], i);
  const vehicle::InputVec<D> ud{seed<NZ>(u[0], NX), seed<NZ>(u[1], NX + 1)};
  auto f = [&](const vehicle::StateVec<D>& s, const vehicle::InputVec<D>& in) {
    return vehicle::prediction_rhs<D>(s, in, params, mu_cons);
  };
  const auto next = vehicle::rk4_step(f, xd, ud, h);
  IntervalLinearization lin;
  for (int i = 0; i < NX; ++i) {
    lin.next[i] = next[i].v;
    for (int j = 0; j < NX; ++j) lin.A(i, j) = next[i].d[j];
    for (int j = 0; j < NU; ++j) lin.B(i, j) = next[i].d[NX + j];
  }
  return lin;
}

FrictionLinearization linearize_friction(const Vec9& x, const Vec2& u,
                                         const VehicleParams& params, double mu_cons) {
  using D = Dual<NZ>;
  vehicle::StateVec<D> xd;
  for (int i = 0; i < NX; ++i) xd[i] = seed<NZ>(x[i], i);
  const vehicle::InputVec<D> ud{seed<NZ>(u[0], NX), seed<NZ>(u[1], NX + 1)};
  const auto [front, rear] = vehicle::friction_utilization<D>(xd, ud, params, mu_cons);
  FrictionLinearization fl;
  fl.value << front.v, rear.v;
  for (int j = 0; j < NZ; ++j) {
    fl.jac(0, j) = front.d[j];
    fl.jac(1, j) = rear.d[j];
  }
  return fl;
}

TerminalLinearization linearize_terminal(const Vec9& x, const spline::SplineCoeffs& s) {
  const double px = x[kX];
  const double value = s.value(px);
  const double slope = s.slope(px);
  const double curvature = 6.0 * s.a * px + 2.0 * s.b;
  TerminalLinearization t;
  t.value << value - x[kY], std::atan(slope) - x[kPsi];
  t.jac.setZero();
  t.jac(0, kX) = slope;
  t.jac(0, kY) = -1.0;
  t.jac(1, kX) = curvature / (1.0 + slope * slope);
  t.jac(1, kPsi) = -1.0;
  return t;
}

InitialGuess shift_solution(const OcpSolution& previous, const Pose2D& old_frame,
                            const Pose2D& new_frame) {
  InitialGuess g;
  const std::size_t n = previous.u.size();
  if (n == 0 || previous.x.size() != n + 1) {
    throw std::invalid_argument("previous solution has inconsistent lengths");
  }
  g.x.resize(n + 1);
  g.u.resize(n);
  const double dpsi = old_frame.psi - new_frame.psi;
  for (std::size_t i = 0; i <= n; ++i) {
    const VehicleState& s = previous.x[std::min(i + 1, n)];
    const Pose2D global = to_global(old_frame, {s.x, s.y, 0.0});
    const Pose2D local = to_local(new_frame, global);
    VehicleState moved = s;
    moved.x = local.x;
    moved.y = local.y;
    moved.psi = s.psi + dpsi;
    g.x[i] = to_vec(moved);
  }
  for (std::size_t i = 0; i < n; ++i) g.u[i] = to_vec(previous.u[std::min(i + 1, n - 1)]);
  return g;
}

OcpSolution solve(const OcpProblem& pb, const std::optional<InitialGuess>& guess,
                  const SolverConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  pb.validate();
  const int n = pb.intervals;
  const NodeBounds nb = node_bounds(pb);
  OcpSolution sol;

  auto finish = [&](const Iterate& it, const Problem& problem) {
    sol.u.resize(n);
    sol.x.resize(n + 1);
    for (int k = 0; k < n; ++k) sol.u[k] = to_input(it.u[k]);
    for (int k = 0; k <= n; ++k) sol.x[k] = to_state(it.x[k]);
    if (sol.status != SolveStatus::kDiverged) {
      const Evaluation e = problem.evaluate(it);
      sol.objective = problem.objective(it);
      sol.max_friction = problem.max_friction(it);
      sol.max_violation = std::max({bound_violation(it, nb), sol.max_friction - pb.mu_cons,
                                    e.defect_max, 0.0});
    }
    sol.penalty_weight = problem.weight();
    if (cfg.measure_time) {
      sol.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               start)
                         .count();
    }
    return sol;
  };

  Problem problem(pb, cfg.penalty_initial);

  // At rest with the target on the vehicle itself nothing is to be done.
  if (pb.v_ref == 0.0 && pb.ref_pose.x == 0.0 && pb.ref_pose.y == 0.0 && pb.ref_pose.psi == 0.0) {
    Iterate it;
    it.x.assign(n + 1, to_vec(pb.initial));
    it.u.assign(n, Vec2::Zero());
    sol.status = SolveStatus::kConverged;
    return finish(it, problem);
  }

  Iterate it;
  try {
    if (guess && cfg.warm_start && static_cast<int>(guess->u.size()) == n &&
        static_cast<int>(guess->x.size()) == n + 1) {
      it.x = guess->x;
      it.u = guess->u;
      it.x[0] = to_vec(pb.initial);
      clamp_to_bounds(it, nb);
    } else {
      it = rollout(pb);
    }
  } catch (const std::runtime_error&) {
    sol.status = SolveStatus::kDiverged;
    Iterate fallback;
    fallback.x.assign(n + 1, to_vec(pb.initial));
    fallback.u.assign(n, Vec2::Zero());
    return finish(fallback, problem);
  }

  LqProblem qp;
  std::vector<Eigen::Matrix<double, NZ, NZ>> hess;
  std::vector<Eigen::Matrix<double, NZ, 1>> grad;
  // l1 merit penalties per defect component, kept above the dynamics multipliers
  std::vector<Vec9> rho(n, Vec9::Zero());
  sol.status = SolveStatus::kMaxIter;

  while (true) {
    if (!problem.build_qp(it, nb, cfg.regularization, qp, hess, grad)) {
      sol.status = SolveStatus::kDiverged;
      break;
    }
    const LqSolution step = solve_box_lq(qp, cfg.qp);
    ++sol.iterations;
    bool finite = true;
    for (int k = 0; k < n; ++k) finite = finite && step.u[k].allFinite();
    for (int k = 0; k <= n; ++k) finite = finite && step.x[k].allFinite();
    if (!finite) {
      sol.status = SolveStatus::kDiverged;
      break;
    }

    // KKT residual of the current iterate, read from the QP step.
    double stationarity = 0.0, defect = 0.0, comp = 0.0, dir = 0.0;
    for (int k = 0; k <= n; ++k) {
      Eigen::Matrix<double, NZ, 1> dz = Eigen::Matrix<double, NZ, 1>::Zero();
      dz.head<NX>() = step.x[k];
      if (k < n) dz.tail<NU>() = step.u[k];
      stationarity = std::max(stationarity, (hess[k] * dz).lpNorm<Eigen::Infinity>());
      dir += grad[k].dot(dz);
      if (k < n) {
        defect = std::max(defect, qp.stages[k].b.lpNorm<Eigen::Infinity>());
        for (int j = 0; j < NU; ++j) {
          if (std::isfinite(qp.stages[k].u_lo[j])) {
            comp = std::max(comp, step.lam_u_lo[k][j] * -qp.stages[k].u_lo[j]);
          }
          if (std::isfinite(qp.stages[k].u_hi[j])) {
            comp = std::max(comp, step.lam_u_hi[k][j] * qp.stages[k].u_hi[j]);
          }
        }
      }
      if (k > 0) {
        const Vec9& lo = k < n ? qp.stages[k].x_lo : qp.xN_lo;
        const Vec9& hi = k < n ? qp.stages[k].x_hi : qp.xN_hi;
        for (int j = 0; j < NX; ++j) {
          if (std::isfinite(lo[j])) comp = std::max(comp, step.lam_x_lo[k][j] * -lo[j]);
          if (std::isfinite(hi[j])) comp = std::max(comp, step.lam_x_hi[k][j] * hi[j]);
        }
      }
    }
    sol.kkt = std::max({stationarity, defect, comp});

    if (sol.kkt < cfg.kkt_tol) {
      const double excess = problem.max_friction(it) - pb.mu_cons;
      if (excess > cfg.friction_tol && problem.weight() < cfg.penalty_max) {
        problem.set_weight(std::min(cfg.penalty_max, problem.weight() * cfg.penalty_growth));
        if (sol.iterations >= cfg.max_iter) break;
        continue;
      }
      sol.status = SolveStatus::kConverged;
      break;
    }
    if (sol.iterations >= cfg.max_iter) break;

    // Exact l1 merit with a penalty above the dynamics multipliers.
    for (int k = 0; k < n; ++k) {
      const Vec9 need = 1.1 * step.costate[k + 1].cwiseAbs() + Vec9::Constant(1e-8);
      rho[k] = need.cwiseMax(0.5 * (rho[k] + need));
    }
    const Evaluation e0 = problem.evaluate(it, &rho);
    if (!e0.finite) {
      sol.status = SolveStatus::kDiverged;
      break;
    }
    const double phi0 = e0.half_cost + e0.defect_l1;
    const double slope = dir - e0.defect_l1;
    // No descent left beyond round-off: the iterate sits on a kink (friction
    // penalty hinge, stiffness-reduction clamp). Stop without converging.
    if (slope > -1e-14 * (1.0 + std::abs(phi0))) break;
    double alpha = 1.0;
    bool accepted = false;
    Iterate trial = it;
    for (int b = 0; b <= cfg.max_backtracks; ++b) {
      for (int k = 0; k < n; ++k) trial.u[k] = it.u[k] + alpha * step.u[k];
      for (int k = 1; k <= n; ++k) trial.x[k] = it.x[k] + alpha * step.x[k];
      const Evaluation e = problem.evaluate(trial, &rho);
      if (e.finite) {
        const double phi = e.half_cost + e.defect_l1;
        if (phi <= phi0 + cfg.armijo * alpha * std::min(slope, 0.0)) {
          sol.merit_trace.push_back({phi0, phi});
          accepted = true;
          break;
        }
      }
      alpha *= cfg.backtrack;
    }
    if (!accepted) break;
    it = std::move(trial);
  }

  if (sol.status == SolveStatus::kDiverged) {
    Iterate fallback;
    fallback.x.assign(n + 1, to_vec(pb.initial));
    fallback.u.assign(n, Vec2::Zero());
    return finish(fallback, problem);
  }
  // Inputs within round-off of a bound are put exactly on it; the states are
  // then re-propagated so the returned trajectory is the one these inputs produce.
  sol.shooting_defect = problem.evaluate(it).defect_max;
  snap_inputs(it, nb);
  for (int k = 0; k < n; ++k) {
    it.x[k + 1] = shoot_interval(it.x[k], it.u[k], pb.params, pb.mu_cons, pb.step());
  }
  return finish(it, problem);
}

ControlInput first_input(const OcpSolution& solution) {
  if (solution.status == SolveStatus::kDiverged) {
    throw std::runtime_error("NMPC solution diverged; no input available");
  }
  if (solution.u.empty()) throw std::runtime_error("NMPC solution has no inputs");
  return solution.u.front();
}

NmpcController::NmpcController(VehicleParams params, SolverConfig config)
    : params_(params), config_(config) {}

void NmpcController::reset() { previous_.reset(); }

OcpSolution NmpcController::step(const VehicleState& global_state, const Pose2D& global_ref,
                                 double v_ref, double mu_cons) {
  const auto [local_state, local_ref] = frame_reset(global_state, global_ref);
  const OcpProblem pb = build_ocp(local_state, local_ref, v_ref, mu_cons, params_);
  const Pose2D frame = global_state.pose();
  std::optional<InitialGuess> guess;
  if (previous_ && config_.warm_start && previous_->status != SolveStatus::kDiverged) {
    guess = shift_solution(*previous_, previous_frame_, frame);
  }
  OcpSolution sol = solve(pb, guess, config_);
  if (sol.status == SolveStatus::kDiverged) {
    previous_.reset();
  } else {
    previous_ = sol;
    previous_frame_ = frame;
  }
  return sol;
}

}  // namespace teleop::nmpc

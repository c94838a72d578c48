#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "teleop/nmpc.hpp"

using namespace teleop;
using namespace teleop::nmpc;
using vehicle::kDeg;

namespace {

constexpr double kVRef = 20.0 / 3.6;

VehicleState cruising(double v) {
  VehicleState s;
  s.v = v;
  return s;
}

// Random reference-pose tracking problem in the vehicle frame.
OcpProblem random_problem(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double mus[] = {0.25, 0.5, 0.9};
  VehicleState s = cruising(kVRef * (1.0 + 0.3 * u(rng)));
  s.beta = 0.01 * u(rng);
  s.yaw_rate = 0.1 * u(rng);
  s.delta = 5.0 * kDeg * u(rng);
  s.fy_front = 300.0 * u(rng);
  s.fy_rear = 300.0 * u(rng);
  const Pose2D ref{s.v * (1.0 + 0.2 * u(rng)), 2.0 * u(rng), 0.5 * u(rng)};
  const double mu = mus[static_cast<int>(3.0 * std::abs(u(rng))) % 3];
  return build_ocp(s, ref, kVRef, mu, {});
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("frame reset examples") {
  const auto [s0, r0] = frame_reset(cruising(3.0), {4.0, 1.0, 0.2});
  CHECK(r0.x == 4.0);
  CHECK(r0.y == 1.0);
  CHECK(r0.psi == 0.2);

  VehicleState g = cruising(3.0);
  g.x = 10.0;
  g.y = 5.0;
  g.psi = std::numbers::pi / 2;
  const auto [s1, r1] = frame_reset(g, {10.0, 15.0, std::numbers::pi / 2});
  CHECK(s1.x == 0.0);
  CHECK(s1.y == 0.0);
  CHECK(s1.psi == 0.0);
  CHECK(s1.v == 3.0);
  CHECK(r1.x == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(std::abs(r1.y) < 1e-12);
  CHECK(std::abs(r1.psi) < 1e-12);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    const Pose2D frame{u(rng), u(rng), u(rng) / 10.0};
    const Pose2D p{u(rng), u(rng), u(rng) / 20.0};
    const Pose2D back = to_local(frame, to_global(frame, p));
    CHECK(std::abs(back.x - p.x) < 1e-12);
    CHECK(std::abs(back.y - p.y) < 1e-12);
    CHECK(std::abs(normalize_angle(back.psi - p.psi)) < 1e-12);
  }
}

TEST_CASE("problem construction scales the acceleration bounds") {
  const auto hi = build_ocp(cruising(kVRef), {5.0, 0.0, 0.0}, kVRef, 0.9, {});
  CHECK(hi.accel_min == doctest::Approx(-3.6));
  CHECK(hi.accel_max == doctest::Approx(0.9));
  const auto lo = build_ocp(cruising(kVRef), {5.0, 0.0, 0.0}, kVRef, 0.25, {});
  CHECK(lo.accel_min == doctest::Approx(-1.0));
  CHECK(lo.accel_max == doctest::Approx(0.25));
  CHECK(lo.penalties.steer_rate == 1.0);
  CHECK(lo.penalties.accel == 0.1);
  CHECK(lo.penalties.speed == 1.0);
  CHECK(lo.penalties.lateral == 50.0);
  CHECK(lo.penalties.heading == 3.0);
  CHECK(lo.intervals == 50);
  CHECK(lo.step() == doctest::Approx(0.02));
  CHECK_THROWS(build_ocp(cruising(kVRef), {5.0, 0.0, 0.0}, kVRef, 1.5, {}));
  VehicleState moved = cruising(kVRef);
  moved.x = 1.0;
  CHECK_THROWS(build_ocp(moved, {5.0, 0.0, 0.0}, kVRef, 0.9, {}));
  CHECK_THROWS_AS(build_ocp(cruising(kVRef), {0.0, 1.0, 0.0}, kVRef, 0.9, {}),
                  spline::SplineFitError);
}

TEST_CASE("equilibrium needs no action") {
  const auto pb = build_ocp(cruising(kVRef), {kVRef, 0.0, 0.0}, kVRef, 0.9, {});
  const auto sol = solve(pb, std::nullopt);
  CHECK(sol.status == SolveStatus::kConverged);
  double worst = 0.0;
  for (const auto& u : sol.u) worst = std::max({worst, std::abs(u.steer_rate), std::abs(u.accel)});
  CHECK(worst < 1e-3);
  const auto u0 = first_input(sol);
  CHECK(std::abs(u0.steer_rate) < 1e-3);
  CHECK(std::abs(u0.accel) < 1e-3);
}

TEST_CASE("at rest with the target on the vehicle the zero input is returned") {
  OcpProblem pb;
  pb.initial = VehicleState{};
  pb.v_ref = 0.0;
  const auto sol = solve(pb, std::nullopt);
  CHECK(sol.status == SolveStatus::kConverged);
  CHECK(sol.iterations == 0);
  for (const auto& u : sol.u) {
    CHECK(u.steer_rate == 0.0);
    CHECK(u.accel == 0.0);
  }
}

TEST_CASE("shooting jacobians match central differences") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const VehicleParams p{};
  for (int trial = 0; trial < 100; ++trial) {
    Vec9 x;
    x << 0.05 * u(rng), 0.3 * u(rng), u(rng), 1500 * u(rng), 1500 * u(rng), 10 * u(rng),
        10 * u(rng), 0.3 * u(rng), 6.0 + 3.0 * u(rng);
    Vec2 v(0.15 * u(rng), (u(rng) > 0 ? 1.0 : -1.0) * (0.2 + 0.5 * std::abs(u(rng))));
    const auto lin = linearize_interval(x, v, p, 0.9, 0.02);
    CHECK((lin.next - shoot_interval(x, v, p, 0.9, 0.02)).cwiseAbs().maxCoeff() < 1e-12);
    for (int j = 0; j < NX + NU; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(j < NX ? x[j] : v[j - NX]));
      Vec9 xp = x, xm = x;
      Vec2 vp = v, vm = v;
      if (j < NX) {
        xp[j] += h;
        xm[j] -= h;
      } else {
        vp[j - NX] += h;
        vm[j - NX] -= h;
      }
      const Vec9 col = (shoot_interval(xp, vp, p, 0.9, 0.02) - shoot_interval(xm, vm, p, 0.9, 0.02)) / (2 * h);
      for (int i = 0; i < NX; ++i) {
        const double exact = j < NX ? lin.A(i, j) : lin.B(i, j - NX);
        CHECK(rel_err(col[i], exact) < 1e-4);
      }
      const auto fp = linearize_friction(xp, vp, p, 0.9).value;
      const auto fm = linearize_friction(xm, vm, p, 0.9).value;
      const auto fl = linearize_friction(x, v, p, 0.9);
      for (int i = 0; i < 2; ++i) CHECK(rel_err((fp[i] - fm[i]) / (2 * h), fl.jac(i, j)) < 1e-4);
    }
  }
}

TEST_CASE("terminal residual jacobian matches central differences") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto k = spline::fit_spline({5.0 + 3.0 * u(rng), 2.0 * u(rng), 0.4 * u(rng)}, 0.0);
    Vec9 x = Vec9::Zero();
    x[vehicle::kPsi] = 0.3 * u(rng);
    x[vehicle::kX] = 5.0 + 2.0 * u(rng);
    x[vehicle::kY] = u(rng);
    const auto lin = linearize_terminal(x, k);
    for (int j = 0; j < NX; ++j) {
      Vec9 xp = x, xm = x;
      xp[j] += 1e-6;
      xm[j] -= 1e-6;
      const auto d = (linearize_terminal(xp, k).value - linearize_terminal(xm, k).value) / 2e-6;
      for (int i = 0; i < 2; ++i) CHECK(rel_err(d[i], lin.jac(i, j)) < 1e-4);
    }
  }
}

TEST_CASE("converged random problems satisfy every constraint") {
  std::mt19937_64 rng(31);
  int converged = 0, attempts = 0;
  while (converged < 50 && attempts < 80) {
    ++attempts;
    const OcpProblem pb = random_problem(rng);
    const auto sol = solve(pb, std::nullopt);
    if (sol.status != SolveStatus::kConverged) continue;
    ++converged;
    const double tol = 1e-6;
    for (const auto& u : sol.u) {
      CHECK(std::abs(u.steer_rate) <= 10.0 * kDeg + tol);
      CHECK(u.accel <= pb.accel_max + tol);
      CHECK(u.accel >= pb.accel_min - tol);
    }
    for (const auto& x : sol.x) {
      CHECK(std::abs(x.delta) <= 25.0 * kDeg + tol);
      CHECK(x.v >= -tol);
    }
    for (int k = 0; k < pb.intervals; ++k) {
      const auto [f, r] = vehicle::friction_utilization(sol.x[k].to_array(), sol.u[k].to_array(),
                                                        pb.params, pb.mu_cons);
      CHECK(f <= pb.mu_cons + 1e-3);
      CHECK(r <= pb.mu_cons + 1e-3);
      const Vec9 next = shoot_interval(to_vec(sol.x[k]), to_vec(sol.u[k]), pb.params, pb.mu_cons, pb.step());
      CHECK((to_vec(sol.x[k + 1]) - next).cwiseAbs().maxCoeff() < 1e-6);
    }
    CHECK(sol.shooting_defect < 1e-6);
    for (const auto& m : sol.merit_trace) CHECK(m.after <= m.before + 1e-12 * std::abs(m.before));
  }
  CHECK(converged == 50);
}

TEST_CASE("lateral target beyond the steer-rate limit lowers the terminal speed") {
  // target at the operator's look-ahead distance V (tau2 + tau1 + horizon) with
  // 3 m of lateral offset: far more than 10 deg/s of steering would be needed
  const auto pb = build_ocp(cruising(kVRef), {kVRef * 1.26, 3.0, 0.0}, kVRef, 0.9, {});
  const auto sol = solve(pb, std::nullopt);
  CHECK(sol.status == SolveStatus::kConverged);
  CHECK(sol.x.back().v < kVRef);
  CHECK(std::abs(sol.u.front().steer_rate) == doctest::Approx(10.0 * kDeg).epsilon(1e-6));
}

TEST_CASE("warm-started receding horizon converges quickly") {
  // a steady stream of lateral-offset targets in the global frame
  NmpcController rh;
  VehicleState st = cruising(kVRef);
  std::vector<int> iters;
  for (int i = 0; i < 50; ++i) {
    const Pose2D ref{st.x + kVRef * 1.26, 0.5, 0.0};
    const auto sol = rh.step(st, ref, kVRef, 0.9);
    REQUIRE(sol.status == SolveStatus::kConverged);
    iters.push_back(sol.iterations);
    const Pose2D frame = st.pose();
    const VehicleState local = sol.x[1];
    const Pose2D next = to_global(frame, local.pose());
    st = local;
    st.x = next.x;
    st.y = next.y;
    st.psi = next.psi;
  }
  for (std::size_t i = 1; i < iters.size(); ++i) CHECK(iters[i] <= 5);
}

TEST_CASE("identical inputs give bit-identical solutions") {
  SolverConfig cfg;
  cfg.measure_time = false;
  const auto pb = build_ocp(cruising(kVRef), {kVRef, 1.5, 0.3}, kVRef, 0.5, {});
  const auto a = solve(pb, std::nullopt, cfg);
  const auto b = solve(pb, std::nullopt, cfg);
  REQUIRE(a.u.size() == b.u.size());
  for (std::size_t i = 0; i < a.u.size(); ++i) {
    CHECK(a.u[i].steer_rate == b.u[i].steer_rate);
    CHECK(a.u[i].accel == b.u[i].accel);
  }
  CHECK(a.objective == b.objective);
  CHECK(a.solve_ms == 0.0);
}

TEST_CASE("first input of a diverged solution is an error") {
  OcpSolution s;
  s.status = SolveStatus::kDiverged;
  s.u.resize(1);
  CHECK_THROWS(first_input(s));
  CHECK(to_string(SolveStatus::kMaxIter) == "max_iter");
}

TEST_CASE("unconstrained lq solve matches a dense kkt solve") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  const int n = 6;
  LqProblem pb;
  for (int i = 0; i < NX; ++i) pb.x0[i] = nd(rng);
  for (int k = 0; k < n; ++k) {
    LqStage s;
    s.A = Mat9::Identity() + 0.1 * Mat9::NullaryExpr([&] { return nd(rng); });
    s.B = Mat92::NullaryExpr([&] { return nd(rng); });
    s.b = Vec9::NullaryExpr([&] { return 0.1 * nd(rng); });
    const Mat9 m = Mat9::NullaryExpr([&] { return 0.3 * nd(rng); });
    s.Q = m * m.transpose() + Mat9::Identity();
    s.R = Mat2::Identity() * 2.0;
    s.q = Vec9::NullaryExpr([&] { return nd(rng); });
    s.r = Vec2::NullaryExpr([&] { return nd(rng); });
    pb.stages.push_back(s);
  }
  pb.QN = Mat9::Identity() * 3.0;
  pb.qN = Vec9::NullaryExpr([&] { return nd(rng); });
  const auto sol = solve_box_lq(pb);
  REQUIRE(sol.converged);

  // variables z = (u_0, x_1, u_1, ..., x_N), equality constraints of the dynamics
  const int nz = n * NU + n * NX;
  auto u_at = [&](int k) { return k * (NU + NX); };
  auto x_at = [&](int k) { return (k - 1) * (NU + NX) + NU; };  // k >= 1
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nz, nz);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(nz);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n * NX, nz);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n * NX);
  for (int k = 0; k < n; ++k) {
    const auto& s = pb.stages[k];
    H.block<NU, NU>(u_at(k), u_at(k)) = s.R;
    g.segment<NU>(u_at(k)) = s.r;
    if (k > 0) {
      H.block<NX, NX>(x_at(k), x_at(k)) = s.Q;
      g.segment<NX>(x_at(k)) = s.q;
    } else {
      g.segment<NU>(u_at(0)) += s.S * pb.x0;
    }
    // x_{k+1} - A x_k - B u_k = b
    C.block<NX, NX>(k * NX, x_at(k + 1)) = Mat9::Identity();
    C.block<NX, NU>(k * NX, u_at(k)) = -s.B;
    if (k > 0) {
      C.block<NX, NX>(k * NX, x_at(k)) = -s.A;
      d.segment<NX>(k * NX) = s.b;
    } else {
      d.segment<NX>(0) = s.b + s.A * pb.x0;
    }
  }
  H.block<NX, NX>(x_at(n), x_at(n)) = pb.QN;
  g.segment<NX>(x_at(n)) = pb.qN;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nz + n * NX, nz + n * NX);
  K.topLeftCorner(nz, nz) = H;
  K.topRightCorner(nz, n * NX) = C.transpose();
  K.bottomLeftCorner(n * NX, nz) = C;
  Eigen::VectorXd rhs(nz + n * NX);
  rhs << -g, d;
  const Eigen::VectorXd z = K.fullPivLu().solve(rhs);
  for (int k = 0; k < n; ++k) {
    CHECK((sol.u[k] - z.segment<NU>(u_at(k))).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((sol.x[k + 1] - z.segment<NX>(x_at(k + 1))).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("box-constrained lq solution satisfies its kkt conditions") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const int n = 10;
  LqProblem pb;
  for (int i = 0; i < NX; ++i) pb.x0[i] = nd(rng);
  for (int k = 0; k < n; ++k) {
    LqStage s;
    s.A = Mat9::Identity() + 0.1 * Mat9::NullaryExpr([&] { return nd(rng); });
    s.B = Mat92::NullaryExpr([&] { return nd(rng); });
    s.b = Vec9::NullaryExpr([&] { return 0.1 * nd(rng); });
    s.Q = Mat9::Identity();
    s.q = Vec9::NullaryExpr([&] { return nd(rng); });
    s.u_lo = Vec2::Constant(-0.3);
    s.u_hi = Vec2::Constant(0.3);
    if (k > 0) s.x_lo[8] = -2.0;
    pb.stages.push_back(s);
  }
  pb.QN = Mat9::Identity();
  const auto sol = solve_box_lq(pb);
  REQUIRE(sol.converged);
  double stationarity = 0.0, dynamics = 0.0, complementarity = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto& s = pb.stages[k];
    const Vec2 gu = s.R * sol.u[k] + s.r + s.S * sol.x[k] + s.B.transpose() * sol.costate[k + 1] -
                    sol.lam_u_lo[k] + sol.lam_u_hi[k];
    stationarity = std::max(stationarity, gu.cwiseAbs().maxCoeff());
    if (k > 0) {
      const Vec9 gx = s.Q * sol.x[k] + s.q + s.S.transpose() * sol.u[k] +
                      s.A.transpose() * sol.costate[k + 1] - sol.costate[k] - sol.lam_x_lo[k] +
                      sol.lam_x_hi[k];
      stationarity = std::max(stationarity, gx.cwiseAbs().maxCoeff());
      complementarity = std::max(complementarity, std::abs(sol.lam_x_lo[k][8] * (sol.x[k][8] + 2.0)));
    }
    dynamics = std::max(dynamics, (sol.x[k + 1] - s.A * sol.x[k] - s.B * sol.u[k] - s.b).cwiseAbs().maxCoeff());
    for (int i = 0; i < NU; ++i) {
      CHECK(sol.u[k][i] >= -0.3 - 1e-9);
      CHECK(sol.u[k][i] <= 0.3 + 1e-9);
      CHECK(sol.lam_u_lo[k][i] >= 0.0);
      CHECK(sol.lam_u_hi[k][i] >= 0.0);
      complementarity = std::max(complementarity, std::abs(sol.lam_u_lo[k][i] * (sol.u[k][i] + 0.3)));
      complementarity = std::max(complementarity, std::abs(sol.lam_u_hi[k][i] * (0.3 - sol.u[k][i])));
    }
  }
  stationarity = std::max(stationarity, (pb.QN * sol.x[n] + pb.qN - sol.costate[n]).cwiseAbs().maxCoeff());
  CHECK(stationarity < 1e-6);
  CHECK(dynamics < 1e-9);
  CHECK(complementarity < 1e-6);
}

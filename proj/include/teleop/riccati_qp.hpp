#pragma once

// Box-constrained linear-quadratic optimal control problems solved by a
// primal-dual interior point method whose Newton systems are factorized with
// a backward Riccati recursion (one pass per iteration, two right-hand sides).

#include <Eigen/Dense>
#include <limits>
#include <vector>

namespace teleop::nmpc {

inline constexpr int NX = 9;
inline constexpr int NU = 2;

using Vec9 = Eigen::Matrix<double, NX, 1>;
using Vec2 = Eigen::Matrix<double, NU, 1>;
using Mat9 = Eigen::Matrix<double, NX, NX>;
using Mat92 = Eigen::Matrix<double, NX, NU>;
using Mat29 = Eigen::Matrix<double, NU, NX>;
using Mat2 = Eigen::Matrix<double, NU, NU>;

/// Stage i of   min sum_i 1/2 [x;u]' [Q S'; S R] [x;u] + q'x + r'u + 1/2 x_N' Q_N x_N + q_N' x_N
///              s.t. x_{i+1} = A x_i + B u_i + b,  x_0 fixed,  lo <= (x, u) <= hi.
/// Infinite bounds are inactive; bounds on x_0 are ignored.
struct LqStage {
  Mat9 A = Mat9::Zero();
  Mat92 B = Mat92::Zero();
  Vec9 b = Vec9::Zero();
  Mat9 Q = Mat9::Zero();
  Mat29 S = Mat29::Zero();
  Mat2 R = Mat2::Identity();
  Vec9 q = Vec9::Zero();
  Vec2 r = Vec2::Zero();
  Vec9 x_lo = Vec9::Constant(-std::numeric_limits<double>::infinity());
  Vec9 x_hi = Vec9::Constant(std::numeric_limits<double>::infinity());
  Vec2 u_lo = Vec2::Constant(-std::numeric_limits<double>::infinity());
  Vec2 u_hi = Vec2::Constant(std::numeric_limits<double>::infinity());
};

struct LqProblem {
  Vec9 x0 = Vec9::Zero();
  std::vector<LqStage> stages;  // N stages
  Mat9 QN = Mat9::Zero();
  Vec9 qN = Vec9::Zero();
  Vec9 xN_lo = Vec9::Constant(-std::numeric_limits<double>::infinity());
  Vec9 xN_hi = Vec9::Constant(std::numeric_limits<double>::infinity());
};

struct LqSettings {
  int max_iter = 60;
  double tol_mu = 1e-9;         // mean complementarity
  double tol_residual = 1e-10;  // remaining fraction of the initial infeasibility
};

struct LqSolution {
  std::vector<Vec9> x;        // N + 1
  std::vector<Vec2> u;        // N
  std::vector<Vec9> costate;  // N + 1, multipliers of the dynamics (entry 0 unused)
  // bound multipliers, same layout as the bounds (zero where inactive)
  std::vector<Vec9> lam_x_lo, lam_x_hi;
  std::vector<Vec2> lam_u_lo, lam_u_hi;
  int iterations = 0;
  bool converged = false;
};

LqSolution solve_box_lq(const LqProblem& problem, const LqSettings& settings = {});

}  // namespace teleop::nmpc

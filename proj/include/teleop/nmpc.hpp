#pragma once

// Reference-pose tracking optimal control problem: N = 50 multiple-shooting
// intervals over 1 s, solved by Gauss-Newton SQP with a Riccati interior point
// method for the box-constrained QP subproblems.

#include <optional>
#include <string>
#include <vector>

#include "teleop/geometry.hpp"
#include "teleop/riccati_qp.hpp"
#include "teleop/spline_ref.hpp"
#include "teleop/vehicle_models.hpp"

namespace teleop::nmpc {

using vehicle::ControlInput;
using vehicle::VehicleParams;
using vehicle::VehicleState;

Vec9 to_vec(const VehicleState& s);
VehicleState to_state(const Vec9& v);
Vec2 to_vec(const ControlInput& u);
ControlInput to_input(const Vec2& v);

struct Penalties {
  double steer_rate = 1.0;  // R(0,0)
  double accel = 0.1;       // R(1,1)
  double speed = 1.0;       // Q on (V_Ref - V_i)
  double lateral = 50.0;    // P(0,0), terminal lateral residual
  double heading = 3.0;     // P(1,1), terminal heading residual
};

struct OcpProblem {
  VehicleState initial;  // vehicle frame: x = y = psi = 0
  Pose2D ref_pose;       // vehicle frame
  double v_ref = 0.0;    // [m/s]
  double mu_cons = 0.9;
  double horizon = 1.0;  // [s]
  int intervals = 50;
  Penalties penalties;
  double steer_rate_max = vehicle::kSteerRateMax;
  double steer_max = vehicle::kSteerMax;
  double accel_min = -3.6;  // -4 mu_cons
  double accel_max = 0.9;   //  1 mu_cons
  double speed_min = 0.0;
  spline::SplineCoeffs spline;
  VehicleParams params;

  double step() const { return horizon / intervals; }
  void validate() const;
};

/// Rigid transform of state and reference into the frame of the vehicle pose.
std::pair<VehicleState, Pose2D> frame_reset(const VehicleState& global_state,
                                            const Pose2D& global_ref);

/// Throws spline::SplineFitError when the reference cannot be fitted.
OcpProblem build_ocp(const VehicleState& local_state, const Pose2D& local_ref, double v_ref,
                     double mu_cons, const VehicleParams& params);

enum class SolveStatus { kConverged, kMaxIter, kDiverged };
std::string to_string(SolveStatus status);

struct SolverConfig {
  int max_iter = 40;                 // SQP iterations, all penalty rounds together
  double kkt_tol = 1e-6;
  double penalty_initial = 1e4;      // friction-ellipse penalty weight
  double penalty_growth = 10.0;
  double penalty_max = 1e9;
  double friction_tol = 1e-4;        // violation accepted before the weight stops growing
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  double regularization = 1e-9;      // added to the Gauss-Newton Hessian diagonal
  bool warm_start = true;
  bool measure_time = true;
  LqSettings qp{};
};

struct MeritStep {
  double before = 0.0;
  double after = 0.0;
};

struct OcpSolution {
  std::vector<ControlInput> u;  // N
  std::vector<VehicleState> x;  // N + 1
  double objective = 0.0;       // cost without the friction penalty
  int iterations = 0;
  double solve_ms = 0.0;
  SolveStatus status = SolveStatus::kMaxIter;
  double max_violation = 0.0;   // bounds, friction ellipse and shooting defects
  double max_friction = 0.0;    // largest friction utilization over nodes and axles
  double kkt = 0.0;
  double shooting_defect = 0.0;  // max |X_{i+1} - Phi(X_i, U_i)| of the last SQP iterate
  double penalty_weight = 0.0;
  std::vector<MeritStep> merit_trace;  // accepted line-search steps
};

/// Per-interval shooting map (one RK4 step) and its Jacobians.
struct IntervalLinearization {
  Vec9 next;
  Mat9 A;
  Mat92 B;
};
Vec9 shoot_interval(const Vec9& x, const Vec2& u, const VehicleParams& params, double mu_cons,
                    double h);
IntervalLinearization linearize_interval(const Vec9& x, const Vec2& u,
                                         const VehicleParams& params, double mu_cons, double h);

/// Friction utilization of both axles and its Jacobian w.r.t. [x; u].
struct FrictionLinearization {
  Eigen::Vector2d value;
  Eigen::Matrix<double, 2, NX + NU> jac;
};
FrictionLinearization linearize_friction(const Vec9& x, const Vec2& u,
                                         const VehicleParams& params, double mu_cons);

/// Terminal residuals (lateral, heading) against the spline and their Jacobian.
struct TerminalLinearization {
  Eigen::Vector2d value;
  Eigen::Matrix<double, 2, NX> jac;
};
TerminalLinearization linearize_terminal(const Vec9& x, const spline::SplineCoeffs& spline);

/// Initial guess in the current problem frame.
struct InitialGuess {
  std::vector<Vec9> x;
  std::vector<Vec2> u;
};

/// Shift-by-one of a previous solution, re-expressed from the frame `old_frame`
/// into `new_frame` (both global poses). The last interval is duplicated.
InitialGuess shift_solution(const OcpSolution& previous, const Pose2D& old_frame,
                            const Pose2D& new_frame);

OcpSolution solve(const OcpProblem& problem, const std::optional<InitialGuess>& guess,
                  const SolverConfig& config = {});

/// U_0 of a usable solution; throws on a diverged one.
ControlInput first_input(const OcpSolution& solution);

/// Receding-horizon wrapper: frame reset, spline fit, warm start, solve.
class NmpcController {
 public:
  explicit NmpcController(VehicleParams params = {}, SolverConfig config = {});

  /// Throws spline::SplineFitError if the reference cannot be fitted.
  OcpSolution step(const VehicleState& global_state, const Pose2D& global_ref, double v_ref,
                   double mu_cons);

  void reset();
  const SolverConfig& config() const { return config_; }

 private:
  VehicleParams params_;
  SolverConfig config_;
  std::optional<OcpSolution> previous_;
  Pose2D previous_frame_;
};

}  // namespace teleop::nmpc

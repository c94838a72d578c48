// Acceptance gate: one PASS/FAIL line per criterion. A criterion passes only
// when its property holds and it finishes inside its runtime budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "teleop/controllers.hpp"
#include "teleop/delay_channel.hpp"
#include "teleop/metrics_io.hpp"
#include "teleop/nmpc.hpp"
#include "teleop/sim_harness.hpp"
#include "teleop/spline_ref.hpp"

using namespace teleop;
using vehicle::kDeg;
using vehicle::VehicleParams;
using vehicle::VehicleState;

namespace {

constexpr double kVRef = 20.0 / 3.6;

struct Outcome {
  bool ok = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Criterion 1: ground-truth delay replay through both channel formulations.
Outcome ground_truth_replay() {
  Outcome out;
  const auto rows = io::read_packet_trace(std::string(TELEOP_FIXTURES) + "/ground_truth_trace.csv");
  const double expected[] = {2.5, 3.0, 4.0, 4.5, 5.0, 6.5, 7.0, 8.0};
  if (rows.size() != 8) return {false, fmt("fixture has %zu packets", rows.size())};

  delay::EventChannel<int> channel;
  delay::SignalHistory<int> history;
  std::vector<double> dts, taus;
  for (const auto& r : rows) {
    channel.push(delay::make_packet<int>(r.seq, static_cast<int>(r.seq) + 1, r.departure, r.delay));
    history.record(r.departure, static_cast<int>(r.seq) + 1);
    dts.push_back(r.departure);
    taus.push_back(r.delay);
  }
  const auto profile = delay::build_td_profile(dts, taus);
  std::vector<double> queue_arrivals, operator_steps;
  int last = 0;
  for (int k = 0; k <= 9000; ++k) {
    const double t = k * 1e-3;
    const int v = delay::delayed_signal_eval(history, profile, t, 0);
    if (v != last) {
      operator_steps.push_back(t);
      last = v;
    }
  }
  // exact replay: poll at each arrival instant and record who was delivered
  std::vector<std::uint64_t> delivered;
  for (const auto& r : rows) {
    for (const auto& p : channel.poll(r.arrival)) {
      delivered.push_back(p.seq);
      queue_arrivals.push_back(r.arrival);
    }
  }
  double worst_op = 0.0;
  if (queue_arrivals.size() != 8 || operator_steps.size() != 8) {
    return {false, fmt("queue %zu / operator %zu deliveries", queue_arrivals.size(),
                       operator_steps.size())};
  }
  for (int n = 0; n < 8; ++n) {
    if (delivered[n] != static_cast<std::uint64_t>(n) || queue_arrivals[n] != expected[n] ||
        rows[n].arrival != expected[n]) {
      out.ok = false;
    }
    worst_op = std::max(worst_op, std::abs(operator_steps[n] - expected[n]));
  }
  if (worst_op > 1e-3 + 1e-9) out.ok = false;
  out.detail = fmt("event channel exact=%s, operator max error %.4f s (step 1 ms)",
                   out.ok ? "yes" : "no", worst_op);
  return out;
}

double gev_cdf(double x, double xi, double mu, double sigma) {
  const double z = 1.0 + xi * (x - mu) / sigma;
  if (z <= 0.0) return xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(z, -1.0 / xi));
}

// Criterion 2: GEV lower bound and Kolmogorov-Smirnov distance.
Outcome gev_fidelity() {
  const delay::GevParams g{0.29, 200.0, 9.0};
  delay::Rng rng(20240601);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = delay::sample_gev(rng, g);
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = gev_cdf(xs[i], 0.29, 200.0, 9.0);
    ks = std::max({ks, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  const bool ok = xs.front() >= 168.9 && ks < 0.01;
  return {ok, fmt("min sample %.3f ms (bound 168.9), KS %.5f (< 0.01)", xs.front(), ks)};
}

// Criterion 3: spline fits against a dense linear-solve oracle.
Outcome spline_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> xs(0.5, 30.0), ys(-8.0, 8.0), angle(-1.3, 1.3),
      slip(-0.3, 0.3);
  double worst_bc = 0.0, worst_oracle = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose2D ref{xs(rng), ys(rng), angle(rng)};
    const double beta = slip(rng);
    const auto k = spline::fit_spline(ref, beta);
    worst_bc = std::max({worst_bc, std::abs(k.value(0.0)), std::abs(k.slope(0.0) - std::tan(beta)),
                         std::abs(k.value(ref.x) - ref.y),
                         std::abs(std::atan(k.slope(ref.x)) - ref.psi)});
    const double x = ref.x;
    Eigen::Matrix4d m;
    m << 0, 0, 0, 1, x * x * x, x * x, x, 1, 0, 0, 1, 0, 3 * x * x, 2 * x, 1, 0;
    const Eigen::Vector4d o =
        m.fullPivLu().solve(Eigen::Vector4d(0.0, ref.y, std::tan(beta), std::tan(ref.psi)));
    worst_oracle = std::max({worst_oracle, std::abs(k.a - o[0]), std::abs(k.b - o[1]),
                             std::abs(k.c - o[2]), std::abs(k.d - o[3])});
  }
  const auto k = spline::fit_spline({10.0, 2.0, 0.0}, 0.0);
  const bool example = std::abs(k.a + 0.004) < 1e-12 && std::abs(k.b - 0.06) < 1e-12;
  const bool ok = worst_bc < 1e-9 && worst_oracle < 1e-10 && example;
  return {ok, fmt("boundary %.2e (< 1e-9), oracle %.2e (< 1e-10), A=%.6f B=%.6f", worst_bc,
                  worst_oracle, k.a, k.b)};
}

// Criterion 4: Smith predictor with an exact local model on a 10 s corner.
Outcome smith_cancellation() {
  const double dt = 0.01, tau1 = 0.06, tau2 = 0.2, r = 30.0;
  std::vector<PathPoint> pts;
  for (double s = 0.0; s < 10.0; s += 0.05) pts.push_back({s, 0.0, 0.0, s});
  const int n = static_cast<int>(std::lround(r * std::numbers::pi / 0.05));
  for (int i = 0; i <= n; ++i) {
    const double th = std::numbers::pi * i / n;
    pts.push_back({10.0 + r * std::sin(th), r * (1.0 - std::cos(th)), th, 10.0 + r * th});
  }
  const Trajectory path(pts);
  const VehicleParams p{};
  VehicleState start;
  start.v = kVRef;
  start.y = 0.3;
  control::SmithLocalModel local(p, control::ActuatorLimits{}, start);
  control::SmithLocalModel plant(p, control::ActuatorLimits{}, start);
  control::PredictorBuffer buf(1000);
  delay::SignalHistory<VehicleState> measured;
  double worst = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double t = k * dt;
    buf.push(t, local.state());
    measured.record(t, plant.state());
    const auto fb = control::smith_feedback(buf, measured.value_at(t - tau1 - tau2, start), t,
                                            tau1, tau2);
    if (!fb.warming_up) {
      const auto a = fb.state.to_array(), b = plant.state().to_array();
      for (int i = 0; i < vehicle::kNx; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    const double cmd = control::stanley_command(path, fb.state.pose(), fb.state.v, p.lf,
                                                control::StanleyConfig{});
    local.step(cmd, dt);
    plant.step(cmd, dt);
  }
  const double heading = plant.state().psi;
  return {worst < 1e-6 && std::abs(heading) > 1.0,
          fmt("max |X_p - X| %.2e (< 1e-6), final heading %.2f rad", worst, heading)};
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Criterion 5: derivatives, continuity, constraints and the equilibrium problem.
Outcome nmpc_suite() {
  using namespace nmpc;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const VehicleParams p{};
  double worst_jac = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vec9 x;
    x << 0.05 * u(rng), 0.3 * u(rng), u(rng), 1500 * u(rng), 1500 * u(rng), 10 * u(rng),
        10 * u(rng), 0.3 * u(rng), 6.0 + 3.0 * u(rng);
    Vec2 v(0.15 * u(rng), (u(rng) > 0 ? 1.0 : -1.0) * (0.2 + 0.5 * std::abs(u(rng))));
    const auto lin = linearize_interval(x, v, p, 0.9, 0.02);
    const auto fl = linearize_friction(x, v, p, 0.9);
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
      const Vec9 col =
          (shoot_interval(xp, vp, p, 0.9, 0.02) - shoot_interval(xm, vm, p, 0.9, 0.02)) / (2 * h);
      for (int i = 0; i < NX; ++i) {
        worst_jac = std::max(worst_jac, rel_err(col[i], j < NX ? lin.A(i, j) : lin.B(i, j - NX)));
      }
      const auto fp = linearize_friction(xp, vp, p, 0.9).value;
      const auto fm = linearize_friction(xm, vm, p, 0.9).value;
      for (int i = 0; i < 2; ++i) {
        worst_jac = std::max(worst_jac, rel_err((fp[i] - fm[i]) / (2 * h), fl.jac(i, j)));
      }
    }
  }

  std::mt19937_64 prng(31);
  const double mus[] = {0.25, 0.5, 0.9};
  int converged = 0, attempts = 0;
  double worst_cont = 0.0, worst_bound = 0.0, worst_fric = 0.0;
  while (converged < 50 && attempts < 80) {
    ++attempts;
    VehicleState s;
    s.v = kVRef * (1.0 + 0.3 * u(prng));
    s.beta = 0.01 * u(prng);
    s.yaw_rate = 0.1 * u(prng);
    s.delta = 5.0 * kDeg * u(prng);
    s.fy_front = 300.0 * u(prng);
    s.fy_rear = 300.0 * u(prng);
    const Pose2D ref{s.v * (1.0 + 0.2 * u(prng)), 2.0 * u(prng), 0.5 * u(prng)};
    const double mu = mus[static_cast<int>(3.0 * std::abs(u(prng))) % 3];
    const OcpProblem pb = build_ocp(s, ref, kVRef, mu, {});
    const auto sol = solve(pb, std::nullopt);
    if (sol.status != SolveStatus::kConverged) continue;
    ++converged;
    for (const auto& in : sol.u) {
      worst_bound = std::max({worst_bound, std::abs(in.steer_rate) - 10.0 * kDeg,
                              in.accel - pb.accel_max, pb.accel_min - in.accel});
    }
    for (const auto& st : sol.x) {
      worst_bound = std::max({worst_bound, std::abs(st.delta) - 25.0 * kDeg, -st.v});
    }
    for (int k = 0; k < pb.intervals; ++k) {
      const auto [f, r] = vehicle::friction_utilization(sol.x[k].to_array(), sol.u[k].to_array(),
                                                        pb.params, pb.mu_cons);
      worst_fric = std::max({worst_fric, f - pb.mu_cons, r - pb.mu_cons});
      const Vec9 next =
          shoot_interval(to_vec(sol.x[k]), to_vec(sol.u[k]), pb.params, pb.mu_cons, pb.step());
      worst_cont = std::max(worst_cont, (to_vec(sol.x[k + 1]) - next).cwiseAbs().maxCoeff());
    }
  }

  VehicleState eq;
  eq.v = kVRef;
  const auto esol = solve(build_ocp(eq, {kVRef, 0.0, 0.0}, kVRef, 0.9, {}), std::nullopt);
  double u_eq = 0.0;
  for (const auto& in : esol.u) u_eq = std::max({u_eq, std::abs(in.steer_rate), std::abs(in.accel)});

  const bool ok = worst_jac < 1e-4 && converged == 50 && worst_cont < 1e-6 &&
                  worst_bound <= 1e-6 && worst_fric <= 1e-3 &&
                  esol.status == SolveStatus::kConverged && u_eq < 1e-3;
  return {ok, fmt("jacobian rel %.1e, %d/50 converged in %d attempts, continuity %.1e, "
                  "bound excess %.1e, friction excess %.1e, equilibrium |U| %.1e",
                  worst_jac, converged, attempts, worst_cont, std::max(0.0, worst_bound),
                  std::max(0.0, worst_fric), u_eq)};
}

// Criterion 6: onboard solve times over a full SRPT run of the default scenario.
Outcome nmpc_timing() {
  sim::ScenarioConfig c = sim::default_scenario();
  c.measure_solver_time = true;
  sim::RunOptions opt;
  std::vector<double> ms;
  opt.on_solve = [&](double, const std::string&, double, const nmpc::OcpSolution& s) {
    ms.push_back(s.solve_ms);
  };
  sim::run(c, sim::Mode::kSrpt, opt);
  if (ms.empty()) return {false, "no solves"};
  double sum = 0.0, mx = 0.0;
  for (double v : ms) {
    sum += v;
    mx = std::max(mx, v);
  }
  const double mean = sum / static_cast<double>(ms.size());
  return {mean < 20.0 && mx < 60.0,
          fmt("%zu solves, mean %.2f ms (< 20), max %.2f ms (< 60); reference solver 6 / 15 ms",
              ms.size(), mean, mx)};
}

struct SweepStats {
  std::map<std::string, std::map<std::string, std::vector<double>>> rms;  // section, mode
  int binding = 0;
  int binding_below = 0;
  double worst_binding_excess = -1e9;
  int d_solves = 0;
  int d_relaxed = 0;  // D solves that did not use the conservative friction
  double d_worst_accel = 0.0;
  double d_worst_cmd = 0.0;
};

SweepStats sweep(const std::vector<std::uint64_t>& seeds) {
  SweepStats st;
  sim::ScenarioConfig c = sim::default_scenario();
  c.measure_solver_time = false;
  sim::RunOptions opt;
  opt.on_solve = [&](double, const std::string& section, double mu, const nmpc::OcpSolution& s) {
    if (section == "C" || section == "F") {
      const bool binds = std::any_of(s.u.begin(), s.u.end(), [](const auto& in) {
        return std::abs(in.steer_rate) >= vehicle::kSteerRateMax - 1e-6;
      });
      if (binds) {
        ++st.binding;
        const double excess = s.x.back().v - c.v_ref;
        if (excess < 0.0) ++st.binding_below;
        st.worst_binding_excess = std::max(st.worst_binding_excess, excess);
      }
    }
    if (section == "D") {
      ++st.d_solves;
      if (mu != 0.25) ++st.d_relaxed;
      for (const auto& in : s.u) st.d_worst_accel = std::max(st.d_worst_accel, std::abs(in.accel));
    }
  };
  const auto cmp = sim::compare(c, {sim::Mode::kSmith, sim::Mode::kSrpt}, seeds, opt);
  for (const auto& r : cmp.rms) st.rms[r.section][r.mode].push_back(r.rms);
  for (const auto& log : cmp.logs) {
    if (log.mode != "srpt") continue;
    for (const auto& row : log.rows) {
      if (row.section == "D") st.d_worst_cmd = std::max(st.d_worst_cmd, std::abs(row.cmd2));
    }
  }
  return st;
}

// Criterion 7: SRPT beats Smith per section and per seed in C-F.
Outcome ordering(const SweepStats& st, std::size_t seeds) {
  Outcome out;
  std::string detail;
  for (const std::string sec : {"A", "B", "C", "D", "E", "F"}) {
    const auto& smith = st.rms.at(sec).at("smith");
    const auto& srpt = st.rms.at(sec).at("srpt");
    if (smith.size() != seeds || srpt.size() != seeds) return {false, "missing runs"};
    double ms = 0.0, mr = 0.0;
    int wins = 0;
    for (std::size_t i = 0; i < seeds; ++i) {
      ms += smith[i] / seeds;
      mr += srpt[i] / seeds;
      wins += srpt[i] < smith[i];
    }
    const bool ordered = sec >= "C";
    if (ordered && wins != static_cast<int>(seeds)) out.ok = false;
    detail += fmt("%s%s %.4f/%.4f (%d/%zu)", detail.empty() ? "" : ", ", sec.c_str(), ms, mr,
                  wins, seeds);
  }
  out.detail = "mean smith/srpt RMS [m] and srpt wins: " + detail;
  return out;
}

// Criterion 8: speed moderation in C/F and the low-friction acceleration bound in D.
Outcome mechanism(const SweepStats& st) {
  const bool speed = st.binding > 0 && st.binding_below == st.binding;
  const bool accel = st.d_solves > 0 && st.d_relaxed == 0 && st.d_worst_accel <= 1.0 + 1e-9 &&
                     st.d_worst_cmd <= 1.0 + 1e-9;
  return {speed && accel,
          fmt("C/F: V_N < V_Ref in %d of %d rate-bound solves (largest V_N - V_Ref %+.2e m/s); "
              "D: %d solves, %d without mu_cons 0.25, max |a| %.3f m/s^2",
              st.binding_below, st.binding, st.worst_binding_excess, st.d_solves, st.d_relaxed,
              std::max(st.d_worst_accel, st.d_worst_cmd))};
}

// Criterion 9: byte-identical logs per seed, config and mode.
Outcome determinism() {
  sim::ScenarioConfig c = sim::default_scenario();
  c.measure_solver_time = false;
  c.seed = 7;
  std::string detail;
  bool ok = true;
  for (const auto mode : {sim::Mode::kSmith, sim::Mode::kSrpt}) {
    std::stringstream a, b;
    io::write_log(a, sim::run(c, mode));
    io::write_log(b, sim::run(c, mode));
    const bool same = a.str() == b.str();
    ok = ok && same;
    detail += fmt("%s%s %s (%zu bytes)", detail.empty() ? "" : ", ", sim::to_string(mode).c_str(),
                  same ? "identical" : "differs", a.str().size());
  }
  return {ok, detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, double budget_s, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = budget_s <= 0.0 || secs < budget_s;
    const bool pass = o.ok && in_time;
    failures += !pass;
    const std::string budget = budget_s > 0.0 ? fmt(" < %.0f s", budget_s) : std::string();
    std::printf("%s %d %s: %s [%.2f s%s]\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                secs, budget.c_str());
    std::fflush(stdout);
  };

  report(1, "ground-truth delay replay", 1.0, ground_truth_replay);
  report(2, "GEV fidelity", 5.0, gev_fidelity);
  report(3, "spline oracle", 1.0, spline_oracle);
  report(4, "Smith cancellation", 5.0, smith_cancellation);
  report(5, "NMPC correctness suite", 60.0, nmpc_suite);
  report(6, "NMPC timing", 0.0, nmpc_timing);

  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SweepStats stats;
  report(7, "comparative ordering over 5 seeds", 600.0, [&] {
    stats = sweep(seeds);
    return ordering(stats, seeds.size());
  });
  report(8, "mechanism checks", 0.0, [&] { return mechanism(stats); });
  report(9, "determinism", 120.0, determinism);
  return failures == 0 ? 0 : 1;
}

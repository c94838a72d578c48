#include "teleop/riccati_qp.hpp"

#include <algorithm>
#include <cmath>

namespace teleop::nmpc {

namespace {

constexpr int NZ = NX + NU;
using VecZ = Eigen::Matrix<double, NZ, 1>;

// Interior point iterate and bound bookkeeping for one stage. The terminal
// stage uses only the first NX entries.
struct StageIterate {
  VecZ z = VecZ::Zero();
  VecZ lo = VecZ::Zero(), hi = VecZ::Zero();
  VecZ has_lo = VecZ::Zero(), has_hi = VecZ::Zero();  // 1.0 where a bound is present
  VecZ s_lo = VecZ::Ones(), s_hi = VecZ::Ones();
  VecZ l_lo = VecZ::Zero(), l_hi = VecZ::Zero();
  VecZ sigma = VecZ::Zero();
};

struct Direction {
  std::vector<VecZ> dz, ds_lo, ds_hi, dl_lo, dl_hi;
  std::vector<Vec9> costate;
};

class RiccatiFactor {
 public:
  explicit RiccatiFactor(std::size_t n) : P_(n + 1), K_(n), G_(n), Hinv_(n) {}

  void factor(const LqProblem& pb, const std::vector<StageIterate>& it) {
    const std::size_t n = pb.stages.size();
    P_[n] = pb.QN;
    P_[n].diagonal() += it[n].sigma.head<NX>();
    for (std::size_t k = n; k-- > 0;) {
      const LqStage& st = pb.stages[k];
      const Mat9 PA = P_[k + 1].lazyProduct(st.A);
      const Mat92 PB = P_[k + 1].lazyProduct(st.B);
      Mat2 Hu = st.R + st.B.transpose().lazyProduct(PB);
      Hu.diagonal() += it[k].sigma.tail<NU>();
      G_[k] = st.S + st.B.transpose().lazyProduct(PA);
      Mat9 F = st.Q + st.A.transpose().lazyProduct(PA);
      F.diagonal() += it[k].sigma.head<NX>();
      Hinv_[k] = Hu.inverse();
      K_[k] = -Hinv_[k].lazyProduct(G_[k]);
      Mat9 Pk = F + G_[k].transpose().lazyProduct(K_[k]);
      P_[k] = 0.5 * (Pk + Pk.transpose());
    }
  }

  // Solves the LQ problem with the factored Hessian and per-stage linear terms.
  void solve(const LqProblem& pb, const std::vector<VecZ>& lin, std::vector<VecZ>& z_out,
             std::vector<Vec9>& costate) const {
    const std::size_t n = pb.stages.size();
    std::vector<Vec9> p(n + 1);
    std::vector<Vec2> kff(n);
    p[n] = lin[n].head<NX>();
    for (std::size_t k = n; k-- > 0;) {
      const LqStage& st = pb.stages[k];
      const Vec9 t = P_[k + 1] * st.b + p[k + 1];
      const Vec9 fx = lin[k].head<NX>() + st.A.transpose() * t;
      const Vec2 fu = lin[k].tail<NU>() + st.B.transpose() * t;
      kff[k] = -Hinv_[k] * fu;
      p[k] = fx + G_[k].transpose() * kff[k];
    }
    z_out.resize(n + 1);
    costate.assign(n + 1, Vec9::Zero());
    Vec9 x = pb.x0;
    for (std::size_t k = 0; k < n; ++k) {
      const LqStage& st = pb.stages[k];
      const Vec2 u = K_[k] * x + kff[k];
      z_out[k].head<NX>() = x;
      z_out[k].tail<NU>() = u;
      x = st.A * x + st.B * u + st.b;
      costate[k + 1] = P_[k + 1] * x + p[k + 1];
    }
    z_out[n].setZero();
    z_out[n].head<NX>() = x;
  }

 private:
  std::vector<Mat9> P_;
  std::vector<Mat29> K_, G_;
  std::vector<Mat2> Hinv_;
};

VecZ stage_gradient(const LqProblem& pb, std::size_t k) {
  VecZ g = VecZ::Zero();
  if (k < pb.stages.size()) {
    g.head<NX>() = pb.stages[k].q;
    g.tail<NU>() = pb.stages[k].r;
  } else {
    g.head<NX>() = pb.qN;
  }
  return g;
}

// Newton direction for the given complementarity targets rc_lo / rc_hi.
void newton_direction(const LqProblem& pb, const RiccatiFactor& fac,
                      const std::vector<StageIterate>& it, const std::vector<VecZ>& rc_lo,
                      const std::vector<VecZ>& rc_hi, Direction& dir) {
  const std::size_t n = pb.stages.size();
  std::vector<VecZ> lin(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const StageIterate& s = it[k];
    const VecZ rp_lo = (s.z - s.lo - s.s_lo).cwiseProduct(s.has_lo);
    const VecZ rp_hi = (s.hi - s.z - s.s_hi).cwiseProduct(s.has_hi);
    VecZ l = stage_gradient(pb, k) - s.sigma.cwiseProduct(s.z) - s.l_lo + s.l_hi;
    l -= ((rc_lo[k] - s.l_lo.cwiseProduct(rp_lo)).cwiseQuotient(s.s_lo)).cwiseProduct(s.has_lo);
    l += ((rc_hi[k] - s.l_hi.cwiseProduct(rp_hi)).cwiseQuotient(s.s_hi)).cwiseProduct(s.has_hi);
    lin[k] = l;
  }
  std::vector<VecZ> z_plus;
  fac.solve(pb, lin, z_plus, dir.costate);
  dir.dz.resize(n + 1);
  dir.ds_lo.resize(n + 1);
  dir.ds_hi.resize(n + 1);
  dir.dl_lo.resize(n + 1);
  dir.dl_hi.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const StageIterate& s = it[k];
    dir.dz[k] = z_plus[k] - s.z;
    const VecZ rp_lo = (s.z - s.lo - s.s_lo).cwiseProduct(s.has_lo);
    const VecZ rp_hi = (s.hi - s.z - s.s_hi).cwiseProduct(s.has_hi);
    dir.ds_lo[k] = (dir.dz[k] + rp_lo).cwiseProduct(s.has_lo);
    dir.ds_hi[k] = (-dir.dz[k] + rp_hi).cwiseProduct(s.has_hi);
    dir.dl_lo[k] = ((rc_lo[k] - s.l_lo.cwiseProduct(dir.ds_lo[k])).cwiseQuotient(s.s_lo))
                       .cwiseProduct(s.has_lo);
    dir.dl_hi[k] = ((rc_hi[k] - s.l_hi.cwiseProduct(dir.ds_hi[k])).cwiseQuotient(s.s_hi))
                       .cwiseProduct(s.has_hi);
  }
}

double max_step(const VecZ& v, const VecZ& dv, const VecZ& mask, double alpha) {
  for (int j = 0; j < NZ; ++j) {
    if (mask[j] != 0.0 && dv[j] < 0.0) alpha = std::min(alpha, -v[j] / dv[j]);
  }
  return alpha;
}

}  // namespace

LqSolution solve_box_lq(const LqProblem& pb, const LqSettings& settings) {
  const std::size_t n = pb.stages.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<StageIterate> it(n + 1);

  // bounds and a dynamics-feasible starting point
  std::size_t m = 0;
  Vec9 x = pb.x0;
  for (std::size_t k = 0; k <= n; ++k) {
    StageIterate& s = it[k];
    VecZ lo = VecZ::Constant(-inf), hi = VecZ::Constant(inf);
    if (k < n) {
      if (k > 0) {
        lo.head<NX>() = pb.stages[k].x_lo;
        hi.head<NX>() = pb.stages[k].x_hi;
      }
      lo.tail<NU>() = pb.stages[k].u_lo;
      hi.tail<NU>() = pb.stages[k].u_hi;
    } else {
      lo.head<NX>() = pb.xN_lo;
      hi.head<NX>() = pb.xN_hi;
    }
    for (int j = 0; j < NZ; ++j) {
      s.has_lo[j] = std::isfinite(lo[j]) ? 1.0 : 0.0;
      s.has_hi[j] = std::isfinite(hi[j]) ? 1.0 : 0.0;
      s.lo[j] = s.has_lo[j] != 0.0 ? lo[j] : 0.0;
      s.hi[j] = s.has_hi[j] != 0.0 ? hi[j] : 0.0;
      m += static_cast<std::size_t>(s.has_lo[j] + s.has_hi[j]);
    }
    s.z.head<NX>() = x;
    if (k < n) {
      Vec2 u = Vec2::Zero();
      for (int j = 0; j < NU; ++j) {
        if (s.has_lo[NX + j] != 0.0) u[j] = std::max(u[j], s.lo[NX + j]);
        if (s.has_hi[NX + j] != 0.0) u[j] = std::min(u[j], s.hi[NX + j]);
      }
      s.z.tail<NU>() = u;
      x = pb.stages[k].A * x + pb.stages[k].B * u + pb.stages[k].b;
    }
    for (int j = 0; j < NZ; ++j) {
      const bool two_sided = s.has_lo[j] != 0.0 && s.has_hi[j] != 0.0;
      const double floor = two_sided ? 0.1 * std::min(1.0, s.hi[j] - s.lo[j]) : 0.1;
      if (s.has_lo[j] != 0.0) {
        s.s_lo[j] = std::max(s.z[j] - s.lo[j], floor);
        s.l_lo[j] = 1.0;
      }
      if (s.has_hi[j] != 0.0) {
        s.s_hi[j] = std::max(s.hi[j] - s.z[j], floor);
        s.l_hi[j] = 1.0;
      }
    }
  }

  RiccatiFactor fac(n);
  LqSolution sol;
  std::vector<Vec9> costate(n + 1, Vec9::Zero());
  Direction aff, cor;
  std::vector<VecZ> rc_lo(n + 1), rc_hi(n + 1);
  double residual_scale = 1.0;

  auto mean_comp = [&]() {
    double acc = 0.0;
    for (const auto& s : it) {
      acc += s.s_lo.cwiseProduct(s.l_lo).cwiseProduct(s.has_lo).sum();
      acc += s.s_hi.cwiseProduct(s.l_hi).cwiseProduct(s.has_hi).sum();
    }
    return m > 0 ? acc / static_cast<double>(m) : 0.0;
  };

  int iter = 0;
  for (; iter < settings.max_iter; ++iter) {
    const double mu = mean_comp();
    if (m == 0 && iter > 0) {
      sol.converged = true;
      break;
    }
    if (m > 0 && mu < settings.tol_mu && residual_scale < settings.tol_residual) {
      sol.converged = true;
      break;
    }
    for (auto& s : it) {
      s.sigma = (s.l_lo.cwiseQuotient(s.s_lo)).cwiseProduct(s.has_lo) +
                (s.l_hi.cwiseQuotient(s.s_hi)).cwiseProduct(s.has_hi);
    }
    fac.factor(pb, it);

    // predictor
    for (std::size_t k = 0; k <= n; ++k) {
      rc_lo[k] = -it[k].s_lo.cwiseProduct(it[k].l_lo).cwiseProduct(it[k].has_lo);
      rc_hi[k] = -it[k].s_hi.cwiseProduct(it[k].l_hi).cwiseProduct(it[k].has_hi);
    }
    newton_direction(pb, fac, it, rc_lo, rc_hi, aff);
    if (m == 0) {
      for (std::size_t k = 0; k <= n; ++k) it[k].z += aff.dz[k];
      costate = aff.costate;
      continue;
    }
    double a_aff = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const auto& s = it[k];
      a_aff = max_step(s.s_lo, aff.ds_lo[k], s.has_lo, a_aff);
      a_aff = max_step(s.s_hi, aff.ds_hi[k], s.has_hi, a_aff);
      a_aff = max_step(s.l_lo, aff.dl_lo[k], s.has_lo, a_aff);
      a_aff = max_step(s.l_hi, aff.dl_hi[k], s.has_hi, a_aff);
    }
    double comp_aff = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const auto& s = it[k];
      comp_aff += ((s.s_lo + a_aff * aff.ds_lo[k]).cwiseProduct(s.l_lo + a_aff * aff.dl_lo[k]))
                      .cwiseProduct(s.has_lo)
                      .sum();
      comp_aff += ((s.s_hi + a_aff * aff.ds_hi[k]).cwiseProduct(s.l_hi + a_aff * aff.dl_hi[k]))
                      .cwiseProduct(s.has_hi)
                      .sum();
    }
    const double mu_aff = comp_aff / static_cast<double>(m);
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    // corrector
    for (std::size_t k = 0; k <= n; ++k) {
      const auto& s = it[k];
      rc_lo[k] = (sigma * mu - s.s_lo.array() * s.l_lo.array() -
                  aff.ds_lo[k].array() * aff.dl_lo[k].array())
                     .matrix()
                     .cwiseProduct(s.has_lo);
      rc_hi[k] = (sigma * mu - s.s_hi.array() * s.l_hi.array() -
                  aff.ds_hi[k].array() * aff.dl_hi[k].array())
                     .matrix()
                     .cwiseProduct(s.has_hi);
    }
    newton_direction(pb, fac, it, rc_lo, rc_hi, cor);
    double alpha = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const auto& s = it[k];
      alpha = max_step(s.s_lo, cor.ds_lo[k], s.has_lo, alpha);
      alpha = max_step(s.s_hi, cor.ds_hi[k], s.has_hi, alpha);
      alpha = max_step(s.l_lo, cor.dl_lo[k], s.has_lo, alpha);
      alpha = max_step(s.l_hi, cor.dl_hi[k], s.has_hi, alpha);
    }
    alpha = std::min(1.0, 0.995 * alpha);
    for (std::size_t k = 0; k <= n; ++k) {
      auto& s = it[k];
      s.z += alpha * cor.dz[k];
      s.s_lo += alpha * cor.ds_lo[k];
      s.s_hi += alpha * cor.ds_hi[k];
      s.l_lo += alpha * cor.dl_lo[k];
      s.l_hi += alpha * cor.dl_hi[k];
      costate[k] = (1.0 - alpha) * costate[k] + alpha * cor.costate[k];
    }
    residual_scale *= (1.0 - alpha);
  }

  // The condensed Newton systems carry l/s ~ 1e14 on active bounds, which
  // leaves the bound multipliers inaccurate while primal iterates and costates
  // are converged. Recover them from the stage gradients instead.
  for (std::size_t k = 0; k <= n; ++k) {
    auto& s = it[k];
    VecZ grad = stage_gradient(pb, k);
    if (k < n) {
      const LqStage& st = pb.stages[k];
      const Vec9 xk = s.z.head<NX>();
      const Vec2 uk = s.z.tail<NU>();
      grad.head<NX>() += st.Q * xk + st.S.transpose() * uk + st.A.transpose() * costate[k + 1] -
                         costate[k];
      grad.tail<NU>() += st.R * uk + st.S * xk + st.B.transpose() * costate[k + 1];
    } else {
      grad.head<NX>() += pb.QN * s.z.head<NX>() - costate[n];
    }
    for (int j = 0; j < NZ; ++j) {
      if (k == 0 && j < NX) continue;  // x_0 is fixed
      if (s.has_lo[j] != 0.0 && grad[j] >= 0.0) {
        s.l_lo[j] = grad[j];
        if (s.has_hi[j] != 0.0) s.l_hi[j] = 0.0;
      } else if (s.has_hi[j] != 0.0 && grad[j] <= 0.0) {
        s.l_hi[j] = -grad[j];
        if (s.has_lo[j] != 0.0) s.l_lo[j] = 0.0;
      }
    }
  }

  sol.iterations = iter;
  sol.x.resize(n + 1);
  sol.u.resize(n);
  sol.lam_x_lo.resize(n + 1);
  sol.lam_x_hi.resize(n + 1);
  sol.lam_u_lo.resize(n);
  sol.lam_u_hi.resize(n);
  for (std::size_t k = 0; k <= n; ++k) {
    const auto& s = it[k];
    sol.x[k] = s.z.head<NX>();
    sol.lam_x_lo[k] = s.l_lo.head<NX>().cwiseProduct(s.has_lo.head<NX>());
    sol.lam_x_hi[k] = s.l_hi.head<NX>().cwiseProduct(s.has_hi.head<NX>());
    if (k < n) {
      sol.u[k] = s.z.tail<NU>();
      sol.lam_u_lo[k] = s.l_lo.tail<NU>().cwiseProduct(s.has_lo.tail<NU>());
      sol.lam_u_hi[k] = s.l_hi.tail<NU>().cwiseProduct(s.has_hi.tail<NU>());
    }
  }
  sol.costate = costate;
  return sol;
}

}  // namespace teleop::nmpc

#include "fbeuler/wave.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"

namespace fbeuler {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd zero_boundary(const PolarGrid& grid, VectorXd v) {
  for (int b : grid.boundary_nodes()) v[b] = 0.0;
  return v;
}

}  // namespace

VectorXd LinearWaveKernel::weak_apply(const PolarGrid& grid, const VectorXd& mu00,
                                      const VectorXd& mu01, const VectorXd& mu11,
                                      const VectorXd& q) {
  VectorXd d0 = grid.d(q, 0), d1 = grid.d(q, 1);
  VectorXd f0 = mu00.cwiseProduct(d0) + mu01.cwiseProduct(d1);
  VectorXd f1 = mu01.cwiseProduct(d0) + mu11.cwiseProduct(d1);
  return grid.d_transpose(f0, 0) + grid.d_transpose(f1, 1);
}

LinearWaveKernel::LinearWaveKernel(GridPtr grid, double dt, std::vector<Coeffs> coeffs,
                                   bool static_coeffs)
    : grid_(grid), dt_(dt), coeffs_(std::move(coeffs)), static_coeffs_(static_coeffs) {
  const int nin = grid_->n_interior();
  const int nsteps = n_steps();
  const int nfac = static_coeffs_ ? 1 : nsteps;
  llt_.resize(nfac);
  for (int s = 0; s < nfac; ++s) {
    const Coeffs& c = coeffs_[s];
    VectorXd alpha =
        c.wk.cwiseProduct(c.ep + 0.5 * dt_ * c.epdot);
    if (alpha.minCoeff() <= 0.0)
      throw CflViolation("midpoint mass lost positivity; reduce dt");
    MatrixXd A = assemble_weak_stiffness(*grid_, c.mu00, c.mu01, c.mu11);
    A *= 0.25 * dt_ * dt_;
    A.diagonal() += alpha.head(nin);
    llt_[s] = std::make_shared<Eigen::LLT<MatrixXd>>(A);
    if (llt_[s]->info() != Eigen::Success)
      throw StiffnessFailure("wave step matrix not positive definite");
  }
}

const Eigen::LLT<MatrixXd>& LinearWaveKernel::factor(int step) const {
  return *llt_[static_coeffs_ ? 0 : step];
}

VectorXd LinearWaveKernel::stiffness(int step, const VectorXd& q) const {
  const Coeffs& c = coeffs_[step];
  return weak_apply(*grid_, c.mu00, c.mu01, c.mu11, q);
}

LinearWaveKernel::Trajectory LinearWaveKernel::run(const std::vector<VectorXd>& f,
                                                   const VectorXd& psi0,
                                                   const VectorXd& pi0) const {
  const int nin = grid_->n_interior();
  const int nt = n_steps() + 1;
  Trajectory out;
  out.psi.resize(nt);
  out.pi.resize(nt);
  out.psi[0] = zero_boundary(*grid_, psi0);
  out.pi[0] = zero_boundary(*grid_, pi0);
  for (int s = 0; s < n_steps(); ++s) {
    const Coeffs& c = coeffs_[s];
    const VectorXd fm = 0.5 * (f[s] + f[s + 1]);
    const VectorXd beta = c.wk.cwiseProduct(c.ep - 0.5 * dt_ * c.epdot);
    VectorXd rhs = beta.cwiseProduct(out.psi[s]) - 0.25 * dt_ * dt_ * stiffness(s, out.psi[s]) +
                   dt_ * c.wk.cwiseProduct(out.pi[s]) +
                   0.5 * dt_ * dt_ * c.wk.cwiseProduct(fm);
    VectorXd u = VectorXd::Zero(grid_->n_nodes());
    u.head(nin) = factor(s).solve(rhs.head(nin));
    const VectorXd psim = 0.5 * (out.psi[s] + u);
    const VectorXd lap = -stiffness(s, psim).cwiseQuotient(c.wk);
    out.psi[s + 1] = u;
    out.pi[s + 1] = zero_boundary(*grid_, out.pi[s] + dt_ * (lap + fm));
  }
  return out;
}

LinearWaveKernel::Trajectory LinearWaveKernel::run_tangent(
    const Trajectory& base, const std::vector<VectorXd>& base_f,
    const std::vector<TangentCoeffs>& dc, const std::vector<VectorXd>& df,
    const VectorXd& dpsi0, const VectorXd& dpi0) const {
  const int nin = grid_->n_interior();
  const int nt = n_steps() + 1;
  Trajectory out;
  out.psi.resize(nt);
  out.pi.resize(nt);
  out.psi[0] = zero_boundary(*grid_, dpsi0);
  out.pi[0] = zero_boundary(*grid_, dpi0);
  for (int s = 0; s < n_steps(); ++s) {
    const Coeffs& c = coeffs_[s];
    const TangentCoeffs& d = dc[s];
    const VectorXd fm = df.empty() ? VectorXd(VectorXd::Zero(grid_->n_nodes()))
                                   : VectorXd(0.5 * (df[s] + df[s + 1]));
    const VectorXd beta = c.wk.cwiseProduct(c.ep - 0.5 * dt_ * c.epdot);
    const VectorXd dalpha = d.wk.cwiseProduct(c.ep + 0.5 * dt_ * c.epdot) +
                            c.wk.cwiseProduct(d.ep + 0.5 * dt_ * d.epdot);
    const VectorXd dbeta = d.wk.cwiseProduct(c.ep - 0.5 * dt_ * c.epdot) +
                           c.wk.cwiseProduct(d.ep - 0.5 * dt_ * d.epdot);
    const VectorXd& u = base.psi[s + 1];
    const VectorXd psim = 0.5 * (base.psi[s] + u);

    auto dstiff = [&](const VectorXd& q) {
      return weak_apply(*grid_, d.mu00, d.mu01, d.mu11, q);
    };

    VectorXd rhs = dbeta.cwiseProduct(base.psi[s]) + beta.cwiseProduct(out.psi[s]) -
                   0.25 * dt_ * dt_ * (dstiff(base.psi[s]) + stiffness(s, out.psi[s])) +
                   dt_ * (d.wk.cwiseProduct(base.pi[s]) + c.wk.cwiseProduct(out.pi[s]));
    const VectorXd base_fm = 0.5 * (base_f[s] + base_f[s + 1]);
    rhs += 0.5 * dt_ * dt_ *
           (d.wk.cwiseProduct(base_fm) + c.wk.cwiseProduct(fm));
    // move the dA u term to the right-hand side
    rhs -= dalpha.cwiseProduct(u) + 0.25 * dt_ * dt_ * dstiff(u);

    VectorXd du = VectorXd::Zero(grid_->n_nodes());
    du.head(nin) = factor(s).solve(rhs.head(nin));
    const VectorXd dpsim = 0.5 * (out.psi[s] + du);
    const VectorXd Kpsim = stiffness(s, psim);
    const VectorXd dlap = -dstiff(psim).cwiseQuotient(c.wk) -
                          stiffness(s, dpsim).cwiseQuotient(c.wk) +
                          Kpsim.cwiseProduct(d.wk).cwiseQuotient(c.wk.cwiseProduct(c.wk));
    out.psi[s + 1] = du;
    out.pi[s + 1] = zero_boundary(*grid_, out.pi[s] + dt_ * (dlap + fm));
  }
  return out;
}

LinearWaveKernel::Trajectory LinearWaveKernel::run_second(
    const Trajectory& base, const std::vector<VectorXd>& base_f,
    const std::vector<TangentCoeffs>& dc1, const std::vector<VectorXd>& df1,
    const Trajectory& t1, const std::vector<TangentCoeffs>& dc2,
    const std::vector<VectorXd>& df2, const Trajectory& t2,
    const std::vector<TangentCoeffs>& d2c, const std::vector<VectorXd>& d2f) const {
  const int nin = grid_->n_interior();
  const int nt = n_steps() + 1;
  Trajectory out;
  out.psi.assign(nt, VectorXd::Zero(grid_->n_nodes()));
  out.pi.assign(nt, VectorXd::Zero(grid_->n_nodes()));
  for (int s = 0; s < n_steps(); ++s) {
    const Coeffs& c = coeffs_[s];
    const TangentCoeffs& a = dc1[s];
    const TangentCoeffs& b = dc2[s];
    const TangentCoeffs& ab = d2c[s];
    const VectorXd fm2 = d2f.empty() ? VectorXd(VectorXd::Zero(grid_->n_nodes()))
                                     : VectorXd(0.5 * (d2f[s] + d2f[s + 1]));
    const VectorXd fm1a = 0.5 * (df1[s] + df1[s + 1]);
    const VectorXd fm1b = 0.5 * (df2[s] + df2[s + 1]);
    const VectorXd base_fm = 0.5 * (base_f[s] + base_f[s + 1]);

    // linear law: ep is constant along variations
    const VectorXd beta = c.wk.cwiseProduct(c.ep);
    const VectorXd& u = base.psi[s + 1];
    const VectorXd& ua = t1.psi[s + 1];
    const VectorXd& ub = t2.psi[s + 1];
    const VectorXd psim = 0.5 * (base.psi[s] + u);
    const VectorXd psim_a = 0.5 * (t1.psi[s] + ua);
    const VectorXd psim_b = 0.5 * (t2.psi[s] + ub);

    auto Ka = [&](const VectorXd& q) { return weak_apply(*grid_, a.mu00, a.mu01, a.mu11, q); };
    auto Kb = [&](const VectorXd& q) { return weak_apply(*grid_, b.mu00, b.mu01, b.mu11, q); };
    auto Kab = [&](const VectorXd& q) { return weak_apply(*grid_, ab.mu00, ab.mu01, ab.mu11, q); };

    VectorXd rhs =
        ab.wk.cwiseProduct(c.ep).cwiseProduct(base.psi[s]) +
        a.wk.cwiseProduct(c.ep).cwiseProduct(t2.psi[s]) +
        b.wk.cwiseProduct(c.ep).cwiseProduct(t1.psi[s]) +
        beta.cwiseProduct(out.psi[s]);
    rhs -= 0.25 * dt_ * dt_ *
           (Kab(base.psi[s]) + Ka(t2.psi[s]) + Kb(t1.psi[s]) + stiffness(s, out.psi[s]));
    rhs += dt_ * (ab.wk.cwiseProduct(base.pi[s]) + a.wk.cwiseProduct(t2.pi[s]) +
                  b.wk.cwiseProduct(t1.pi[s]) + c.wk.cwiseProduct(out.pi[s]));
    rhs += 0.5 * dt_ * dt_ *
           (ab.wk.cwiseProduct(base_fm) + a.wk.cwiseProduct(fm1b) +
            b.wk.cwiseProduct(fm1a) + c.wk.cwiseProduct(fm2));
    // matrix-variation terms moved right: d2A u + dA1 u2 + dA2 u1
    rhs -= ab.wk.cwiseProduct(c.ep).cwiseProduct(u) + 0.25 * dt_ * dt_ * Kab(u);
    rhs -= a.wk.cwiseProduct(c.ep).cwiseProduct(ub) + 0.25 * dt_ * dt_ * Ka(ub);
    rhs -= b.wk.cwiseProduct(c.ep).cwiseProduct(ua) + 0.25 * dt_ * dt_ * Kb(ua);

    VectorXd du = VectorXd::Zero(grid_->n_nodes());
    du.head(nin) = factor(s).solve(rhs.head(nin));
    const VectorXd dpsim = 0.5 * (out.psi[s] + du);

    // second variation of lap psi^m = -K(psi^m)/wk
    const VectorXd wk2 = c.wk.cwiseProduct(c.wk);
    const VectorXd wk3 = wk2.cwiseProduct(c.wk);
    const VectorXd Kpsim = stiffness(s, psim);
    VectorXd dlap =
        -(Kab(psim) + Ka(psim_b) + Kb(psim_a) + stiffness(s, dpsim)).cwiseQuotient(c.wk);
    dlap += (Ka(psim) + stiffness(s, psim_a)).cwiseProduct(b.wk).cwiseQuotient(wk2);
    dlap += (Kb(psim) + stiffness(s, psim_b)).cwiseProduct(a.wk).cwiseQuotient(wk2);
    dlap += Kpsim.cwiseProduct(ab.wk).cwiseQuotient(wk2) -
            2.0 * Kpsim.cwiseProduct(a.wk).cwiseProduct(b.wk).cwiseQuotient(wk3);
    out.psi[s + 1] = du;
    out.pi[s + 1] = zero_boundary(*grid_, out.pi[s] + dt_ * (dlap + fm2));
  }
  return out;
}

std::vector<LinearWaveKernel::Coeffs> midpoint_coeffs(
    const MetricSeries& ms, const std::vector<VectorXd>& eprime) {
  const int nt = ms.n_times();
  const PolarGrid& grid = *ms.grid;
  const VectorXd& w = grid.quad_weights();
  std::vector<LinearWaveKernel::Coeffs> out(nt - 1);
  for (int s = 0; s + 1 < nt; ++s) {
    const MetricData& m0 = ms.at[s];
    const MetricData& m1 = ms.at[s + 1];
    LinearWaveKernel::Coeffs c;
    c.wk = 0.5 * w.cwiseProduct(m0.kappa + m1.kappa);
    c.ep = 0.5 * (eprime[s] + eprime[s + 1]);
    c.epdot = (eprime[s + 1] - eprime[s]) / ms.dt();
    c.mu00 = 0.5 * w.cwiseProduct(m0.kappa.cwiseProduct(m0.g_inv.col(0)) +
                                  m1.kappa.cwiseProduct(m1.g_inv.col(0)));
    c.mu01 = 0.5 * w.cwiseProduct(m0.kappa.cwiseProduct(m0.g_inv.col(1)) +
                                  m1.kappa.cwiseProduct(m1.g_inv.col(1)));
    c.mu11 = 0.5 * w.cwiseProduct(m0.kappa.cwiseProduct(m0.g_inv.col(3)) +
                                  m1.kappa.cwiseProduct(m1.g_inv.col(3)));
    out[s] = std::move(c);
  }
  return out;
}

LinearWaveKernel::Trajectory step_wave(const MetricSeries& ms,
                                       const std::vector<VectorXd>& eprime,
                                       const std::vector<VectorXd>& f,
                                       const VectorXd& psi0, const VectorXd& psi1,
                                       const WaveOptions& opts) {
  double ep_min = std::numeric_limits<double>::infinity();
  for (const auto& e : eprime) ep_min = std::min(ep_min, e.minCoeff());
  if (!(ep_min > 0.0)) throw CflViolation("e' must be positive");
  if (ms.dt() > opts.cfl_safety * ms.grid->min_radial_spacing() * std::sqrt(ep_min))
    throw CflViolation("dt exceeds the accuracy guard");
  // static detection: metric and e' constant in time
  bool static_coeffs = true;
  for (int i = 1; i < ms.n_times() && static_coeffs; ++i) {
    if ((ms.at[i].g - ms.at[0].g).cwiseAbs().maxCoeff() > 1e-14 ||
        (eprime[i] - eprime[0]).cwiseAbs().maxCoeff() > 1e-14)
      static_coeffs = false;
  }
  LinearWaveKernel kernel(ms.grid, ms.dt(), midpoint_coeffs(ms, eprime),
                          static_coeffs);
  // pi0 = e'(0) psi1 + (D_t e')(0) psi0
  VectorXd epdot0 = (eprime.size() > 2)
                        ? VectorXd(fd_time1(eprime, ms.dt(), 0))
                        : VectorXd(VectorXd::Zero(psi0.size()));
  VectorXd pi0 = eprime[0].cwiseProduct(psi1) + epdot0.cwiseProduct(psi0);
  return kernel.run(f, psi0, pi0);
}

std::vector<VectorXd> quadratic_forcing(const MetricSeries& ms,
                                        const std::vector<MatrixXd>& v) {
  const int nt = ms.n_times();
  const int n = ms.grid->dim();
  std::vector<VectorXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    const MatrixXd dv = eulerian_jacobian(ms.at[t], v[t]);  // col j*n+i = d_i V^j
    VectorXd f = VectorXd::Zero(ms.grid->n_nodes());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        f += dv.col(j * n + i).cwiseProduct(dv.col(i * n + j));
    out[t] = f;
  }
  return out;
}

EnthalpyResult solve_enthalpy(const MetricSeries& ms,
                              const std::vector<MatrixXd>& v_series,
                              const EnthalpyLaw& law, const VectorXd& h0,
                              const VectorXd& hdot0, const WaveOptions& opts,
                              bool force_nonlinear_path) {
  const PolarGrid& grid = *ms.grid;
  const int nt = ms.n_times();
  const int nn = grid.n_nodes();
  const int nin = grid.n_interior();
  const double dt = ms.dt();
  const std::vector<VectorXd> f = quadratic_forcing(ms, v_series);

  EnthalpyResult out;
  out.h.resize(nt);
  out.pi.resize(nt);
  out.margin.resize(nt);

  if (law.linear && !force_nonlinear_path) {
    std::vector<VectorXd> eprime(nt, VectorXd::Constant(nn, law.c));
    auto traj = step_wave(ms, eprime, f, h0, hdot0, opts);
    out.h = traj.psi;
    out.pi = traj.pi;
  } else {
    // Newton midpoint for D_t(e'(h) D_t h) - lap h = f (17.1)
    const VectorXd& w = grid.quad_weights();
    out.h[0] = h0;
    for (int b : grid.boundary_nodes()) out.h[0][b] = 0.0;
    out.pi[0] = law.de_of(h0).cwiseProduct(hdot0);
    for (int s = 0; s + 1 < nt; ++s) {
      const MetricData& m0 = ms.at[s];
      const MetricData& m1 = ms.at[s + 1];
      const VectorXd wk = 0.5 * w.cwiseProduct(m0.kappa + m1.kappa);
      const VectorXd mu00 = 0.5 * w.cwiseProduct(m0.kappa.cwiseProduct(m0.g_inv.col(0)) +
                                                 m1.kappa.cwiseProduct(m1.g_inv.col(0)));
      const VectorXd mu01 = 0.5 * w.cwiseProduct(m0.kappa.cwiseProduct(m0.g_inv.col(1)) +
                                                 m1.kappa.cwiseProduct(m1.g_inv.col(1)));
      const VectorXd mu11 = 0.5 * w.cwiseProduct(m0.kappa.cwiseProduct(m0.g_inv.col(3)) +
                                                 m1.kappa.cwiseProduct(m1.g_inv.col(3)));
      const VectorXd fm = 0.5 * (f[s] + f[s + 1]);
      const VectorXd& hn = out.h[s];
      const VectorXd& pin = out.pi[s];
      VectorXd u = hn;  // initial guess
      bool converged = false;
      for (int it = 0; it < opts.newton_max; ++it) {
        const VectorXd hm = 0.5 * (hn + u);
        const VectorXd ephm = law.de_of(hm);
        VectorXd G = wk.cwiseProduct(ephm).cwiseProduct(u - hn) +
                     0.5 * dt * dt *
                         LinearWaveKernel::weak_apply(grid, mu00, mu01, mu11, hm) -
                     dt * wk.cwiseProduct(pin) -
                     0.5 * dt * dt * wk.cwiseProduct(fm);
        const double gn = G.head(nin).cwiseAbs().maxCoeff();
        const double scale =
            std::max({1.0, u.cwiseAbs().maxCoeff(), hn.cwiseAbs().maxCoeff()});
        if (gn <= opts.newton_tol * scale) {
          converged = true;
          break;
        }
        const VectorXd jdiag =
            wk.cwiseProduct(ephm +
                            0.5 * law.d2e_of(hm).cwiseProduct(u - hn));
        MatrixXd J = assemble_weak_stiffness(grid, mu00, mu01, mu11);
        J *= 0.25 * dt * dt;
        J.diagonal() += jdiag.head(nin);
        Eigen::PartialPivLU<MatrixXd> lu(J);
        u.head(nin) -= lu.solve(G.head(nin));
      }
      if (!converged) throw NonlinearSolveFailed("enthalpy Newton stage stalled");
      const VectorXd hm = 0.5 * (hn + u);
      const VectorXd lap =
          -LinearWaveKernel::weak_apply(grid, mu00, mu01, mu11, hm).cwiseQuotient(wk);
      out.h[s + 1] = zero_boundary(grid, u);
      out.pi[s + 1] = zero_boundary(grid, pin + dt * (lap + fm));
    }
  }

  for (int t = 0; t < nt; ++t) {
    out.margin[t] = physical_margin(ms.at[t], out.h[t]);
    if (out.margin[t] <= 0.0) out.condition_lost = true;
  }
  return out;
}

MatrixXd wave_energy(const MetricSeries& ms, const std::vector<VectorXd>& psi,
                     const std::vector<VectorXd>& eprime, int rmax,
                     const std::vector<MatrixXd>* F1) {
  const PolarGrid& grid = *ms.grid;
  const int nt = ms.n_times();
  const int n = grid.dim();
  const VectorXd& w = grid.quad_weights();

  // Psi^a = g^{ab} d_b psi + F1^a per time
  std::vector<MatrixXd> Psi(nt);
  for (int t = 0; t < nt; ++t) {
    MatrixXd G(grid.n_nodes(), n);
    VectorXd d0 = grid.d(psi[t], 0), d1 = grid.d(psi[t], 1);
    for (int a = 0; a < n; ++a)
      G.col(a) = ms.at[t].g_inv.col(a * n + 0).cwiseProduct(d0) +
                 ms.at[t].g_inv.col(a * n + 1).cwiseProduct(d1);
    if (F1) G += (*F1)[t];
    Psi[t] = G;
  }

  MatrixXd E(nt, rmax);
  std::vector<VectorXd> dts = psi;           // D_t^s psi, s starting at 0
  std::vector<MatrixXd> hat = Psi;           // Dhat_t^s Psi
  MatrixXd acc = MatrixXd::Zero(nt, rmax);   // accumulated squares
  for (int s = 0; s < rmax; ++s) {
    // advance psi to D_t^{s+1}
    std::vector<VectorXd> next(nt);
    for (int t = 0; t < nt; ++t) next[t] = fd_time1(dts, ms.dt(), t);
    dts = std::move(next);
    for (int t = 0; t < nt; ++t) {
      double e = 0.0;
      e += 0.5 * w.cwiseProduct(ms.at[t].kappa)
                .cwiseProduct(eprime[t])
                .dot(dts[t].cwiseAbs2());
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          e += 0.5 * w.cwiseProduct(ms.at[t].kappa)
                    .cwiseProduct(ms.at[t].g.col(a * n + b))
                    .cwiseProduct(hat[t].col(a))
                    .dot(hat[t].col(b));
      acc(t, s) = e + (s > 0 ? acc(t, s - 1) : 0.0);
      E(t, s) = std::sqrt(acc(t, s));
    }
    if (s + 1 < rmax) {
      // advance Psi to Dhat^{s+1}
      std::vector<MatrixXd> weighted(nt);
      for (int t = 0; t < nt; ++t) {
        weighted[t] = hat[t];
        for (int c = 0; c < n; ++c)
          weighted[t].col(c) = ms.at[t].kappa.cwiseProduct(weighted[t].col(c));
      }
      for (int t = 0; t < nt; ++t) {
        MatrixXd d = fd_time1(weighted, ms.dt(), t);
        for (int c = 0; c < n; ++c)
          hat[t].col(c) = d.col(c).cwiseQuotient(ms.at[t].kappa);
      }
    }
  }
  return E;
}

DivergenceFormResult solve_divergence_form(
    const MetricSeries& ms, const std::vector<VectorXd>& eprime,
    const std::vector<VectorXd>& f,
    const std::vector<const DirichletSolver*>& solvers, const WaveOptions& opts) {
  const int nt = ms.n_times();
  const int nn = ms.grid->n_nodes();
  if (vanishing_order_defect(f, ms.dt(), 2) >
      1e-6 * std::max(1.0, f[nt - 1].cwiseAbs().maxCoeff()))
    throw ConfigInvalid("divergence-form forcing must vanish at t=0");
  auto traj = step_wave(ms, eprime, f, VectorXd::Zero(nn), VectorXd::Zero(nn), opts);
  DivergenceFormResult out;
  out.phi.resize(nt);
  out.q.resize(nt);
  out.qprime.resize(nt);
  out.W1.resize(nt);
  out.F1.resize(nt);
  for (int t = 0; t < nt; ++t) {
    out.phi[t] = eprime[t].cwiseProduct(traj.psi[t]);
    out.q[t] = solvers[t]->solve(out.phi[t]);
    out.W1[t] = solvers[t]->metric_gradient(out.q[t]);
    out.qprime[t] = solvers[t]->solve(f[t]);
    out.F1[t] = solvers[t]->metric_gradient(out.qprime[t]);
  }
  return out;
}

double projection_identity_residual(const MetricSeries& ms,
                                    const std::vector<MatrixXd>& W1,
                                    const std::vector<const DirichletSolver*>& solvers,
                                    int j, int time_index) {
  const int nt = ms.n_times();
  const int n = ms.grid->dim();
  // Dhat^i W1 series for i = 0..j
  std::vector<std::vector<MatrixXd>> hat(j + 1);
  hat[0] = W1;
  for (int i = 1; i <= j; ++i) {
    std::vector<MatrixXd> weighted(nt);
    for (int t = 0; t < nt; ++t) {
      weighted[t] = hat[i - 1][t];
      for (int c = 0; c < n; ++c)
        weighted[t].col(c) = ms.at[t].kappa.cwiseProduct(weighted[t].col(c));
    }
    hat[i].resize(nt);
    for (int t = 0; t < nt; ++t) {
      MatrixXd d = fd_time1(weighted, ms.dt(), t);
      for (int c = 0; c < n; ++c)
        d.col(c) = d.col(c).cwiseQuotient(ms.at[t].kappa);
      hat[i][t] = d;
    }
  }
  // check-Dt^k g series
  std::vector<std::vector<MatrixXd>> chk(j + 1);
  chk[0].resize(nt);
  for (int t = 0; t < nt; ++t) chk[0][t] = ms.at[t].g;
  for (int i = 1; i <= j; ++i) {
    std::vector<MatrixXd> weighted(nt);
    for (int t = 0; t < nt; ++t) {
      weighted[t] = chk[i - 1][t];
      for (int c = 0; c < weighted[t].cols(); ++c)
        weighted[t].col(c) = weighted[t].col(c).cwiseQuotient(ms.at[t].kappa);
    }
    chk[i].resize(nt);
    for (int t = 0; t < nt; ++t) {
      MatrixXd d = fd_time1(weighted, ms.dt(), t);
      for (int c = 0; c < d.cols(); ++c)
        d.col(c) = ms.at[t].kappa.cwiseProduct(d.col(c));
      chk[i][t] = d;
    }
  }
  const int t = time_index;
  auto binom = [](int nn_, int kk_) {
    double b = 1.0;
    for (int q = 0; q < kk_; ++q) b = b * (nn_ - q) / (q + 1);
    return b;
  };
  // B_j = -sum_{i<j} binom(j,i) raise((check^{j-i} g)_{ab} hat^i W1^b)
  MatrixXd Bj = MatrixXd::Zero(ms.grid->n_nodes(), n);
  for (int i = 0; i < j; ++i) {
    MatrixXd low(ms.grid->n_nodes(), n);
    for (int a = 0; a < n; ++a) {
      VectorXd tsum = VectorXd::Zero(ms.grid->n_nodes());
      for (int b = 0; b < n; ++b)
        tsum += chk[j - i][t].col(a * n + b).cwiseProduct(hat[i][t].col(b));
      low.col(a) = tsum;
    }
    MatrixXd up(ms.grid->n_nodes(), n);
    for (int a = 0; a < n; ++a) {
      VectorXd tsum = VectorXd::Zero(ms.grid->n_nodes());
      for (int b = 0; b < n; ++b)
        tsum += ms.at[t].g_inv.col(a * n + b).cwiseProduct(low.col(b));
      up.col(a) = tsum;
    }
    Bj -= binom(j, i) * up;
  }
  const MatrixXd lhs = solvers[t]->project_divfree(hat[j][t]);
  const MatrixXd rhs = solvers[t]->project_divfree(Bj);
  const double scale = std::max(1.0, lhs.cwiseAbs().maxCoeff());
  return (lhs - rhs).cwiseAbs().maxCoeff() / scale;
}

double vanishing_order_defect(const std::vector<VectorXd>& series, double dt, int k) {
  double worst = 0.0;
  for (int kk = 0; kk <= k; ++kk) {
    const int npts = kk + 2;
    if (static_cast<int>(series.size()) < npts) break;
    worst = std::max(worst,
                     fd_time_deriv_at_start(series, dt, kk, npts).cwiseAbs().maxCoeff() *
                         std::pow(dt, kk));
  }
  return worst;
}

}  // namespace fbeuler

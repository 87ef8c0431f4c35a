#include "fbeuler/euler.hpp"

#include <cmath>
#include <functional>
#include <iostream>

#include "fbeuler/calculus.hpp"
#include "fbeuler/errors.hpp"

namespace fbeuler {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// packed per-node 2x2 algebra; column i*2+j holds M(i,j)
MatrixXd pk_mul(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd C(A.rows(), 4);
  C.col(0) = A.col(0).cwiseProduct(B.col(0)) + A.col(1).cwiseProduct(B.col(2));
  C.col(1) = A.col(0).cwiseProduct(B.col(1)) + A.col(1).cwiseProduct(B.col(3));
  C.col(2) = A.col(2).cwiseProduct(B.col(0)) + A.col(3).cwiseProduct(B.col(2));
  C.col(3) = A.col(2).cwiseProduct(B.col(1)) + A.col(3).cwiseProduct(B.col(3));
  return C;
}

MatrixXd pk_transpose(const MatrixXd& A) {
  MatrixXd C(A.rows(), 4);
  C.col(0) = A.col(0);
  C.col(1) = A.col(2);
  C.col(2) = A.col(1);
  C.col(3) = A.col(3);
  return C;
}

VectorXd pk_trace(const MatrixXd& A) { return A.col(0) + A.col(3); }

// apply packed matrix (index pattern M(a,b), col a*2+b) to vector components:
// out^a = sum_b M(a,b) V^b
MatrixXd pk_apply(const MatrixXd& M, const MatrixXd& V) {
  MatrixXd out(V.rows(), 2);
  out.col(0) = M.col(0).cwiseProduct(V.col(0)) + M.col(1).cwiseProduct(V.col(1));
  out.col(1) = M.col(2).cwiseProduct(V.col(0)) + M.col(3).cwiseProduct(V.col(1));
  return out;
}

// gradient matrix D(q) packed as col a: d_a q
MatrixXd grad_y(const PolarGrid& g, const VectorXd& q) {
  MatrixXd out(q.size(), 2);
  out.col(0) = g.d(q, 0);
  out.col(1) = g.d(q, 1);
  return out;
}

// jac variation from a displacement slice: col i*2+a = d_a dx^i
MatrixXd jac_of(const PolarGrid& g, const MatrixXd& dx) {
  MatrixXd out(dx.rows(), 4);
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a) out.col(i * 2 + a) = g.d(dx.col(i), a);
  return out;
}

// Eulerian derivative matrix of components: col c*2+i = d_i comp_c given
// packed jac_inv (col a*2+i)
MatrixXd eul_jac(const PolarGrid& g, const MatrixXd& jac_inv, const MatrixXd& comps) {
  const int nc = static_cast<int>(comps.cols());
  MatrixXd out(comps.rows(), nc * 2);
  for (int c = 0; c < nc; ++c) {
    VectorXd d0 = g.d(comps.col(c), 0), d1 = g.d(comps.col(c), 1);
    for (int i = 0; i < 2; ++i)
      out.col(c * 2 + i) =
          jac_inv.col(0 * 2 + i).cwiseProduct(d0) + jac_inv.col(1 * 2 + i).cwiseProduct(d1);
  }
  return out;
}

VectorXd colloc_div(const MetricData& m, const MatrixXd& W) {
  const PolarGrid& g = *m.grid;
  VectorXd out = g.d(m.kappa.cwiseProduct(W.col(0)), 0) +
                 g.d(m.kappa.cwiseProduct(W.col(1)), 1);
  return out.cwiseQuotient(m.kappa);
}

VectorXd colloc_lap(const MetricData& m, const VectorXd& q) {
  const PolarGrid& g = *m.grid;
  VectorXd d0 = g.d(q, 0), d1 = g.d(q, 1);
  VectorXd f0 = m.g_inv.col(0).cwiseProduct(d0) + m.g_inv.col(1).cwiseProduct(d1);
  VectorXd f1 = m.g_inv.col(2).cwiseProduct(d0) + m.g_inv.col(3).cwiseProduct(d1);
  VectorXd out = g.d(m.kappa.cwiseProduct(f0), 0) + g.d(m.kappa.cwiseProduct(f1), 1);
  return out.cwiseQuotient(m.kappa);
}

// first-order metric variation bundle at one time slice
struct MetricVar {
  MatrixXd djac, djacinv, dg, dginv;
  VectorXd dkappa;
};

MetricVar metric_variation(const MetricData& m, const MatrixXd& dx_slice) {
  MetricVar v;
  const PolarGrid& g = *m.grid;
  v.djac = jac_of(g, dx_slice);
  const MatrixXd ji = m.jac_inv;
  v.djacinv = pk_mul(ji, pk_mul(v.djac, ji));
  v.djacinv = -v.djacinv;
  v.dkappa = m.kappa.cwiseProduct(pk_trace(pk_mul(ji, v.djac)));
  v.dg = pk_mul(pk_transpose(v.djac), m.jac) + pk_mul(pk_transpose(m.jac), v.djac);
  v.dginv = -pk_mul(m.g_inv, pk_mul(v.dg, m.g_inv));
  return v;
}

// mixed second variation given the two first-order bundles
struct MetricVar2 {
  MatrixXd d2jacinv, d2g, d2ginv;
  VectorXd d2kappa;
};

MetricVar2 metric_second_variation(const MetricData& m, const MetricVar& a,
                                   const MetricVar& b) {
  MetricVar2 v;
  const MatrixXd& ji = m.jac_inv;
  const MatrixXd jiA = pk_mul(ji, a.djac);
  const MatrixXd jiB = pk_mul(ji, b.djac);
  v.d2jacinv = pk_mul(jiA, pk_mul(jiB, ji)) + pk_mul(jiB, pk_mul(jiA, ji));
  v.d2kappa = m.kappa.cwiseProduct(
      pk_trace(jiA).cwiseProduct(pk_trace(jiB)) - pk_trace(pk_mul(jiA, jiB)));
  v.d2g = pk_mul(pk_transpose(a.djac), b.djac) + pk_mul(pk_transpose(b.djac), a.djac);
  const MatrixXd& gi = m.g_inv;
  v.d2ginv = pk_mul(gi, pk_mul(a.dg, pk_mul(gi, pk_mul(b.dg, gi)))) +
             pk_mul(gi, pk_mul(b.dg, pk_mul(gi, pk_mul(a.dg, gi)))) -
             pk_mul(gi, pk_mul(v.d2g, gi));
  return v;
}

std::vector<MatrixXd> fd1_series(const std::vector<MatrixXd>& s, double dt) {
  std::vector<MatrixXd> out(s.size());
  for (size_t i = 0; i < s.size(); ++i)
    out[i] = fd_time1(s, dt, static_cast<int>(i));
  return out;
}

std::vector<VectorXd> fd1_series_v(const std::vector<VectorXd>& s, double dt) {
  std::vector<VectorXd> out(s.size());
  for (size_t i = 0; i < s.size(); ++i)
    out[i] = fd_time1(s, dt, static_cast<int>(i));
  return out;
}

// kappa-weighted hat derivative of a component series
std::vector<MatrixXd> hat_series(const std::vector<MatrixXd>& s,
                                 const MetricSeries& ms) {
  const int nt = static_cast<int>(s.size());
  std::vector<MatrixXd> weighted(nt);
  for (int t = 0; t < nt; ++t) {
    weighted[t] = s[t];
    for (int c = 0; c < weighted[t].cols(); ++c)
      weighted[t].col(c) = ms.at[t].kappa.cwiseProduct(weighted[t].col(c));
  }
  std::vector<MatrixXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    out[t] = fd_time1(weighted, ms.dt(), t);
    for (int c = 0; c < out[t].cols(); ++c)
      out[t].col(c) = out[t].col(c).cwiseQuotient(ms.at[t].kappa);
  }
  return out;
}

std::vector<MatrixXd> check_series_m(const std::vector<MatrixXd>& s,
                                     const MetricSeries& ms) {
  const int nt = static_cast<int>(s.size());
  std::vector<MatrixXd> weighted(nt);
  for (int t = 0; t < nt; ++t) {
    weighted[t] = s[t];
    for (int c = 0; c < weighted[t].cols(); ++c)
      weighted[t].col(c) = weighted[t].col(c).cwiseQuotient(ms.at[t].kappa);
  }
  std::vector<MatrixXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    out[t] = fd_time1(weighted, ms.dt(), t);
    for (int c = 0; c < out[t].cols(); ++c)
      out[t].col(c) = ms.at[t].kappa.cwiseProduct(out[t].col(c));
  }
  return out;
}

// quadratic forcing and its variations from packed Eulerian jacobians
VectorXd forcing_from(const MatrixXd& P) {
  // P col j*2+i = d_i V^j; f = sum_ij P(j,i) P(i,j)
  VectorXd f = P.col(0).cwiseAbs2() + P.col(3).cwiseAbs2() +
               2.0 * P.col(1).cwiseProduct(P.col(2));
  return f;
}

}  // namespace

EulerWorkspace make_euler_workspace(GridPtr grid, const VectorXd& t_nodes,
                                    const std::vector<MatrixXd>& x,
                                    const EnthalpyLaw& law, const VectorXd& h0,
                                    const VectorXd& hdot0, bool with_solvers) {
  EulerWorkspace ws;
  ws.grid = grid;
  ws.t_nodes = t_nodes;
  ws.law = law;
  ws.x = x;
  const double dt = t_nodes[1] - t_nodes[0];
  ws.v = fd1_series(x, dt);

  LagrangianState st;
  st.grid = grid;
  st.t_nodes = t_nodes;
  st.x = x;
  ws.ms = build_metric_series(st);

  ws.f = quadratic_forcing(ws.ms, ws.v);
  const int nt = static_cast<int>(t_nodes.size());
  const int nn = grid->n_nodes();

  if (law.linear) {
    ws.eprime.assign(nt, VectorXd::Constant(nn, law.c));
  }
  // enthalpy solve through the kernel so the trajectory and kernel share
  // factorizations with the linearizations
  if (law.linear) {
    LinearWaveKernel::Coeffs probe;
    bool static_coeffs = true;
    for (int i = 1; i < nt && static_coeffs; ++i)
      if ((ws.ms.at[i].g - ws.ms.at[0].g).cwiseAbs().maxCoeff() > 1e-14)
        static_coeffs = false;
    ws.kernel = std::make_shared<LinearWaveKernel>(
        grid, dt, midpoint_coeffs(ws.ms, ws.eprime), static_coeffs);
    VectorXd pi0 = law.c * hdot0;
    ws.h_traj = ws.kernel->run(ws.f, h0, pi0);
    ws.enthalpy.h = ws.h_traj.psi;
    ws.enthalpy.pi = ws.h_traj.pi;
    ws.enthalpy.margin.resize(nt);
    for (int t = 0; t < nt; ++t) {
      ws.enthalpy.margin[t] = physical_margin(ws.ms.at[t], ws.enthalpy.h[t]);
      if (ws.enthalpy.margin[t] <= 0.0) ws.enthalpy.condition_lost = true;
    }
  } else {
    ws.enthalpy = solve_enthalpy(ws.ms, ws.v, law, h0, hdot0);
    ws.eprime.resize(nt);
    for (int t = 0; t < nt; ++t) ws.eprime[t] = law.de_of(ws.enthalpy.h[t]);
    ws.kernel = std::make_shared<LinearWaveKernel>(
        grid, dt, midpoint_coeffs(ws.ms, ws.eprime), false);
    ws.h_traj.psi = ws.enthalpy.h;
    ws.h_traj.pi = ws.enthalpy.pi;
  }

  if (with_solvers) {
    ws.solvers.resize(nt);
    for (int t = 0; t < nt; ++t)
      ws.solvers[t] = std::make_shared<DirichletSolver>(grid, ws.ms.at[t]);
  }
  return ws;
}

std::vector<MatrixXd> euler_residual(const EulerWorkspace& ws) {
  const int nt = ws.n_times();
  std::vector<MatrixXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    MatrixXd acc = fd_time2(ws.x, ws.dt(), t);
    const MatrixXd dh = grad_y(*ws.grid, ws.enthalpy.h[t]);
    for (int i = 0; i < 2; ++i)
      acc.col(i) += ws.ms.at[t].jac_inv.col(0 * 2 + i).cwiseProduct(dh.col(0)) +
                    ws.ms.at[t].jac_inv.col(1 * 2 + i).cwiseProduct(dh.col(1));
    out[t] = acc;
  }
  return out;
}

std::vector<MatrixXd> euler_residual_pinned(GridPtr grid, const VectorXd& t_nodes,
                                            const std::vector<MatrixXd>& x,
                                            const std::vector<VectorXd>& h) {
  const double dt = t_nodes[1] - t_nodes[0];
  const int nt = static_cast<int>(t_nodes.size());
  std::vector<MatrixXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    MetricData m = build_metric_slice(grid, x[t]);
    MatrixXd acc = fd_time2(x, dt, t);
    const MatrixXd dh = grad_y(*grid, h[t]);
    for (int i = 0; i < 2; ++i)
      acc.col(i) += m.jac_inv.col(0 * 2 + i).cwiseProduct(dh.col(0)) +
                    m.jac_inv.col(1 * 2 + i).cwiseProduct(dh.col(1));
    out[t] = acc;
  }
  return out;
}

namespace {

struct VariationBundle {
  std::vector<MetricVar> mv;                      // per time
  std::vector<MatrixXd> dv;                       // velocity variation
  std::vector<VectorXd> df;                       // forcing variation
  std::vector<LinearWaveKernel::TangentCoeffs> dc;  // kernel coefficient variations
};

VariationBundle build_variation(const EulerWorkspace& ws,
                                const std::vector<MatrixXd>& dx) {
  if (!ws.law.linear)
    throw NonlinearDiverged("linearizations implemented for the linear law");
  const int nt = ws.n_times();
  const PolarGrid& g = *ws.grid;
  VariationBundle b;
  b.mv.reserve(nt);
  for (int t = 0; t < nt; ++t) b.mv.push_back(metric_variation(ws.ms.at[t], dx[t]));
  b.dv = fd1_series(dx, ws.dt());
  b.df.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const MatrixXd P = eul_jac(g, ws.ms.at[t].jac_inv, ws.v[t]);
    MatrixXd dP = eul_jac(g, b.mv[t].djacinv, ws.v[t]) +
                  eul_jac(g, ws.ms.at[t].jac_inv, b.dv[t]);
    // d f = 2 sum_ij dP(j,i) P(i,j)
    b.df[t] = 2.0 * (dP.col(0).cwiseProduct(P.col(0)) + dP.col(1).cwiseProduct(P.col(2)) +
                     dP.col(2).cwiseProduct(P.col(1)) + dP.col(3).cwiseProduct(P.col(3)));
  }
  const VectorXd& w = g.quad_weights();
  b.dc.resize(nt - 1);
  const int nn = g.n_nodes();
  for (int s = 0; s + 1 < nt; ++s) {
    auto kg = [&](int t, int col) {
      return VectorXd(b.mv[t].dkappa.cwiseProduct(ws.ms.at[t].g_inv.col(col)) +
                      ws.ms.at[t].kappa.cwiseProduct(b.mv[t].dginv.col(col)));
    };
    b.dc[s].wk = 0.5 * w.cwiseProduct(b.mv[s].dkappa + b.mv[s + 1].dkappa);
    b.dc[s].ep = VectorXd::Zero(nn);
    b.dc[s].epdot = VectorXd::Zero(nn);
    b.dc[s].mu00 = 0.5 * w.cwiseProduct(kg(s, 0) + kg(s + 1, 0));
    b.dc[s].mu01 = 0.5 * w.cwiseProduct(kg(s, 1) + kg(s + 1, 1));
    b.dc[s].mu11 = 0.5 * w.cwiseProduct(kg(s, 3) + kg(s + 1, 3));
  }
  return b;
}

std::vector<MatrixXd> assemble_phi_prime(const EulerWorkspace& ws,
                                         const std::vector<MatrixXd>& dx,
                                         const VariationBundle& b,
                                         const LinearWaveKernel::Trajectory& dh) {
  const int nt = ws.n_times();
  const PolarGrid& g = *ws.grid;
  std::vector<MatrixXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    MatrixXd acc = fd_time2(dx, ws.dt(), t);
    const MatrixXd dgrad_h = grad_y(g, ws.enthalpy.h[t]);
    const MatrixXd dgrad_dh = grad_y(g, dh.psi[t]);
    for (int i = 0; i < 2; ++i) {
      acc.col(i) += b.mv[t].djacinv.col(0 * 2 + i).cwiseProduct(dgrad_h.col(0)) +
                    b.mv[t].djacinv.col(1 * 2 + i).cwiseProduct(dgrad_h.col(1));
      acc.col(i) += ws.ms.at[t].jac_inv.col(0 * 2 + i).cwiseProduct(dgrad_dh.col(0)) +
                    ws.ms.at[t].jac_inv.col(1 * 2 + i).cwiseProduct(dgrad_dh.col(1));
    }
    out[t] = acc;
  }
  return out;
}

}  // namespace

std::vector<MatrixXd> linearized_apply(const EulerWorkspace& ws,
                                       const std::vector<MatrixXd>& dx) {
  const int nn = ws.grid->n_nodes();
  VariationBundle b = build_variation(ws, dx);
  const auto dh = ws.kernel->run_tangent(ws.h_traj, ws.f, b.dc, b.df,
                                         VectorXd::Zero(nn), VectorXd::Zero(nn));
  return assemble_phi_prime(ws, dx, b, dh);
}

std::vector<MatrixXd> second_variation(const EulerWorkspace& ws,
                                       const std::vector<MatrixXd>& dx,
                                       const std::vector<MatrixXd>& ex) {
  const int nt = ws.n_times();
  const int nn = ws.grid->n_nodes();
  const PolarGrid& g = *ws.grid;
  VariationBundle bd = build_variation(ws, dx);
  VariationBundle be = build_variation(ws, ex);
  const auto dh_d = ws.kernel->run_tangent(ws.h_traj, ws.f, bd.dc, bd.df,
                                           VectorXd::Zero(nn), VectorXd::Zero(nn));
  const auto dh_e = ws.kernel->run_tangent(ws.h_traj, ws.f, be.dc, be.df,
                                           VectorXd::Zero(nn), VectorXd::Zero(nn));

  // mixed second-order bundles
  std::vector<MetricVar2> mv2(nt);
  std::vector<VectorXd> d2f(nt);
  for (int t = 0; t < nt; ++t) {
    mv2[t] = metric_second_variation(ws.ms.at[t], bd.mv[t], be.mv[t]);
    const MatrixXd P = eul_jac(g, ws.ms.at[t].jac_inv, ws.v[t]);
    const MatrixXd dP = eul_jac(g, bd.mv[t].djacinv, ws.v[t]) +
                        eul_jac(g, ws.ms.at[t].jac_inv, bd.dv[t]);
    const MatrixXd eP = eul_jac(g, be.mv[t].djacinv, ws.v[t]) +
                        eul_jac(g, ws.ms.at[t].jac_inv, be.dv[t]);
    const MatrixXd d2P = eul_jac(g, mv2[t].d2jacinv, ws.v[t]) +
                         eul_jac(g, bd.mv[t].djacinv, be.dv[t]) +
                         eul_jac(g, be.mv[t].djacinv, bd.dv[t]);
    d2f[t] = 2.0 * (d2P.col(0).cwiseProduct(P.col(0)) + d2P.col(1).cwiseProduct(P.col(2)) +
                    d2P.col(2).cwiseProduct(P.col(1)) + d2P.col(3).cwiseProduct(P.col(3)));
    d2f[t] += 2.0 * (dP.col(0).cwiseProduct(eP.col(0)) + dP.col(1).cwiseProduct(eP.col(2)) +
                     dP.col(2).cwiseProduct(eP.col(1)) + dP.col(3).cwiseProduct(eP.col(3)));
  }
  const VectorXd& w = g.quad_weights();
  std::vector<LinearWaveKernel::TangentCoeffs> d2c(nt - 1);
  for (int s = 0; s + 1 < nt; ++s) {
    auto kg2 = [&](int t, int col) {
      return VectorXd(
          mv2[t].d2kappa.cwiseProduct(ws.ms.at[t].g_inv.col(col)) +
          bd.mv[t].dkappa.cwiseProduct(be.mv[t].dginv.col(col)) +
          be.mv[t].dkappa.cwiseProduct(bd.mv[t].dginv.col(col)) +
          ws.ms.at[t].kappa.cwiseProduct(mv2[t].d2ginv.col(col)));
    };
    d2c[s].wk = 0.5 * w.cwiseProduct(mv2[s].d2kappa + mv2[s + 1].d2kappa);
    d2c[s].ep = VectorXd::Zero(nn);
    d2c[s].epdot = VectorXd::Zero(nn);
    d2c[s].mu00 = 0.5 * w.cwiseProduct(kg2(s, 0) + kg2(s + 1, 0));
    d2c[s].mu01 = 0.5 * w.cwiseProduct(kg2(s, 1) + kg2(s + 1, 1));
    d2c[s].mu11 = 0.5 * w.cwiseProduct(kg2(s, 3) + kg2(s + 1, 3));
  }

  const auto h2 = ws.kernel->run_second(ws.h_traj, ws.f, bd.dc, bd.df, dh_d, be.dc,
                                        be.df, dh_e, d2c, d2f);

  std::vector<MatrixXd> out(nt);
  for (int t = 0; t < nt; ++t) {
    MatrixXd acc = MatrixXd::Zero(nn, 2);
    const MatrixXd gh = grad_y(g, ws.enthalpy.h[t]);
    const MatrixXd gd = grad_y(g, dh_d.psi[t]);
    const MatrixXd ge = grad_y(g, dh_e.psi[t]);
    const MatrixXd g2 = grad_y(g, h2.psi[t]);
    for (int i = 0; i < 2; ++i) {
      acc.col(i) += mv2[t].d2jacinv.col(0 * 2 + i).cwiseProduct(gh.col(0)) +
                    mv2[t].d2jacinv.col(1 * 2 + i).cwiseProduct(gh.col(1));
      acc.col(i) += bd.mv[t].djacinv.col(0 * 2 + i).cwiseProduct(ge.col(0)) +
                    bd.mv[t].djacinv.col(1 * 2 + i).cwiseProduct(ge.col(1));
      acc.col(i) += be.mv[t].djacinv.col(0 * 2 + i).cwiseProduct(gd.col(0)) +
                    be.mv[t].djacinv.col(1 * 2 + i).cwiseProduct(gd.col(1));
      acc.col(i) += ws.ms.at[t].jac_inv.col(0 * 2 + i).cwiseProduct(g2.col(0)) +
                    ws.ms.at[t].jac_inv.col(1 * 2 + i).cwiseProduct(g2.col(1));
    }
    out[t] = acc;
  }
  return out;
}

std::vector<VectorXd> div_phi(const EulerWorkspace& ws) {
  const int nt = ws.n_times();
  std::vector<VectorXd> divv(nt), eh(nt);
  for (int t = 0; t < nt; ++t) {
    divv[t] = colloc_div(ws.ms.at[t], ws.v[t]);
    eh[t] = ws.law.e_of(ws.enthalpy.h[t]);
  }
  std::vector<VectorXd> out(nt);
  for (int t = 0; t < nt; ++t)
    out[t] = fd_time1(divv, ws.dt(), t) + fd_time2(eh, ws.dt(), t);
  return out;
}

FrameSeries to_lagrangian(const EulerWorkspace& ws,
                          const std::vector<MatrixXd>& eulerian) {
  FrameSeries out;
  out.lagrangian = true;
  out.comps.resize(eulerian.size());
  for (size_t t = 0; t < eulerian.size(); ++t) {
    // W^a = (dy^a/dx^i) dx^i; packed jac_inv col a*2+i
    const MatrixXd& ji = ws.ms.at[t].jac_inv;
    MatrixXd W(eulerian[t].rows(), 2);
    W.col(0) = ji.col(0).cwiseProduct(eulerian[t].col(0)) +
               ji.col(1).cwiseProduct(eulerian[t].col(1));
    W.col(1) = ji.col(2).cwiseProduct(eulerian[t].col(0)) +
               ji.col(3).cwiseProduct(eulerian[t].col(1));
    out.comps[t] = W;
  }
  return out;
}

std::vector<MatrixXd> to_eulerian(const EulerWorkspace& ws, const FrameSeries& W) {
  if (!W.lagrangian) throw FrameMismatch("expected a Lagrangian-frame trajectory");
  std::vector<MatrixXd> out(W.comps.size());
  for (size_t t = 0; t < W.comps.size(); ++t) {
    // dx^i = (dx^i/dy^a) W^a; packed jac col i*2+a
    const MatrixXd& j = ws.ms.at[t].jac;
    MatrixXd E(W.comps[t].rows(), 2);
    E.col(0) = j.col(0).cwiseProduct(W.comps[t].col(0)) +
               j.col(1).cwiseProduct(W.comps[t].col(1));
    E.col(1) = j.col(2).cwiseProduct(W.comps[t].col(0)) +
               j.col(3).cwiseProduct(W.comps[t].col(1));
    out[t] = E;
  }
  return out;
}

namespace {

// two-form coefficient fields for B1 and B0 of (2.56)-(2.57); col b*2+c
struct BCoefficients {
  std::vector<MatrixXd> beta1, beta0;  // per time
  std::vector<VectorXd> d2eh;          // D_t^2 e(h)
  std::vector<MatrixXd> omega;         // vorticity two-form (2.46)
  std::vector<MatrixXd> gdot;          // D_t g
};

BCoefficients b_coefficients(const EulerWorkspace& ws) {
  const int nt = ws.n_times();
  const PolarGrid& g = *ws.grid;
  BCoefficients out;
  out.beta1.resize(nt);
  out.beta0.resize(nt);
  out.d2eh.resize(nt);
  out.omega.resize(nt);
  out.gdot.resize(nt);
  std::vector<MatrixXd> g_series(nt);
  std::vector<VectorXd> eh(nt);
  for (int t = 0; t < nt; ++t) {
    g_series[t] = ws.ms.at[t].g;
    eh[t] = ws.law.e_of(ws.enthalpy.h[t]);
  }
  for (int t = 0; t < nt; ++t) {
    out.gdot[t] = fd_time1(g_series, ws.dt(), t);
    out.d2eh[t] = fd_time2(eh, ws.dt(), t);
    // omega_ab = jac^T (dv - dv^T) jac with Eulerian derivatives of v
    const MatrixXd P = eul_jac(g, ws.ms.at[t].jac_inv, ws.v[t]);  // col j*2+i = d_i v^j
    MatrixXd curl(g.n_nodes(), 4);
    curl.col(0).setZero();
    curl.col(3).setZero();
    curl.col(1) = P.col(2) - P.col(1);  // d_0 v_1 - d_1 v_0 at (i,j)=(0,1)
    curl.col(2) = -curl.col(1);
    // pack as (i,j) with col i*2+j, then omega = jac^T curl jac
    out.omega[t] = pk_mul(pk_transpose(ws.ms.at[t].jac), pk_mul(curl, ws.ms.at[t].jac));
    const VectorXd& sdot = *ws.ms.at[t].sigma_dot;
    const VectorXd coef0 = out.d2eh[t] + sdot.cwiseAbs2();
    MatrixXd b1(g.n_nodes(), 4), b0(g.n_nodes(), 4);
    for (int c = 0; c < 4; ++c) {
      const VectorXd gm = out.gdot[t].col(c) - out.omega[t].col(c);
      b1.col(c) = -gm + 2.0 * sdot.cwiseProduct(ws.ms.at[t].g.col(c));
      b0.col(c) = sdot.cwiseProduct(gm) - coef0.cwiseProduct(ws.ms.at[t].g.col(c));
    }
    out.beta1[t] = b1;
    out.beta0[t] = b0;
  }
  return out;
}

// raise a lowered coefficient application: out^a = g^{ab} beta_bc W^c
MatrixXd raise_two_form_apply(const MetricData& m, const MatrixXd& beta,
                              const MatrixXd& W) {
  const MatrixXd low = pk_apply(beta, W);
  return pk_apply(m.g_inv, low);
}

}  // namespace

ModifiedApplyResult modified_linearized_apply(const EulerWorkspace& ws,
                                              const FrameSeries& W) {
  if (!W.lagrangian) throw FrameMismatch("L1 expects the Lagrangian frame");
  const int nt = ws.n_times();
  const int nn = ws.grid->n_nodes();
  const PolarGrid& g = *ws.grid;
  const BCoefficients bc = b_coefficients(ws);

  const auto Wdot = hat_series(W.comps, ws.ms);
  const auto Wddot = hat_series(Wdot, ws.ms);

  // delta-h wave equation (9.10)
  std::vector<VectorXd> rhs(nt);
  for (int t = 0; t < nt; ++t) {
    const MetricData& m = ws.ms.at[t];
    const VectorXd& sdot = *m.sigma_dot;
    const MatrixXd dh = grad_y(g, ws.enthalpy.h[t]);
    const VectorXd hw = dh.col(0).cwiseProduct(W.comps[t].col(0)) +
                        dh.col(1).cwiseProduct(W.comps[t].col(1));
    VectorXd r = colloc_lap(m, hw);
    r -= colloc_div(m, raise_two_form_apply(m, bc.beta1[t], Wdot[t]));
    r += 2.0 * sdot.cwiseProduct(colloc_div(m, Wdot[t]));
    r -= colloc_div(m, raise_two_form_apply(m, bc.beta0[t], W.comps[t]));
    r -= (bc.d2eh[t] + sdot.cwiseAbs2()).cwiseProduct(colloc_div(m, W.comps[t]));
    rhs[t] = r;
  }
  const auto dh_traj =
      ws.kernel->run(rhs, VectorXd::Zero(nn), VectorXd::Zero(nn));

  ModifiedApplyResult out;
  out.delta_h = dh_traj.psi;
  out.L1W.lagrangian = true;
  out.L1W.comps.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const MetricData& m = ws.ms.at[t];
    const MatrixXd dh = grad_y(g, ws.enthalpy.h[t]);
    const VectorXd hw = dh.col(0).cwiseProduct(W.comps[t].col(0)) +
                        dh.col(1).cwiseProduct(W.comps[t].col(1));
    const VectorXd s = hw - dh_traj.psi[t];
    const MatrixXd grad_s = grad_y(g, s);
    MatrixXd L = Wddot[t];
    for (int a = 0; a < 2; ++a)
      L.col(a) -= m.g_inv.col(a * 2 + 0).cwiseProduct(grad_s.col(0)) +
                  m.g_inv.col(a * 2 + 1).cwiseProduct(grad_s.col(1));
    L -= raise_two_form_apply(m, bc.beta1[t], Wdot[t]);
    L -= raise_two_form_apply(m, bc.beta0[t], W.comps[t]);
    out.L1W.comps[t] = L;
  }
  return out;
}

FrameSeries b3_apply(const EulerWorkspace& ws, const FrameSeries& W) {
  if (!W.lagrangian) throw FrameMismatch("B3 expects the Lagrangian frame");
  const int nt = ws.n_times();
  const PolarGrid& g = *ws.grid;
  const auto phi_eul = euler_residual(ws);
  const FrameSeries phi = to_lagrangian(ws, phi_eul);
  const auto dphi = div_phi(ws);
  FrameSeries out;
  out.lagrangian = true;
  out.comps.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const MetricData& m = ws.ms.at[t];
    // Christoffel symbols from spectral metric derivatives
    MatrixXd dgc[2];
    for (int c = 0; c < 2; ++c) {
      dgc[c].resize(g.n_nodes(), 4);
      for (int q = 0; q < 4; ++q) dgc[c].col(q) = g.d(m.g.col(q), c);
    }
    // nabla_c Phi^a = d_c Phi^a + Gamma^a_{cd} Phi^d
    MatrixXd nab(g.n_nodes(), 4);  // col c*2+a
    for (int c = 0; c < 2; ++c) {
      VectorXd d0 = g.d(phi.comps[t].col(0), c);
      VectorXd d1 = g.d(phi.comps[t].col(1), c);
      for (int a = 0; a < 2; ++a) {
        VectorXd acc = (a == 0) ? d0 : d1;
        for (int d = 0; d < 2; ++d) {
          // Gamma^a_{cd} = 1/2 g^{ae} (d_c g_ed + d_d g_ec - d_e g_cd)
          VectorXd gam = VectorXd::Zero(g.n_nodes());
          for (int e = 0; e < 2; ++e)
            gam += 0.5 * m.g_inv.col(a * 2 + e)
                       .cwiseProduct(dgc[c].col(e * 2 + d) + dgc[d].col(e * 2 + c) -
                                     dgc[e].col(c * 2 + d));
          acc += gam.cwiseProduct(phi.comps[t].col(d));
        }
        nab.col(c * 2 + a) = acc;
      }
    }
    MatrixXd B(g.n_nodes(), 2);
    for (int a = 0; a < 2; ++a) {
      B.col(a) = -(W.comps[t].col(0).cwiseProduct(nab.col(0 * 2 + a)) +
                   W.comps[t].col(1).cwiseProduct(nab.col(1 * 2 + a)));
      B.col(a) += W.comps[t].col(a).cwiseProduct(dphi[t]);
    }
    out.comps[t] = B;
  }
  return out;
}

EvolutionStepper::EvolutionStepper(const EulerWorkspace& ws,
                                   const std::vector<MatrixXd>* beta0,
                                   const std::vector<MatrixXd>* beta1)
    : ws_(ws) {
  const int nt = ws.n_times();
  const int nn = ws.grid->n_nodes();
  const int dim = 2 * nn;
  const double dt = ws.dt();
  static_ops_ = true;
  for (int t = 1; t < nt && static_ops_; ++t)
    if ((ws.x[t] - ws.x[0]).cwiseAbs().maxCoeff() > 1e-14 ||
        (ws.enthalpy.h[t] - ws.enthalpy.h[0]).cwiseAbs().maxCoeff() > 1e-13)
      static_ops_ = false;
  if (beta0 || beta1) static_ops_ = false;

  const int nsteps = nt - 1;
  const int nops = static_ops_ ? 1 : nsteps;
  mid_solvers_.resize(nops);
  h_mid_.resize(nops);
  sdot_mid_.resize(nops);
  lu_.resize(nops);
  m_right_.resize(nops);
  for (int s = 0; s < nops; ++s) {
    const MatrixXd jac_mid = 0.5 * (ws.ms.at[s].jac + ws.ms.at[s + 1].jac);
    const MetricData mm = metric_from_jacobian(ws.grid, jac_mid);
    mid_solvers_[s] = std::make_shared<DirichletSolver>(ws.grid, mm);
    h_mid_[s] = 0.5 * (ws.enthalpy.h[s] + ws.enthalpy.h[s + 1]);
    sdot_mid_[s] = (ws.ms.at[s + 1].sigma - ws.ms.at[s].sigma) / dt;

    MatrixXd A = dense_oracle_assemble(*mid_solvers_[s], OperatorTag::Normal,
                                       &h_mid_[s], nullptr);
    if (beta0) {
      Field b(Variance::TwoForm, 2, nn);
      b.data = 0.5 * ((*beta0)[s] + (*beta0)[s + 1]);
      A += dense_oracle_assemble(*mid_solvers_[s], OperatorTag::Multiplication,
                                 nullptr, &b);
    }
    MatrixXd B1 = MatrixXd::Zero(dim, dim);
    if (beta1) {
      Field b(Variance::TwoForm, 2, nn);
      b.data = 0.5 * ((*beta1)[s] + (*beta1)[s + 1]);
      B1 = dense_oracle_assemble(*mid_solvers_[s], OperatorTag::Multiplication,
                                 nullptr, &b);
    }
    // Op = [[Sdot, -I], [A, B1 + Sdot]] on (W, Z)
    MatrixXd Op = MatrixXd::Zero(2 * dim, 2 * dim);
    for (int c = 0; c < 2; ++c)
      Op.block(c * nn, c * nn, nn, nn).diagonal() = sdot_mid_[s];
    Op.block(0, dim, dim, dim) = -MatrixXd::Identity(dim, dim);
    Op.block(dim, 0, dim, dim) = A;
    Op.block(dim, dim, dim, dim) = B1;
    for (int c = 0; c < 2; ++c)
      Op.block(dim + c * nn, dim + c * nn, nn, nn).diagonal() += sdot_mid_[s];
    MatrixXd ML = MatrixXd::Identity(2 * dim, 2 * dim) + 0.5 * dt * Op;
    m_right_[s] = MatrixXd::Identity(2 * dim, 2 * dim) - 0.5 * dt * Op;
    lu_[s] = std::make_shared<Eigen::PartialPivLU<MatrixXd>>(ML);
  }
}

EvolutionResult EvolutionStepper::solve(const EvolutionInput& in) const {
  const int nt = ws_.n_times();
  const int nn = ws_.grid->n_nodes();
  const int dim = 2 * nn;
  const double dt = ws_.dt();
  EvolutionResult out;
  out.W.assign(nt, MatrixXd::Zero(nn, 2));
  out.Wdot.assign(nt, MatrixXd::Zero(nn, 2));
  if (in.W0.size()) out.W[0] = in.W0;
  if (in.Wdot0.size()) out.Wdot[0] = in.Wdot0;
  Eigen::VectorXd u(2 * dim);
  double wmax = 1e-300;
  for (int s = 0; s + 1 < nt; ++s) {
    const int idx = static_ops_ ? 0 : s;
    Eigen::VectorXd state(2 * dim);
    state.segment(0, nn) = out.W[s].col(0);
    state.segment(nn, nn) = out.W[s].col(1);
    state.segment(dim, nn) = out.Wdot[s].col(0);
    state.segment(dim + nn, nn) = out.Wdot[s].col(1);
    Eigen::VectorXd rhs = m_right_[idx] * state;
    const MatrixXd Hm = 0.5 * (in.H[s] + in.H[s + 1]);
    rhs.segment(dim, nn) += dt * Hm.col(0);
    rhs.segment(dim + nn, nn) += dt * Hm.col(1);
    u = lu_[idx]->solve(rhs);
    MatrixXd W1(nn, 2), Z1(nn, 2);
    W1.col(0) = u.segment(0, nn);
    W1.col(1) = u.segment(nn, nn);
    Z1.col(0) = u.segment(dim, nn);
    Z1.col(1) = u.segment(dim + nn, nn);
    // keep the trajectory in the divergence-free class
    if (!ws_.solvers.empty()) {
      W1 = ws_.solvers[s + 1]->project_divfree(W1);
      Z1 = ws_.solvers[s + 1]->project_divfree(Z1);
    }
    out.W[s + 1] = W1;
    out.Wdot[s + 1] = Z1;
    wmax = std::max(wmax, W1.cwiseAbs().maxCoeff());
  }
  if (!ws_.solvers.empty()) {
    for (int t = 0; t < nt; ++t) {
      const VectorXd d = ws_.solvers[t]->weak_divergence(out.W[t]);
      out.max_div = std::max(out.max_div, d.cwiseAbs().maxCoeff() / wmax);
    }
  }
  return out;
}

EvolutionResult divfree_evolution_solve(const EulerWorkspace& ws,
                                        const EvolutionInput& in) {
  if (ws.solvers.empty())
    throw ConfigInvalid("evolution solve needs the workspace solver cache");
  // precondition: div H = 0 to tolerance
  double hmax = 1e-300, dmax = 0.0;
  for (const auto& H : in.H) hmax = std::max(hmax, H.cwiseAbs().maxCoeff());
  for (int t = 0; t < ws.n_times(); ++t)
    dmax = std::max(dmax,
                    ws.solvers[t]->weak_divergence(in.H[t]).cwiseAbs().maxCoeff());
  if (dmax > 1e-6 * std::max(1.0, hmax))
    throw ConfigInvalid("evolution forcing must be divergence free");
  EvolutionStepper stepper(ws, in.beta0.empty() ? nullptr : &in.beta0,
                           in.beta1.empty() ? nullptr : &in.beta1);
  return stepper.solve(in);
}

namespace {

// Cache for the structural inverse: per-slice dense normal operators and the
// coefficient bundles, so repeated preconditioner applications are cheap.
struct StructuralCache {
  std::vector<MatrixXd> A_dense;  // per time slice, (2 nn) x (2 nn)
  BCoefficients bc;
  std::vector<VectorXd> dphi;
};

Eigen::VectorXd flatten_vec(const MatrixXd& W) {
  Eigen::VectorXd v(2 * W.rows());
  v.head(W.rows()) = W.col(0);
  v.tail(W.rows()) = W.col(1);
  return v;
}

MatrixXd unflatten_vec(const Eigen::VectorXd& v) {
  const int nn = static_cast<int>(v.size()) / 2;
  MatrixXd W(nn, 2);
  W.col(0) = v.head(nn);
  W.col(1) = v.tail(nn);
  return W;
}

// Approximate inverse of L1 through the four-part decomposition, marched on
// the same centered three-term time stencils the discrete operator uses, so
// that the time discretization of the preconditioner is exact and only the
// spatial Gauss-Seidel coupling is approximate.
std::vector<MatrixXd> approx_l1_inverse(const EulerWorkspace& ws,
                                        const StructuralCache& cache,
                                        const std::vector<MatrixXd>& F_lagr,
                                        int sweeps) {
  const int nt = ws.n_times();
  const int nn = ws.grid->n_nodes();
  const PolarGrid& g = *ws.grid;
  const double dt = ws.dt();
  const double dt2 = dt * dt;

  std::vector<VectorXd> div_F(nt);
  std::vector<MatrixXd> PF(nt);
  for (int t = 0; t < nt; ++t) {
    div_F[t] = colloc_div(ws.ms.at[t], F_lagr[t]);
    PF[t] = ws.solvers[t]->project_divfree(F_lagr[t]);
  }

  std::vector<VectorXd> delta_h(nt, VectorXd::Zero(nn));
  std::vector<MatrixXd> W(nt, MatrixXd::Zero(nn, 2));
  std::vector<MatrixXd> W10(nt, MatrixXd::Zero(nn, 2)), W11 = W10, W00 = W10,
                        W01 = W10;
  std::vector<VectorXd> phi(nt, VectorXd::Zero(nn));

  // kappa-weighted centered march of Wddot + (rhs terms) with zero data;
  // rhs_at(j, W, Wdot_j) must return the full right side at slice j.
  auto march_evolution = [&](const std::function<MatrixXd(int, const MatrixXd&,
                                                          const MatrixXd&)>& rhs_at) {
    std::vector<MatrixXd> out(nt, MatrixXd::Zero(nn, 2));
    for (int j = 1; j + 1 < nt; ++j) {
      const VectorXd& kj = ws.ms.at[j].kappa;
      MatrixXd kprev = out[j - 1], kcur = out[j];
      for (int c = 0; c < 2; ++c) {
        kprev.col(c) = ws.ms.at[j - 1].kappa.cwiseProduct(kprev.col(c));
        kcur.col(c) = kj.cwiseProduct(kcur.col(c));
      }
      MatrixXd Wdot = (kcur - kprev) / dt;
      for (int c = 0; c < 2; ++c) Wdot.col(c) = Wdot.col(c).cwiseQuotient(kj);
      const MatrixXd r = rhs_at(j, out[j], Wdot);
      MatrixXd knext = 2.0 * kcur - kprev;
      for (int c = 0; c < 2; ++c)
        knext.col(c) += dt2 * kj.cwiseProduct(r.col(c));
      MatrixXd Wnext(nn, 2);
      for (int c = 0; c < 2; ++c)
        Wnext.col(c) = knext.col(c).cwiseQuotient(ws.ms.at[j + 1].kappa);
      out[j + 1] = ws.solvers[j + 1]->project_divfree(Wnext);
    }
    return out;
  };

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    // (9.9): centered march of D_t^2 phi + divPhi phi = div F + divPhi e\' dh
    for (int j = 1; j + 1 < nt; ++j) {
      const VectorXd rj = div_F[j] + cache.dphi[j].cwiseProduct(
                                         ws.eprime[j].cwiseProduct(delta_h[j]));
      phi[j + 1] = 2.0 * phi[j] - phi[j - 1] +
                   dt2 * (rj - cache.dphi[j].cwiseProduct(phi[j]));
    }
    // (9.8): W11 = grad q11, lap q11 = phi
    for (int t = 0; t < nt; ++t) {
      const VectorXd q = ws.solvers[t]->solve(phi[t]);
      W11[t] = ws.solvers[t]->metric_gradient(q);
    }
    // (9.10): centered march for delta h with the weak Laplacian
    {
      const auto Wdot = hat_series(W, ws.ms);
      std::vector<VectorXd> rhs(nt);
      for (int t = 0; t < nt; ++t) {
        const MetricData& m = ws.ms.at[t];
        const VectorXd& sdot = *m.sigma_dot;
        const MatrixXd dh = grad_y(g, ws.enthalpy.h[t]);
        const VectorXd hw = dh.col(0).cwiseProduct(W[t].col(0)) +
                            dh.col(1).cwiseProduct(W[t].col(1));
        VectorXd r = colloc_lap(m, hw);
        r -= colloc_div(m, raise_two_form_apply(m, cache.bc.beta1[t], Wdot[t]));
        r += 2.0 * sdot.cwiseProduct(colloc_div(m, Wdot[t]));
        r -= colloc_div(m, raise_two_form_apply(m, cache.bc.beta0[t], W[t]));
        r -= (cache.bc.d2eh[t] + sdot.cwiseAbs2()).cwiseProduct(colloc_div(m, W[t]));
        rhs[t] = r;
      }
      for (int j = 1; j + 1 < nt; ++j) {
        const VectorXd lap = ws.solvers[j]->weak_laplacian(delta_h[j]);
        VectorXd num = 2.0 * ws.eprime[j].cwiseProduct(delta_h[j]) -
                       ws.eprime[j - 1].cwiseProduct(delta_h[j - 1]) +
                       dt2 * (lap + rhs[j]);
        delta_h[j + 1] = num.cwiseQuotient(ws.eprime[j + 1]);
        for (int bnode : g.boundary_nodes()) delta_h[j + 1][bnode] = 0.0;
      }
    }
    // (9.8): W10 = grad q10, lap q10 = -e\'(h) delta h
    for (int t = 0; t < nt; ++t) {
      const VectorXd q =
          ws.solvers[t]->solve(VectorXd(-ws.eprime[t].cwiseProduct(delta_h[t])));
      W10[t] = ws.solvers[t]->metric_gradient(q);
    }
    std::vector<MatrixXd> g_series(nt);
    for (int t = 0; t < nt; ++t) g_series[t] = ws.ms.at[t].g;
    const auto gdot_chk = check_series_m(g_series, ws.ms);
    const auto gddot_chk = check_series_m(gdot_chk, ws.ms);

    std::vector<MatrixXd> W1(nt);
    for (int t = 0; t < nt; ++t) W1[t] = W10[t] + W11[t];
    const auto W1dot = hat_series(W1, ws.ms);

    // (9.12): W00 march with RHS = -A W10 + B11 W1dot + B01 W1 + P F
    {
      std::vector<MatrixXd> H(nt);
      for (int t = 0; t < nt; ++t) {
        const MetricData& m = ws.ms.at[t];
        MatrixXd r = -unflatten_vec(cache.A_dense[t] * flatten_vec(W10[t]));
        MatrixXd b11 = raise_two_form_apply(m, cache.bc.beta1[t], W1dot[t]) +
                       2.0 * raise_two_form_apply(m, gdot_chk[t], W1dot[t]);
        MatrixXd b01 = raise_two_form_apply(m, cache.bc.beta0[t], W1[t]) +
                       raise_two_form_apply(m, gddot_chk[t], W1[t]);
        r += ws.solvers[t]->project_divfree(b11 + b01);
        r += PF[t];
        H[t] = r;
      }
      W00 = march_evolution([&](int j, const MatrixXd& Wj, const MatrixXd& Wdj) {
        const MetricData& m = ws.ms.at[j];
        MatrixXd r = H[j];
        r -= unflatten_vec(cache.A_dense[j] * flatten_vec(Wj));
        r += ws.solvers[j]->project_divfree(
            MatrixXd(raise_two_form_apply(m, cache.bc.beta1[j], Wdj) +
                     raise_two_form_apply(m, cache.bc.beta0[j], Wj)));
        return r;
      });
    }
    // (9.13): W01 march with RHS = -A W11
    {
      std::vector<MatrixXd> H(nt);
      for (int t = 0; t < nt; ++t)
        H[t] = -unflatten_vec(cache.A_dense[t] * flatten_vec(W11[t]));
      W01 = march_evolution([&](int j, const MatrixXd& Wj, const MatrixXd& Wdj) {
        const MetricData& m = ws.ms.at[j];
        MatrixXd r = H[j];
        r -= unflatten_vec(cache.A_dense[j] * flatten_vec(Wj));
        r += ws.solvers[j]->project_divfree(
            MatrixXd(raise_two_form_apply(m, cache.bc.beta1[j], Wdj) +
                     raise_two_form_apply(m, cache.bc.beta0[j], Wj)));
        return r;
      });
    }
    for (int t = 0; t < nt; ++t) W[t] = W00[t] + W01[t] + W10[t] + W11[t];
  }
  return W;
}

}  // namespace

InversionResult invert_linearized(const EulerWorkspace& ws,
                                  const std::vector<MatrixXd>& F,
                                  const InversionOptions& opts) {
  const int nt = ws.n_times();
  const int nn = ws.grid->n_nodes();
  for (double m : ws.enthalpy.margin)
    if (!(m > opts.min_margin))
      throw PhysicalConditionViolated(
          "the physical condition fails along the trajectory");

  double fmax = 1e-300;
  for (const auto& Ft : F) fmax = std::max(fmax, Ft.cwiseAbs().maxCoeff());

  auto residual_of = [&](const std::vector<MatrixXd>& dx) {
    const auto img = linearized_apply(ws, dx);
    double r = 0.0;
    for (int t = 1; t + 1 < nt; ++t)
      r = std::max(r, (img[t] - F[t]).cwiseAbs().maxCoeff());
    return r;
  };

  InversionResult out;
  if (opts.mode == InversionMode::Oracle) {
    const int nun = (nt - 2) * 2 * nn;
    if (nun > opts.oracle_max_unknowns)
      throw GridTooLarge("dense space-time oracle gated at " +
                         std::to_string(opts.oracle_max_unknowns) + " unknowns");
    MatrixXd G(nun, nun);
    std::vector<MatrixXd> basis(nt, MatrixXd::Zero(nn, 2));
    for (int j = 2; j < nt; ++j)
      for (int c = 0; c < 2; ++c)
        for (int p = 0; p < nn; ++p) {
          basis[j](p, c) = 1.0;
          const auto img = linearized_apply(ws, basis);
          basis[j](p, c) = 0.0;
          const int col = (j - 2) * 2 * nn + c * nn + p;
          for (int q = 1; q + 1 < nt; ++q) {
            G.col(col).segment((q - 1) * 2 * nn, nn) = img[q].col(0);
            G.col(col).segment((q - 1) * 2 * nn + nn, nn) = img[q].col(1);
          }
        }
    Eigen::VectorXd rhs(nun);
    for (int q = 1; q + 1 < nt; ++q) {
      rhs.segment((q - 1) * 2 * nn, nn) = F[q].col(0);
      rhs.segment((q - 1) * 2 * nn + nn, nn) = F[q].col(1);
    }
    Eigen::PartialPivLU<MatrixXd> lu(G);
    const Eigen::VectorXd sol = lu.solve(rhs);
    out.dx.assign(nt, MatrixXd::Zero(nn, 2));
    for (int j = 2; j < nt; ++j)
      for (int c = 0; c < 2; ++c)
        out.dx[j].col(c) = sol.segment((j - 2) * 2 * nn + c * nn, nn);
    out.residual_rel = residual_of(out.dx) / fmax;
    out.residual_history.push_back(out.residual_rel);
    return out;
  }

  // Structural mode: the section-9 four-part decomposition approximately
  // inverts L1; the outer correction iterates on the residual of the full
  // discrete linearized operator (the B3 difference is folded into that
  // residual as in the section-12 iteration) with Krylov acceleration, which
  // keeps the correction steps from re-exciting the rough time slices the
  // marching solvers cannot represent.
  if (ws.solvers.empty())
    throw ConfigInvalid("structural inversion needs the workspace solver cache");
  StructuralCache cache;
  cache.bc = b_coefficients(ws);
  cache.dphi = div_phi(ws);
  cache.A_dense.resize(nt);
  for (int t = 0; t < nt; ++t)
    cache.A_dense[t] = dense_oracle_assemble(*ws.solvers[t], OperatorTag::Normal,
                                             &ws.enthalpy.h[t], nullptr);

  const int flat_dim = nt * 2 * nn;
  auto flatten = [&](const std::vector<MatrixXd>& s) {
    Eigen::VectorXd v(flat_dim);
    for (int t = 0; t < nt; ++t) {
      v.segment(t * 2 * nn, nn) = s[t].col(0);
      v.segment(t * 2 * nn + nn, nn) = s[t].col(1);
    }
    return v;
  };
  auto unflatten = [&](const Eigen::VectorXd& v) {
    std::vector<MatrixXd> s(nt, MatrixXd::Zero(nn, 2));
    for (int t = 0; t < nt; ++t) {
      s[t].col(0) = v.segment(t * 2 * nn, nn);
      s[t].col(1) = v.segment(t * 2 * nn + nn, nn);
    }
    return s;
  };
  auto precond = [&](const Eigen::VectorXd& r) {
    const FrameSeries r_lagr = to_lagrangian(ws, unflatten(r));
    const auto corr =
        approx_l1_inverse(ws, cache, r_lagr.comps, opts.inner_sweeps);
    FrameSeries corrW;
    corrW.lagrangian = true;
    corrW.comps = corr;
    return flatten(to_eulerian(ws, corrW));
  };
  // equations live on the interior time slices
  auto apply_op = [&](const Eigen::VectorXd& v) {
    const auto img = linearized_apply(ws, unflatten(v));
    std::vector<MatrixXd> masked(nt, MatrixXd::Zero(nn, 2));
    for (int t = 1; t + 1 < nt; ++t) masked[t] = img[t];
    return flatten(masked);
  };

  std::vector<MatrixXd> Fmask(nt, MatrixXd::Zero(nn, 2));
  for (int t = 1; t + 1 < nt; ++t) Fmask[t] = F[t];
  const Eigen::VectorXd b = flatten(Fmask);
  const double bnorm = b.norm();

  // right-preconditioned GMRES
  const int maxit = opts.max_outer;
  std::vector<Eigen::VectorXd> V;
  std::vector<Eigen::VectorXd> Z;  // preconditioned directions
  MatrixXd H = MatrixXd::Zero(maxit + 1, maxit);
  Eigen::VectorXd g_vec = Eigen::VectorXd::Zero(maxit + 1);
  V.push_back(b / bnorm);
  g_vec[0] = bnorm;
  std::vector<double> cs(maxit, 0.0), sn(maxit, 0.0);
  int k_used = 0;
  out.residual_history.push_back(1.0);
  for (int k = 0; k < maxit; ++k) {
    Z.push_back(precond(V[k]));
    Eigen::VectorXd w = apply_op(Z[k]);
    for (int i = 0; i <= k; ++i) {
      H(i, k) = w.dot(V[i]);
      w -= H(i, k) * V[i];
    }
    const double subdiag = w.norm();
    H(k + 1, k) = subdiag;
    if (subdiag > 1e-300) V.push_back(w / subdiag);
    // Givens rotations
    for (int i = 0; i < k; ++i) {
      const double t1 = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
      const double t2 = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
      H(i, k) = t1;
      H(i + 1, k) = t2;
    }
    const double denom = std::hypot(H(k, k), H(k + 1, k));
    cs[k] = H(k, k) / denom;
    sn[k] = H(k + 1, k) / denom;
    H(k, k) = denom;
    H(k + 1, k) = 0.0;
    g_vec[k + 1] = -sn[k] * g_vec[k];
    g_vec[k] = cs[k] * g_vec[k];
    k_used = k + 1;
    out.residual_history.push_back(std::abs(g_vec[k + 1]) / bnorm);
    if (std::abs(g_vec[k + 1]) / bnorm <= opts.tol) break;
    if (subdiag <= 1e-300) break;
  }
  Eigen::VectorXd y =
      H.topLeftCorner(k_used, k_used).triangularView<Eigen::Upper>().solve(
          g_vec.head(k_used));
  Eigen::VectorXd dxf = Eigen::VectorXd::Zero(flat_dim);
  for (int i = 0; i < k_used; ++i) dxf += y[i] * Z[i];
  out.dx = unflatten(dxf);
  out.residual_rel = residual_of(out.dx) / fmax;
  if (opts.throw_on_stall && out.residual_rel > 1e-3)
    throw IterationStalled("structural correction loop failed to converge");
  return out;
}

}  // namespace fbeuler

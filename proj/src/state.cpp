#include "fbeuler/state.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"

namespace fbeuler {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void LagrangianState::validate(double v_tol) const {
  const int nt = n_times();
  if (nt < 3) throw ConfigInvalid("state needs at least 3 time nodes");
  if (static_cast<int>(x.size()) != nt || static_cast<int>(v.size()) != nt ||
      static_cast<int>(h.size()) != nt)
    throw ConfigInvalid("state series lengths disagree with t_nodes");
  const int nn = grid->n_nodes();
  for (int i = 0; i < nt; ++i) {
    if (x[i].rows() != nn || x[i].cols() != grid->dim() || v[i].rows() != nn ||
        h[i].size() != nn)
      throw ConfigInvalid("state field shapes disagree with grid");
    for (int b : grid->boundary_nodes())
      if (std::abs(h[i][b]) > 1e-12)
        throw ConfigInvalid("enthalpy does not vanish on the boundary ring");
  }
  double scale = 1e-300;
  for (int i = 0; i < nt; ++i) scale = std::max(scale, v[i].cwiseAbs().maxCoeff());
  for (int i = 0; i < nt; ++i) {
    const MatrixXd dv = fd_time1(x, dt(), i) - v[i];
    if (dv.cwiseAbs().maxCoeff() > v_tol * std::max(1.0, scale) + 10 * dt() * dt())
      throw ConfigInvalid("v is not the discrete time derivative of x");
  }
}

LagrangianState static_state(GridPtr grid, const VectorXd& h0, int n_times,
                             double dt) {
  LagrangianState s;
  s.grid = grid;
  s.t_nodes = VectorXd::LinSpaced(n_times, 0.0, dt * (n_times - 1));
  s.x.assign(n_times, grid->nodes());
  s.v.assign(n_times, MatrixXd::Zero(grid->n_nodes(), grid->dim()));
  s.h.assign(n_times, h0);
  return s;
}

MetricData MetricData::identity(GridPtr grid) {
  MetricData m;
  m.grid = grid;
  m.n = grid->dim();
  const int nn = grid->n_nodes();
  m.jac = MatrixXd::Zero(nn, m.n * m.n);
  for (int i = 0; i < m.n; ++i) m.jac.col(i * m.n + i).setOnes();
  m.jac_inv = m.jac;
  m.g = m.jac;
  m.g_inv = m.jac;
  m.kappa = VectorXd::Ones(nn);
  m.sigma = VectorXd::Zero(nn);
  return m;
}

MetricData build_metric_slice(GridPtr grid, const MatrixXd& x_slice) {
  const int n = grid->dim();
  MatrixXd jac(grid->n_nodes(), n * n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a) jac.col(i * n + a) = grid->d(x_slice.col(i), a);
  return metric_from_jacobian(grid, jac);
}

MetricData metric_from_jacobian(GridPtr grid, const MatrixXd& jac) {
  const int n = grid->dim();
  const int nn = grid->n_nodes();
  MetricData m;
  m.grid = grid;
  m.n = n;
  m.jac = jac;
  m.jac_inv.resize(nn, n * n);
  m.g.resize(nn, n * n);
  m.g_inv.resize(nn, n * n);
  m.kappa.resize(nn);
  m.sigma.resize(nn);
  Eigen::Matrix2d J, Ji, G, Gi;
  for (int p = 0; p < nn; ++p) {
    J << m.jac(p, 0), m.jac(p, 1), m.jac(p, 2), m.jac(p, 3);
    const double det = J.determinant();
    if (!(det > 0.0))
      throw SingularJacobian("det(dx/dy) <= 0 at node " + std::to_string(p));
    Ji = J.inverse();
    G = J.transpose() * J;
    Gi = G.inverse();
    m.jac_inv(p, 0) = Ji(0, 0);
    m.jac_inv(p, 1) = Ji(0, 1);
    m.jac_inv(p, 2) = Ji(1, 0);
    m.jac_inv(p, 3) = Ji(1, 1);
    m.g(p, 0) = G(0, 0);
    m.g(p, 1) = G(0, 1);
    m.g(p, 2) = G(1, 0);
    m.g(p, 3) = G(1, 1);
    m.g_inv(p, 0) = Gi(0, 0);
    m.g_inv(p, 1) = Gi(0, 1);
    m.g_inv(p, 2) = Gi(1, 0);
    m.g_inv(p, 3) = Gi(1, 1);
    m.kappa[p] = det;
    m.sigma[p] = std::log(det);
  }
  return m;
}

MetricData build_metric(const LagrangianState& state, int time_index) {
  return build_metric_slice(state.grid, state.x[time_index]);
}

MetricSeries build_metric_series(const LagrangianState& state) {
  MetricSeries ms;
  ms.grid = state.grid;
  ms.t_nodes = state.t_nodes;
  ms.at.reserve(state.n_times());
  for (int i = 0; i < state.n_times(); ++i) ms.at.push_back(build_metric(state, i));
  std::vector<VectorXd> sig;
  sig.reserve(state.n_times());
  for (auto& m : ms.at) sig.push_back(m.sigma);
  for (int i = 0; i < state.n_times(); ++i)
    ms.at[i].sigma_dot = fd_time1(sig, ms.dt(), i);
  return ms;
}

MatrixXd eulerian_gradient(const MetricData& m, const VectorXd& f) {
  const int n = m.n;
  const auto& grid = *m.grid;
  MatrixXd da(f.size(), n);
  for (int a = 0; a < n; ++a) da.col(a) = grid.d(f, a);
  MatrixXd out = MatrixXd::Zero(f.size(), n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a)
      out.col(i) += m.jac_inv.col(a * n + i).cwiseProduct(da.col(a));
  return out;
}

MatrixXd eulerian_jacobian(const MetricData& m, const MatrixXd& comps) {
  const int n = m.n;
  const int nc = static_cast<int>(comps.cols());
  MatrixXd out(comps.rows(), nc * n);
  for (int c = 0; c < nc; ++c)
    out.middleCols(c * n, n) = eulerian_gradient(m, comps.col(c));
  return out;
}

CoordinateConditionResult check_coordinate_condition(const MetricData& m, double c1) {
  const auto& grid = *m.grid;
  double sup = 0.0;
  // innermost ring excluded from pointwise checks
  for (int p = grid.n_angular(); p < grid.n_nodes(); ++p) {
    const double a = m.jac.row(p).squaredNorm() + m.jac_inv.row(p).squaredNorm();
    sup = std::max(sup, a);
  }
  return {sup, sup <= c1 * c1};
}

double physical_margin(const MetricData& m, const VectorXd& h_slice) {
  const auto& grid = *m.grid;
  const int n = m.n;
  MatrixXd dh(grid.n_nodes(), n);
  for (int a = 0; a < n; ++a) dh.col(a) = grid.d(h_slice, a);
  double margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.n_angular(); ++k) {
    const int p = grid.boundary_nodes()[k];
    // outward conormal on the reference ball is n_a = y_a at |y| = 1
    const double n_a[2] = {grid.nodes()(p, 0), grid.nodes()(p, 1)};
    // grad_N h = g^{ab} n_a d_b h / sqrt(g^{ab} n_a n_b)
    double gnn = 0.0, gnh = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        gnn += m.g_inv(p, a * n + b) * n_a[a] * n_a[b];
        gnh += m.g_inv(p, a * n + b) * n_a[a] * dh(p, b);
      }
    if (!(gnn > 1e-14)) throw DegenerateNormal("boundary normal cannot be normalized");
    margin = std::min(margin, -gnh / std::sqrt(gnn));
  }
  return margin;
}

double check_physical_condition(const LagrangianState& state, const MetricData& m,
                                int time_index) {
  return physical_margin(m, state.h[time_index]);
}

ConditionReport track_conditions(const LagrangianState& state) {
  ConditionReport rep;
  const int nt = state.n_times();
  rep.m_of_t.resize(nt);
  rep.n_of_t.resize(nt);
  for (int i = 0; i < nt; ++i) {
    const MetricData m = build_metric(state, i);
    const auto cc = check_coordinate_condition(m, 0.0);
    rep.m_of_t[i] = std::sqrt(cc.sup_squared);
    const double c0 = physical_margin(m, state.h[i]);
    rep.n_of_t[i] = 1.0 / std::max(std::abs(c0), 1e-300);
    if (i == 0) {
      rep.c1_margin = rep.m_of_t[0];
      rep.c0_margin = c0;
    }
  }
  rep.m_bounded = (rep.m_of_t.maxCoeff() <= 2.0 * rep.m_of_t[0] + 1e-12);
  rep.n_bounded = (rep.n_of_t.maxCoeff() <= 2.0 * rep.n_of_t[0] + 1e-12);
  return rep;
}

double EnthalpyLaw::invert(double target, double guess) const {
  if (linear) return target / c;
  double h = guess;
  for (int it = 0; it < 60; ++it) {
    const double r = e(h) - target;
    const double d = de(h);
    if (!(std::abs(d) > 1e-300)) throw NonlinearDiverged("e' vanished in inversion");
    const double step = r / d;
    h -= step;
    if (std::abs(step) < 1e-14 * (1.0 + std::abs(h))) return h;
  }
  throw NonlinearDiverged("e inversion did not converge");
}

VectorXd EnthalpyLaw::e_of(const VectorXd& h) const {
  VectorXd out(h.size());
  for (int i = 0; i < h.size(); ++i) out[i] = e(h[i]);
  return out;
}
VectorXd EnthalpyLaw::de_of(const VectorXd& h) const {
  VectorXd out(h.size());
  for (int i = 0; i < h.size(); ++i) out[i] = de(h[i]);
  return out;
}
VectorXd EnthalpyLaw::d2e_of(const VectorXd& h) const {
  VectorXd out(h.size());
  for (int i = 0; i < h.size(); ++i) out[i] = d2e(h[i]);
  return out;
}

}  // namespace fbeuler

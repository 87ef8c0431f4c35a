#include "fbeuler/elliptic.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"
#include "fbeuler/rng.hpp"

namespace fbeuler {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd assemble_weak_stiffness(const PolarGrid& grid, const VectorXd& mu00,
                                 const VectorXd& mu01, const VectorXd& mu11) {
  const int nr = grid.n_radial(), na = grid.n_angular();
  const int nin = grid.n_interior();
  const int h = na / 2;
  const MatrixXd& A = grid.radial_same();
  const MatrixXd& B = grid.radial_opposite();
  const MatrixXd& Dp = grid.angular_matrix();

  // nodal chain-rule contraction: mu_rr etc. as n_r x n_ang arrays
  MatrixXd mrr(nr, na), mrp(nr, na), mpp(nr, na);
  for (int i = 0; i < nr; ++i)
    for (int k = 0; k < na; ++k) {
      const int p = grid.node_index(i, k);
      const double a0 = grid.chain_radial(0)[p], a1 = grid.chain_radial(1)[p];
      const double b0 = grid.chain_angular(0)[p], b1 = grid.chain_angular(1)[p];
      const double m00 = mu00[p], m01 = mu01[p], m11 = mu11[p];
      mrr(i, k) = a0 * m00 * a0 + 2.0 * a0 * m01 * a1 + a1 * m11 * a1;
      mrp(i, k) = a0 * m00 * b0 + a0 * m01 * b1 + a1 * m01 * b0 + a1 * m11 * b1;
      mpp(i, k) = b0 * m00 * b0 + 2.0 * b0 * m01 * b1 + b1 * m11 * b1;
    }

  MatrixXd S = MatrixXd::Zero(nin, nin);

  // radial part, one line pair (k, k+h) at a time
  {
    MatrixXd L(2 * nr, 2 * nr);
    L.topLeftCorner(nr, nr) = A;
    L.topRightCorner(nr, nr) = B;
    L.bottomLeftCorner(nr, nr) = B;
    L.bottomRightCorner(nr, nr) = A;
    for (int k = 0; k < h; ++k) {
      const int k2 = k + h;
      VectorXd mu(2 * nr);
      mu.head(nr) = mrr.col(k);
      mu.tail(nr) = mrr.col(k2);
      MatrixXd C = L.transpose() * mu.asDiagonal() * L;
      for (int i = 0; i < nr - 1; ++i)
        for (int ip = 0; ip < nr - 1; ++ip) {
          S(grid.node_index(i, k), grid.node_index(ip, k)) += C(i, ip);
          S(grid.node_index(i, k), grid.node_index(ip, k2)) += C(i, ip + nr);
          S(grid.node_index(i, k2), grid.node_index(ip, k)) += C(i + nr, ip);
          S(grid.node_index(i, k2), grid.node_index(ip, k2)) += C(i + nr, ip + nr);
        }
    }
  }

  // angular part, one ring at a time (boundary-ring intermediates vanish on
  // interior-supported functions)
  for (int i = 0; i < nr - 1; ++i) {
    MatrixXd C = Dp.transpose() * mpp.row(i).transpose().asDiagonal() * Dp;
    S.block(i * na, i * na, na, na) += C;
  }

  // cross terms R^T mu Phi + transpose
  {
    MatrixXd cross = MatrixXd::Zero(nin, nin);
    MatrixXd P1(na, na), P2(na, na);
    for (int ip = 0; ip < nr - 1; ++ip) {
      P1 = mrp.row(ip).transpose().asDiagonal() * Dp;
      for (int k = 0; k < na; ++k) P2.row(k) = P1.row((k + h) % na);
      for (int i = 0; i < nr - 1; ++i) {
        const double a = A(ip, i), b = B(ip, i);
        if (a != 0.0) cross.block(i * na, ip * na, na, na) += a * P1;
        if (b != 0.0) cross.block(i * na, ip * na, na, na) += b * P2;
      }
    }
    S += cross + cross.transpose();
  }
  return S;
}

MatrixXd dense_derivative_matrix(const PolarGrid& grid, int a) {
  const int nr = grid.n_radial(), na = grid.n_angular();
  const int nn = grid.n_nodes();
  const int h = na / 2;
  MatrixXd D = MatrixXd::Zero(nn, nn);
  const MatrixXd& As = grid.radial_same();
  const MatrixXd& Bs = grid.radial_opposite();
  const MatrixXd& Dp = grid.angular_matrix();
  for (int i = 0; i < nr; ++i)
    for (int k = 0; k < na; ++k) {
      const int p = grid.node_index(i, k);
      const double cr = grid.chain_radial(a)[p];
      const double cp = grid.chain_angular(a)[p];
      for (int ip = 0; ip < nr; ++ip) {
        D(p, grid.node_index(ip, k)) += cr * As(i, ip);
        D(p, grid.node_index(ip, (k + h) % na)) += cr * Bs(i, ip);
      }
      for (int kp = 0; kp < na; ++kp)
        D(p, grid.node_index(i, kp)) += cp * Dp(k, kp);
    }
  return D;
}

DirichletSolver::DirichletSolver(GridPtr grid, const MetricData& m)
    : grid_(grid), m_(m) {
  const int nn = grid_->n_nodes();
  wk_ = grid_->quad_weights().cwiseProduct(m_.kappa);
  VectorXd mu00(nn), mu01(nn), mu11(nn);
  for (int p = 0; p < nn; ++p) {
    mu00[p] = wk_[p] * m_.g_inv(p, 0);
    mu01[p] = wk_[p] * m_.g_inv(p, 1);
    mu11[p] = wk_[p] * m_.g_inv(p, 3);
  }
  MatrixXd S = assemble_weak_stiffness(*grid_, mu00, mu01, mu11);
  llt_.compute(S);
  if (llt_.info() != Eigen::Success)
    throw SingularMetric("weak stiffness matrix is not positive definite");

  // boundary geometry: conormal n_a = y_a on the ring
  const int na_b = grid_->n_angular();
  sqrt_gnn_.resize(na_b);
  for (int k = 0; k < na_b; ++k) {
    const int p = grid_->boundary_nodes()[k];
    const double n0 = grid_->nodes()(p, 0), n1 = grid_->nodes()(p, 1);
    const double gnn = m_.g_inv(p, 0) * n0 * n0 + 2.0 * m_.g_inv(p, 1) * n0 * n1 +
                       m_.g_inv(p, 3) * n1 * n1;
    if (!(gnn > 1e-14)) throw DegenerateNormal("metric degenerate at the boundary");
    sqrt_gnn_[k] = std::sqrt(gnn);
  }

  // flux weights from the radial field
  MatrixXd R(nn, 2);
  R.col(0) = grid_->nodes().col(0);
  R.col(1) = grid_->nodes().col(1);
  flux_w_ = boundary_flux(R);
  for (int k = 0; k < na_b; ++k)
    if (!(flux_w_[k] > 0.0))
      throw DegenerateNormal("nonpositive boundary flux weight");
}

VectorXd DirichletSolver::stiffness_apply(const VectorXd& q) const {
  const int n = m_.n;
  VectorXd dq[2];
  for (int b = 0; b < n; ++b) dq[b] = grid_->d(q, b);
  VectorXd out = VectorXd::Zero(q.size());
  for (int a = 0; a < n; ++a) {
    VectorXd flux = VectorXd::Zero(q.size());
    for (int b = 0; b < n; ++b)
      flux += m_.g_inv.col(a * n + b).cwiseProduct(dq[b]);
    out += grid_->d_transpose(wk_.cwiseProduct(flux), a);
  }
  return out;
}

VectorXd DirichletSolver::weak_laplacian(const VectorXd& q) const {
  VectorXd out = -stiffness_apply(q).cwiseQuotient(wk_);
  for (int b : grid_->boundary_nodes()) out[b] = 0.0;
  return out;
}

VectorXd DirichletSolver::laplacian(const VectorXd& q) const {
  const int n = m_.n;
  VectorXd dq[2];
  for (int b = 0; b < n; ++b) dq[b] = grid_->d(q, b);
  VectorXd out = VectorXd::Zero(q.size());
  for (int a = 0; a < n; ++a) {
    VectorXd flux = VectorXd::Zero(q.size());
    for (int b = 0; b < n; ++b)
      flux += m_.g_inv.col(a * n + b).cwiseProduct(dq[b]);
    out += grid_->d(m_.kappa.cwiseProduct(flux), a);
  }
  return out.cwiseQuotient(m_.kappa);
}

MatrixXd DirichletSolver::backsolve(const MatrixXd& rhs_int) const {
  return llt_.solve(rhs_int);
}

VectorXd DirichletSolver::solve(const VectorXd& f, double tol) const {
  const int nin = grid_->n_interior();
  VectorXd rhs = -(wk_.cwiseProduct(f)).head(nin);
  VectorXd q_int = llt_.solve(rhs);
  VectorXd q = VectorXd::Zero(grid_->n_nodes());
  q.head(nin) = q_int;
  // iterative refinement against the matrix-free operator
  for (int pass = 0; pass < 5; ++pass) {
    VectorXd r = rhs - stiffness_apply(q).head(nin);
    const double rn = r.cwiseAbs().maxCoeff();
    if (rn <= tol * std::max(1.0, rhs.cwiseAbs().maxCoeff())) break;
    q.head(nin) += llt_.solve(r);
  }
  return q;
}

VectorXd DirichletSolver::solve_with_boundary(const VectorXd& f, const VectorXd& bc,
                                              double tol) const {
  const int nin = grid_->n_interior();
  VectorXd lift = VectorXd::Zero(grid_->n_nodes());
  for (int k = 0; k < grid_->n_angular(); ++k)
    lift[grid_->boundary_nodes()[k]] = bc[k];
  VectorXd rhs = -(wk_.cwiseProduct(f)).head(nin) - stiffness_apply(lift).head(nin);
  VectorXd q = lift;
  q.head(nin) = llt_.solve(rhs);
  for (int pass = 0; pass < 5; ++pass) {
    VectorXd r = rhs + stiffness_apply(lift).head(nin) -
                 stiffness_apply(q).head(nin);
    const double rn = r.cwiseAbs().maxCoeff();
    if (rn <= tol * std::max(1.0, rhs.cwiseAbs().maxCoeff())) break;
    q.head(nin) += llt_.solve(r);
  }
  return q;
}

MatrixXd DirichletSolver::metric_gradient(const VectorXd& q) const {
  const int n = m_.n;
  VectorXd dq[2];
  for (int b = 0; b < n; ++b) dq[b] = grid_->d(q, b);
  MatrixXd out(q.size(), n);
  for (int a = 0; a < n; ++a) {
    VectorXd t = VectorXd::Zero(q.size());
    for (int b = 0; b < n; ++b)
      t += m_.g_inv.col(a * n + b).cwiseProduct(dq[b]);
    out.col(a) = t;
  }
  return out;
}

double DirichletSolver::inner(const MatrixXd& U, const MatrixXd& W) const {
  const int n = m_.n;
  double s = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      s += wk_.cwiseProduct(m_.g.col(a * n + b))
               .cwiseProduct(U.col(a))
               .dot(W.col(b));
  return s;
}

VectorXd DirichletSolver::weak_div_numerator(const MatrixXd& W) const {
  VectorXd out = VectorXd::Zero(W.rows());
  for (int a = 0; a < m_.n; ++a)
    out += grid_->d_transpose(wk_.cwiseProduct(W.col(a)), a);
  return out;
}

VectorXd DirichletSolver::weak_divergence(const MatrixXd& W) const {
  VectorXd out = -weak_div_numerator(W).cwiseQuotient(wk_);
  for (int b : grid_->boundary_nodes()) out[b] = 0.0;
  return out;
}

VectorXd DirichletSolver::boundary_flux(const MatrixXd& W) const {
  const VectorXd n = weak_div_numerator(W);
  VectorXd out(grid_->n_angular());
  for (int k = 0; k < grid_->n_angular(); ++k)
    out[k] = n[grid_->boundary_nodes()[k]];
  return out;
}

MatrixXd DirichletSolver::project_divfree(const MatrixXd& U) const {
  const int nin = grid_->n_interior();
  VectorXd p = VectorXd::Zero(grid_->n_nodes());
  VectorXd rhs = weak_div_numerator(U).head(nin);
  p.head(nin) = llt_.solve(rhs);
  for (int pass = 0; pass < 3; ++pass) {
    VectorXd r = rhs - stiffness_apply(p).head(nin);
    if (r.cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, rhs.cwiseAbs().maxCoeff()))
      break;
    p.head(nin) += llt_.solve(r);
  }
  return U - metric_gradient(p);
}

VectorXd DirichletSolver::normal_boundary_weight(const VectorXd& f) const {
  const int n = m_.n;
  const int nab = grid_->n_angular();
  VectorXd df[2];
  for (int b = 0; b < n; ++b) df[b] = grid_->d(f, b);
  VectorXd lam(nab);
  for (int k = 0; k < nab; ++k) {
    const int p = grid_->boundary_nodes()[k];
    const double n_a[2] = {grid_->nodes()(p, 0), grid_->nodes()(p, 1)};
    double gnd = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        gnd += m_.g_inv(p, a * n + b) * n_a[a] * df[b][p];
    // grad_N f / sqrt(g^{ab} n_a n_b): one factor normalizes the conormal,
    // the trace below carries the unnormalized pairing n_c W^c.
    lam[k] = gnd / (sqrt_gnn_[k] * sqrt_gnn_[k]);
  }
  return lam;
}

MatrixXd DirichletSolver::normal_operator(const VectorXd& f, const MatrixXd& W) const {
  double fb = 0.0;
  for (int b : grid_->boundary_nodes()) fb = std::max(fb, std::abs(f[b]));
  if (fb > 1e-9 * std::max(1.0, f.cwiseAbs().maxCoeff()))
    throw BoundaryTraceNonzero("f must vanish on the boundary ring");
  const MatrixXd Wp = project_divfree(W);
  const VectorXd flux = boundary_flux(Wp);
  const VectorXd lam = normal_boundary_weight(f);
  VectorXd bc(grid_->n_angular());
  for (int k = 0; k < grid_->n_angular(); ++k)
    bc[k] = lam[k] * flux[k] / flux_w_[k];
  const VectorXd v =
      solve_with_boundary(VectorXd::Zero(grid_->n_nodes()), bc);
  return -metric_gradient(v);
}

MatrixXd DirichletSolver::projected_multiplication(const Field& beta,
                                                   const MatrixXd& W) const {
  if (beta.var != Variance::TwoForm && beta.var != Variance::OneForm &&
      beta.data.cols() != m_.n * m_.n)
    throw VarianceMismatch("beta must carry two indices");
  const int n = m_.n;
  MatrixXd raised(W.rows(), n);
  for (int a = 0; a < n; ++a) {
    VectorXd t = VectorXd::Zero(W.rows());
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        t += m_.g_inv.col(a * n + b)
                 .cwiseProduct(beta.data.col(b * n + c))
                 .cwiseProduct(W.col(c));
    raised.col(a) = t;
  }
  return project_divfree(raised);
}

MatrixXd DirichletSolver::identity_operator(const MatrixXd& W) const {
  Field g_two(Variance::TwoForm, m_.n, grid_->n_nodes());
  g_two.data = m_.g;
  return projected_multiplication(g_two, W);
}

MatrixXd dense_oracle_assemble(const DirichletSolver& solver, OperatorTag tag,
                               const VectorXd* f_scalar, const Field* beta,
                               int max_nodes) {
  const PolarGrid& grid = solver.grid();
  const int nn = grid.n_nodes();
  if (nn > max_nodes)
    throw GridTooLarge("dense oracle limited to " + std::to_string(max_nodes) +
                       " nodes");
  const int n = solver.metric().n;
  const int dim = n * nn;
  MatrixXd out(dim, dim);
  MatrixXd basis = MatrixXd::Zero(nn, n);
  for (int c = 0; c < n; ++c) {
    for (int p = 0; p < nn; ++p) {
      basis(p, c) = 1.0;
      MatrixXd img;
      switch (tag) {
        case OperatorTag::Projection:
          img = solver.project_divfree(basis);
          break;
        case OperatorTag::Normal:
          img = solver.normal_operator(*f_scalar, basis);
          break;
        case OperatorTag::Multiplication:
          img = solver.projected_multiplication(*beta, basis);
          break;
      }
      for (int a = 0; a < n; ++a) out.col(c * nn + p).segment(a * nn, nn) = img.col(a);
      basis(p, c) = 0.0;
    }
  }
  return out;
}

RayleighReport rayleigh_extremes(const DirichletSolver& solver, const VectorXd& f,
                                 int iters, std::uint64_t seed) {
  const PolarGrid& grid = solver.grid();
  const int nn = grid.n_nodes();
  CounterRng rng(seed, "rayleigh", 0);
  MatrixXd v(nn, 2);
  for (int p = 0; p < nn; ++p)
    for (int c = 0; c < 2; ++c) v(p, c) = rng.normal();
  v = solver.project_divfree(v);
  v /= std::max(solver.norm(v), 1e-300);

  auto apply = [&](const MatrixXd& w) { return solver.normal_operator(f, w); };

  double lmax = 0.0;
  for (int it = 0; it < iters; ++it) {
    MatrixXd av = apply(v);
    lmax = solver.inner(v, av);
    av = solver.project_divfree(av);
    const double nrm = solver.norm(av);
    if (nrm < 1e-300) break;
    v = av / nrm;
  }

  // shifted iteration for the smallest eigenvalue
  MatrixXd u(nn, 2);
  CounterRng rng2(seed, "rayleigh-min", 1);
  for (int p = 0; p < nn; ++p)
    for (int c = 0; c < 2; ++c) u(p, c) = rng2.normal();
  u = solver.project_divfree(u);
  u /= std::max(solver.norm(u), 1e-300);
  const double shift = 1.25 * std::max(lmax, 1e-12);
  double lmin = 0.0;
  for (int it = 0; it < iters; ++it) {
    const MatrixXd au = apply(u);
    lmin = solver.inner(u, au);
    MatrixXd bu = solver.project_divfree(shift * u - au);
    const double nrm = solver.norm(bu);
    if (nrm < 1e-300) break;
    u = bu / nrm;
  }
  return {lmax, lmin};
}

DivCurlReport divcurl_estimate_check(const DirichletSolver& solver,
                                     const Field& beta) {
  if (beta.var != Variance::OneForm)
    throw VarianceMismatch("divcurl check takes a one-form");
  const MetricData& m = solver.metric();
  const PolarGrid& grid = solver.grid();
  const int n = m.n;
  // Eulerian derivatives d_i beta_j
  MatrixXd dbeta = eulerian_jacobian(m, beta.data);  // col j*n+i = d_i beta_j
  DivCurlReport rep;
  double sum = 0.0;
  int count = 0;
  for (int p = grid.n_angular(); p < grid.n_nodes(); ++p) {
    const double y0 = grid.nodes()(p, 0), y1 = grid.nodes()(p, 1);
    const double Nt[2] = {y0, y1};  // |N~| <= 1, equals the normal at r=1
    double num = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double d = dbeta(p, j * n + i);
        num += d * d;
      }
    // tangential term q^{kl} delta^{ij} d_k beta_i d_l beta_j
    double tang = 0.0;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        const double q = (k == l ? 1.0 : 0.0) - Nt[k] * Nt[l];
        for (int i = 0; i < n; ++i)
          tang += q * dbeta(p, i * n + k) * dbeta(p, i * n + l);
      }
    const double curl = dbeta(p, 1 * n + 0) - dbeta(p, 0 * n + 1);
    const double div = dbeta(p, 0 * n + 0) + dbeta(p, 1 * n + 1);
    const double den = tang + curl * curl + div * div;
    if (den > 1e-300) {
      const double ratio = num / den;
      rep.sup_ratio = std::max(rep.sup_ratio, ratio);
      sum += ratio;
      ++count;
    }
  }
  rep.mean_ratio = count ? sum / count : 0.0;
  return rep;
}

}  // namespace fbeuler

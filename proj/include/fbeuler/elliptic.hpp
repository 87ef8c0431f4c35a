#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <optional>

#include "fbeuler/field.hpp"
#include "fbeuler/state.hpp"

namespace fbeuler {

// Interior stiffness matrix sum_ab D_a^T diag(mu_ab) D_b restricted to the
// interior nodes (boundary ring trimmed; quadrature sums still run over all
// nodes).  mu_ab is symmetric, given as three nodal fields (00, 01, 11).
Eigen::MatrixXd assemble_weak_stiffness(const PolarGrid& grid,
                                        const Eigen::VectorXd& mu00,
                                        const Eigen::VectorXd& mu01,
                                        const Eigen::VectorXd& mu11);

// Dense matrix of d/dy^a (oracle-scale only).
Eigen::MatrixXd dense_derivative_matrix(const PolarGrid& grid, int a);

// Dirichlet solver for the metric Laplacian in summation-by-parts form.  The
// discrete gradient is exact collocation; the divergence pairing is the
// adjoint of the gradient under the weighted quadrature, which makes the
// projection below an exact orthogonal projection of the discrete inner
// product.  Factorization happens once per metric; solves are backsolves.
class DirichletSolver {
 public:
  DirichletSolver(GridPtr grid, const MetricData& m);

  const PolarGrid& grid() const { return *grid_; }
  GridPtr grid_ptr() const { return grid_; }
  const MetricData& metric() const { return m_; }

  // K(q) = sum_ab D_a^T (w kappa g^{ab} D_b q), full length.
  Eigen::VectorXd stiffness_apply(const Eigen::VectorXd& q) const;
  // weak Laplacian: -K(q)/(w kappa) at interior nodes, zero on the boundary.
  Eigen::VectorXd weak_laplacian(const Eigen::VectorXd& q) const;
  // collocation Laplacian kappa^{-1} d_a(kappa g^{ab} d_b q), (2.9).
  Eigen::VectorXd laplacian(const Eigen::VectorXd& q) const;

  // weak solve of laplacian q = f with q|boundary = 0, iterative refinement.
  Eigen::VectorXd solve(const Eigen::VectorXd& f, double tol = 1e-11) const;
  // q|boundary = bc (bc indexed by angular node).
  Eigen::VectorXd solve_with_boundary(const Eigen::VectorXd& f,
                                      const Eigen::VectorXd& bc,
                                      double tol = 1e-11) const;
  // batched backsolves of S X = RHS_int (columns), interior indexing.
  Eigen::MatrixXd backsolve(const Eigen::MatrixXd& rhs_int) const;

  // metric gradient (grad q)^a = g^{ab} d_b q as nodal components.
  Eigen::MatrixXd metric_gradient(const Eigen::VectorXd& q) const;

  // <U,W> = sum w kappa g_ab U^a W^b (3.2)
  double inner(const Eigen::MatrixXd& U, const Eigen::MatrixXd& W) const;
  double norm(const Eigen::MatrixXd& U) const { return std::sqrt(inner(U, U)); }

  // weak divergence pieces: numerator n(W)_p = sum_a (D_a^T (w kappa W^a))_p
  Eigen::VectorXd weak_div_numerator(const Eigen::MatrixXd& W) const;
  // -n/(w kappa) at interior nodes, zero on the boundary ring
  Eigen::VectorXd weak_divergence(const Eigen::MatrixXd& W) const;
  // discrete normal flux through the boundary ring (size n_angular)
  Eigen::VectorXd boundary_flux(const Eigen::MatrixXd& W) const;
  // flux of the radial field; positive weights used to normalize traces
  const Eigen::VectorXd& flux_weights() const { return flux_w_; }

  // P U = U - grad p, weak laplacian p = weak div U, p|boundary = 0 (3.1)
  Eigen::MatrixXd project_divfree(const Eigen::MatrixXd& U) const;

  // normal operator A_f W = -grad of the harmonic extension of the boundary
  // trace of (d_c f) W^c; W pre-projected (3.4).  Requires f|boundary = 0.
  Eigen::MatrixXd normal_operator(const Eigen::VectorXd& f,
                                  const Eigen::MatrixXd& W) const;
  // boundary weight lambda_k with <U, A_f W> = -sum_k omega_k lambda_k
  // trace(U)_k trace(W)_k; lambda = grad_N f / sqrt(g^{ab} n_a n_b).
  Eigen::VectorXd normal_boundary_weight(const Eigen::VectorXd& f) const;

  // projected multiplication (3.9): M_beta W = P(g^{ab} beta_bc W^c)
  Eigen::MatrixXd projected_multiplication(const Field& beta,
                                           const Eigen::MatrixXd& W) const;
  // G = M_g; identity on divergence-free fields (3.11)
  Eigen::MatrixXd identity_operator(const Eigen::MatrixXd& W) const;

  const Eigen::VectorXd& weighted_kappa() const { return wk_; }

 private:
  GridPtr grid_;
  MetricData m_;
  Eigen::VectorXd wk_;  // quad weights times kappa
  Eigen::VectorXd sqrt_gnn_;  // per boundary node: sqrt(g^{ab} n_a n_b)
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd flux_w_;
};

// Dense operator oracles; vec layout is [comp 0 over nodes; comp 1 over nodes].
enum class OperatorTag { Projection, Normal, Multiplication };
Eigen::MatrixXd dense_oracle_assemble(const DirichletSolver& solver, OperatorTag tag,
                                      const Eigen::VectorXd* f_scalar = nullptr,
                                      const Field* beta = nullptr,
                                      int max_nodes = 4096);

// Rayleigh bounds of A_f on the divergence-free subspace by projected
// power/subspace iteration in the weighted inner product.
struct RayleighReport {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
};
RayleighReport rayleigh_extremes(const DirichletSolver& solver,
                                 const Eigen::VectorXd& f, int iters = 200,
                                 std::uint64_t seed = 17);

// Lemma 5.1 diagnostic: pointwise ratio of |dbeta|^2 against the tangential
// term + |curl beta|^2 + |div beta|^2, Eulerian frame, N-tilde the radial
// extension of the outward normal.
struct DivCurlReport {
  double sup_ratio = 0.0;
  double mean_ratio = 0.0;
};
DivCurlReport divcurl_estimate_check(const DirichletSolver& solver, const Field& beta);

}  // namespace fbeuler

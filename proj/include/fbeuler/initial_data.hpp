#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "fbeuler/elliptic.hpp"
#include "fbeuler/state.hpp"

namespace fbeuler {

// Time-derivative jet h_l = D_t^l h |_{t=0} with the data it was built from.
// h_{-1} = -phi (the velocity potential) when the data family v0 = grad(phi)
// is used; the recursion itself treats V0 as primitive.
struct CompatibilityJet {
  int m = 0;
  std::vector<Eigen::VectorXd> h_levels;  // h_0 .. h_m
  std::optional<Eigen::VectorXd> h_minus1;
  Eigen::MatrixXd V0;
  std::vector<std::string> provenance;
};

// The recursion h_{l+2} = lap h_l + F_{l+2}(...), with the multilinear F
// terms generated symbolically from the commutator rules and every level
// projected to exact zero boundary trace (V0 is adjusted consistently when
// the level-1 trace is corrected).
CompatibilityJet compat_recursion(const Eigen::VectorXd& h0, const Eigen::VectorXd& h1,
                                  const Eigen::MatrixXd& V0, int m,
                                  const DirichletSolver& solver);

// F_{l+2} alone (the recursion minus the Laplacian term); F_2 = (d_i V^j)(d_j V^i).
Eigen::VectorXd f_term(int l_plus_2, const std::vector<Eigen::VectorXd>& h_levels,
                       const Eigen::MatrixXd& V0, const DirichletSolver& solver);

// Boundary power series of Lemma 16.2 (flat metric): coefficients
// h_{k,l}(omega) for k + l <= N_max from the double induction on (16.18);
// F-columns enter as optional externally supplied data (zero by default).
struct BoundarySeries {
  int n_max = 0;
  // coeff[k][l], each a vector over the angular nodes
  std::vector<std::vector<Eigen::VectorXd>> coeff;
  std::vector<double> eps;  // cutoff scales per radial order
};
BoundarySeries boundary_series(const PolarGrid& grid,
                               const std::vector<Eigen::VectorXd>& h0_data,
                               const std::vector<Eigen::VectorXd>& h1_data,
                               int n_max);

// Borel-style assembly (16.25): h(t) = sum chi(t/eps_l) h_l t^l / l!, and the
// map trajectory from its own jet x_{l+2} = D_t^{l+2} x|_0 assembled the same
// way.  eps_l follows the (||h_l|| + 1) eps_l <= 1/2 rule.
struct AssembledData {
  LagrangianState state;
  std::vector<double> eps_h, eps_x;
};
AssembledData assemble_formal_solution(const CompatibilityJet& jet,
                                       const Eigen::MatrixXd& v0,
                                       const DirichletSolver& solver, double T,
                                       int n_times);

// boundary-trace residuals of D_t^k h at t=0 for k <= m
struct CompatibilityReport {
  std::vector<double> residual;  // per k
  double scale = 0.0;
};
CompatibilityReport verify_compatibility(const LagrangianState& state, int m);

// default data family (16.10): f0 = y, v0 = grad(phi), h1 = -lap(phi)
CompatibilityJet jet_from_potential(const Eigen::VectorXd& phi,
                                    const Eigen::VectorXd& h0, int m,
                                    const DirichletSolver& solver);

// short-time integration oracle: solve the coupled system from the data on
// the given grid and finite-difference D_t^2 h at t = 0
Eigen::VectorXd oracle_h2(const CompatibilityJet& jet, const DirichletSolver& solver,
                          double dt, int nt);

std::string jet_to_json(const CompatibilityJet& jet);

}  // namespace fbeuler

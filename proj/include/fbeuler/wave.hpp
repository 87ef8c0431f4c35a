#pragma once

#include <Eigen/Cholesky>
#include <memory>
#include <vector>

#include "fbeuler/elliptic.hpp"
#include "fbeuler/state.hpp"

namespace fbeuler {

// Implicit-midpoint kernel for D_t^2(e' psi) - lap psi = f with psi | boundary
// = 0, first-order in (psi, pi = D_t(e' psi)).  Unconditionally stable and
// symmetric; the CFL-style precondition on dt is an accuracy guard only.
// All coefficient dependence is explicit so the tangent (exact derivative of
// the discrete recursion with respect to every coefficient and input) and the
// second variation are available for the Euler-map linearizations.
class LinearWaveKernel {
 public:
  struct Coeffs {  // one entry per midpoint (size nt-1)
    Eigen::VectorXd wk;       // quadrature weight * kappa at the midpoint
    Eigen::VectorXd ep;       // e' at the midpoint
    Eigen::VectorXd epdot;    // D_t e' at the midpoint
    Eigen::VectorXd mu00, mu01, mu11;  // w kappa g^{ab} stiffness fields
  };
  struct TangentCoeffs {  // variations of the above (zero vectors allowed)
    Eigen::VectorXd wk, ep, epdot, mu00, mu01, mu11;
  };
  struct Trajectory {
    std::vector<Eigen::VectorXd> psi, pi;
  };

  LinearWaveKernel(GridPtr grid, double dt, std::vector<Coeffs> coeffs,
                   bool static_coeffs);

  int n_steps() const { return static_cast<int>(coeffs_.size()); }
  double dt() const { return dt_; }
  const Coeffs& coeffs(int step) const { return coeffs_[step]; }

  Trajectory run(const std::vector<Eigen::VectorXd>& f, const Eigen::VectorXd& psi0,
                 const Eigen::VectorXd& pi0) const;

  // Exact derivative of run() with respect to coefficients, forcing and data.
  Trajectory run_tangent(const Trajectory& base,
                         const std::vector<Eigen::VectorXd>& base_f,
                         const std::vector<TangentCoeffs>& dcoeffs,
                         const std::vector<Eigen::VectorXd>& df,
                         const Eigen::VectorXd& dpsi0,
                         const Eigen::VectorXd& dpi0) const;

  // Second variation for the linear law (ep constant per run, epdot = 0):
  // needs both first-order trajectories, their forcing variations, and the
  // mixed second-order coefficient fields; variation initial data are zero.
  Trajectory run_second(const Trajectory& base,
                        const std::vector<Eigen::VectorXd>& base_f,
                        const std::vector<TangentCoeffs>& dc1,
                        const std::vector<Eigen::VectorXd>& df1, const Trajectory& t1,
                        const std::vector<TangentCoeffs>& dc2,
                        const std::vector<Eigen::VectorXd>& df2, const Trajectory& t2,
                        const std::vector<TangentCoeffs>& d2c,
                        const std::vector<Eigen::VectorXd>& d2f) const;

  // weak apply of sum_a D_a^T(mu_ab D_b q) with arbitrary coefficient fields
  static Eigen::VectorXd weak_apply(const PolarGrid& grid, const Eigen::VectorXd& mu00,
                                    const Eigen::VectorXd& mu01,
                                    const Eigen::VectorXd& mu11,
                                    const Eigen::VectorXd& q);

 private:
  Eigen::VectorXd stiffness(int step, const Eigen::VectorXd& q) const;
  const Eigen::LLT<Eigen::MatrixXd>& factor(int step) const;

  GridPtr grid_;
  double dt_ = 0.0;
  std::vector<Coeffs> coeffs_;
  bool static_coeffs_ = true;
  std::vector<std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>>> llt_;
};

struct WaveOptions {
  double cfl_safety = 10.0;
  double newton_tol = 1e-11;
  int newton_max = 25;
};

// midpoint coefficient fields from a metric series and nodal e' series
std::vector<LinearWaveKernel::Coeffs> midpoint_coeffs(
    const MetricSeries& ms, const std::vector<Eigen::VectorXd>& eprime);

// One-shot linear solve of (7.1) on the metric series with nodal e'(t,y)
// coefficients; psi1 = D_t psi(0).
LinearWaveKernel::Trajectory step_wave(const MetricSeries& ms,
                                       const std::vector<Eigen::VectorXd>& eprime,
                                       const std::vector<Eigen::VectorXd>& f,
                                       const Eigen::VectorXd& psi0,
                                       const Eigen::VectorXd& psi1,
                                       const WaveOptions& opts = {});

// quadratic forcing (d_i V^j)(d_j V^i) per time node
std::vector<Eigen::VectorXd> quadratic_forcing(const MetricSeries& ms,
                                               const std::vector<Eigen::MatrixXd>& v);

struct EnthalpyResult {
  std::vector<Eigen::VectorXd> h;
  std::vector<Eigen::VectorXd> pi;       // D_t e(h)
  std::vector<double> margin;            // physical-condition margin per time
  bool condition_lost = false;
};

// h = Psi(x): wave equation (2.21) driven by the trajectory metric, initial
// data (2.11).  Linear law goes through the kernel; general e(h) through a
// Newton midpoint iteration (17.1).  force_nonlinear_path exercises the
// general path for linear laws (path-agreement tests).
EnthalpyResult solve_enthalpy(const MetricSeries& ms,
                              const std::vector<Eigen::MatrixXd>& v_series,
                              const EnthalpyLaw& law, const Eigen::VectorXd& h0,
                              const Eigen::VectorXd& hdot0,
                              const WaveOptions& opts = {},
                              bool force_nonlinear_path = false);

// Energy ledger (7.18)/(17.13): E(t, r-1) = E_r at time node t, r = 1..rmax.
Eigen::MatrixXd wave_energy(const MetricSeries& ms,
                            const std::vector<Eigen::VectorXd>& psi,
                            const std::vector<Eigen::VectorXd>& eprime, int rmax,
                            const std::vector<Eigen::MatrixXd>* F1 = nullptr);

struct DivergenceFormResult {
  std::vector<Eigen::VectorXd> phi, q, qprime;
  std::vector<Eigen::MatrixXd> W1, F1;
};

// Theorem 7.4 system: D_t^2 phi - lap(p' phi) = f via psi = p' phi, then
// W1 = grad q with lap q = phi (7.29), F1 = grad q' with lap q' = f (7.30).
DivergenceFormResult solve_divergence_form(
    const MetricSeries& ms, const std::vector<Eigen::VectorXd>& eprime,
    const std::vector<Eigen::VectorXd>& f,
    const std::vector<const DirichletSolver*>& solvers, const WaveOptions& opts = {});

// residual of P Dhat_t^j W1 = P B_j(W1, ..., Dhat^{j-1} W1) (7.36) at one time
double projection_identity_residual(const MetricSeries& ms,
                                    const std::vector<Eigen::MatrixXd>& W1,
                                    const std::vector<const DirichletSolver*>& solvers,
                                    int j, int time_index);

// max over the first k discrete time derivatives at t=0, for the C00 checks
double vanishing_order_defect(const std::vector<Eigen::VectorXd>& series, double dt,
                              int k);

}  // namespace fbeuler

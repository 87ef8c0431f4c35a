#pragma once

#include <memory>
#include <vector>

#include "fbeuler/elliptic.hpp"
#include "fbeuler/state.hpp"
#include "fbeuler/wave.hpp"

namespace fbeuler {

// Vector trajectory in one of the two frames; mixing them up is the classic
// sign error, hence the tag.
struct FrameSeries {
  std::vector<Eigen::MatrixXd> comps;  // per time, n_nodes x n
  bool lagrangian = true;
};

// Everything derived from one map trajectory x(t): velocity, metric series,
// the solved enthalpy, the forcing, the wave kernel for the h-equation and
// per-time Dirichlet factorizations.  Built once, shared by the operators.
struct EulerWorkspace {
  GridPtr grid;
  Eigen::VectorXd t_nodes;
  EnthalpyLaw law;
  std::vector<Eigen::MatrixXd> x, v;
  MetricSeries ms;
  std::vector<Eigen::VectorXd> f;          // (d_i V^j)(d_j V^i)
  EnthalpyResult enthalpy;                 // h = Psi(x)
  std::vector<Eigen::VectorXd> eprime;     // e'(h) per time
  std::shared_ptr<LinearWaveKernel> kernel;
  LinearWaveKernel::Trajectory h_traj;     // psi = h, pi = D_t e(h)
  std::vector<std::shared_ptr<DirichletSolver>> solvers;  // per time node

  int n_times() const { return static_cast<int>(t_nodes.size()); }
  double dt() const { return t_nodes[1] - t_nodes[0]; }
};

EulerWorkspace make_euler_workspace(GridPtr grid, const Eigen::VectorXd& t_nodes,
                                    const std::vector<Eigen::MatrixXd>& x,
                                    const EnthalpyLaw& law,
                                    const Eigen::VectorXd& h0,
                                    const Eigen::VectorXd& hdot0,
                                    bool with_solvers = false);

// Phi_i(x) = D_t^2 x_i + d_i h with h = Psi(x) (2.20); Eulerian components.
std::vector<Eigen::MatrixXd> euler_residual(const EulerWorkspace& ws);
// variant with an externally pinned enthalpy trajectory
std::vector<Eigen::MatrixXd> euler_residual_pinned(
    GridPtr grid, const Eigen::VectorXd& t_nodes,
    const std::vector<Eigen::MatrixXd>& x, const std::vector<Eigen::VectorXd>& h);

// Exact derivative of the discrete Euler map: Phi'(x) dx including the
// linearized enthalpy solve (2.28)-(2.29).
std::vector<Eigen::MatrixXd> linearized_apply(const EulerWorkspace& ws,
                                              const std::vector<Eigen::MatrixXd>& dx);

// Second variation Phi''(x)(dx, ex) (13.4); linear law only.
std::vector<Eigen::MatrixXd> second_variation(const EulerWorkspace& ws,
                                              const std::vector<Eigen::MatrixXd>& dx,
                                              const std::vector<Eigen::MatrixXd>& ex);

// Modified operator L1 (2.55) on a Lagrangian-frame trajectory, including the
// delta-h wave solve (9.10); also returns delta h when requested.
struct ModifiedApplyResult {
  FrameSeries L1W;
  std::vector<Eigen::VectorXd> delta_h;
};
ModifiedApplyResult modified_linearized_apply(const EulerWorkspace& ws,
                                              const FrameSeries& W);
// B3 W (2.63) with the covariant derivative of Phi via Christoffel symbols.
FrameSeries b3_apply(const EulerWorkspace& ws, const FrameSeries& W);
// div Phi = D_t div V + D_t^2 e(h) (2.44), per time node.
std::vector<Eigen::VectorXd> div_phi(const EulerWorkspace& ws);

// frame conversions (2.46)
FrameSeries to_lagrangian(const EulerWorkspace& ws,
                          const std::vector<Eigen::MatrixXd>& eulerian);
std::vector<Eigen::MatrixXd> to_eulerian(const EulerWorkspace& ws,
                                         const FrameSeries& W);

// Evolution solver for (8.1): Wddot + A W + B0 W + B1 Wdot = H, div H = 0,
// zero initial data (optional explicit data for the energy studies).  The
// two-forms beta0/beta1 define the projected multiplication operators.
struct EvolutionInput {
  std::vector<Eigen::MatrixXd> H;            // per time, div-free
  std::vector<Eigen::MatrixXd> beta0, beta1; // per time, n_nodes x n*n; empty = 0
  Eigen::MatrixXd W0, Wdot0;                 // optional; zero if empty
};
struct EvolutionResult {
  std::vector<Eigen::MatrixXd> W, Wdot;
  double max_div = 0.0;  // max_t |div_w W| / |W|
};

// Precomputed dense midpoint operators for the evolution stepping; also used
// by the structural inverse where the same trajectory is stepped repeatedly.
class EvolutionStepper {
 public:
  EvolutionStepper(const EulerWorkspace& ws,
                   const std::vector<Eigen::MatrixXd>* beta0,
                   const std::vector<Eigen::MatrixXd>* beta1);
  EvolutionResult solve(const EvolutionInput& in) const;
  const DirichletSolver& midpoint_solver(int step) const { return *mid_solvers_[step]; }

 private:
  const EulerWorkspace& ws_;
  std::vector<std::shared_ptr<DirichletSolver>> mid_solvers_;
  std::vector<Eigen::VectorXd> h_mid_, sdot_mid_;
  std::vector<std::shared_ptr<Eigen::PartialPivLU<Eigen::MatrixXd>>> lu_;
  std::vector<Eigen::MatrixXd> m_right_;
  bool static_ops_ = false;
};

EvolutionResult divfree_evolution_solve(const EulerWorkspace& ws,
                                        const EvolutionInput& in);

// Right inverse of Phi'(x).
enum class InversionMode { Structural, Oracle };
struct InversionOptions {
  InversionMode mode = InversionMode::Structural;
  double tol = 1e-10;
  int max_outer = 50;
  int inner_sweeps = 2;
  int oracle_max_unknowns = 8192;
  double min_margin = 0.0;  // refuse if the physical margin drops below this
  bool throw_on_stall = true;
};
struct InversionResult {
  std::vector<Eigen::MatrixXd> dx;
  double residual_rel = 0.0;
  std::vector<double> residual_history;
};
InversionResult invert_linearized(const EulerWorkspace& ws,
                                  const std::vector<Eigen::MatrixXd>& F,
                                  const InversionOptions& opts = {});

}  // namespace fbeuler

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "fbeuler/field.hpp"
#include "fbeuler/grid.hpp"

namespace fbeuler {

// Lagrangian map x(t,y), velocity v = D_t x and enthalpy h on grid x time.
struct LagrangianState {
  GridPtr grid;
  Eigen::VectorXd t_nodes;               // uniform, t_nodes[0] = 0
  std::vector<Eigen::MatrixXd> x;        // per time, n_nodes x n
  std::vector<Eigen::MatrixXd> v;        // per time, n_nodes x n
  std::vector<Eigen::VectorXd> h;        // per time, n_nodes

  int n_times() const { return static_cast<int>(t_nodes.size()); }
  double dt() const { return t_nodes[1] - t_nodes[0]; }

  // Shape checks, boundary trace of h, and v against the discrete D_t x.
  void validate(double v_tol = 1e-8) const;
};

// Static state x = y, v = 0 with a prescribed enthalpy snapshot repeated in time.
LagrangianState static_state(GridPtr grid, const Eigen::VectorXd& h0, int n_times,
                             double dt);

// Metric quantities of a single time slice.  All per-node matrices are stored
// row-major in n_nodes x (n*n) blocks: jac(i,a) = dx^i/dy^a at column i*n+a,
// jac_inv(a,i) at a*n+i, g(a,b) at a*n+b.
struct MetricData {
  GridPtr grid;
  int n = 2;
  Eigen::MatrixXd jac, jac_inv;
  Eigen::MatrixXd g, g_inv;
  Eigen::VectorXd kappa, sigma;
  std::optional<Eigen::VectorXd> sigma_dot;  // D_t sigma, set by metric_series

  // identity-map metric on a grid
  static MetricData identity(GridPtr grid);
};

MetricData build_metric(const LagrangianState& state, int time_index);
MetricData build_metric_slice(GridPtr grid, const Eigen::MatrixXd& x_slice);
// metric quantities from a prescribed nodal Jacobian (used for midpoint
// averaging in the time steppers)
MetricData metric_from_jacobian(GridPtr grid, const Eigen::MatrixXd& jac);

struct MetricSeries {
  GridPtr grid;
  Eigen::VectorXd t_nodes;
  std::vector<MetricData> at;  // per time, sigma_dot filled

  int n_times() const { return static_cast<int>(t_nodes.size()); }
  double dt() const { return t_nodes[1] - t_nodes[0]; }
};

MetricSeries build_metric_series(const LagrangianState& state);

// Eulerian derivative of a scalar: (d_i f) = (dy^a/dx^i) d_a f.
Eigen::MatrixXd eulerian_gradient(const MetricData& m, const Eigen::VectorXd& f);
// Eulerian derivatives of a vector of components (n_nodes x nc):
// out column c*n+i holds d_i of component c.
Eigen::MatrixXd eulerian_jacobian(const MetricData& m, const Eigen::MatrixXd& comps);

// Condition monitors (Lemma 11.1 traces).
struct ConditionReport {
  double c1_margin = 0.0;      // sup over nodes of sqrt(|dx/dy|^2 + |dy/dx|^2)
  double c0_margin = 0.0;      // min over boundary of -grad_N h
  Eigen::VectorXd m_of_t;      // M(t)
  Eigen::VectorXd n_of_t;      // N(t) = sup 1/|grad_N h|
  bool m_bounded = false;      // M(t) <= 2 M(0) on [0,T]
  bool n_bounded = false;      // N(t) <= 2 N(0) on [0,T]
};

// sup_y sqrt(|dx/dy|_F^2 + |dy/dx|_F^2); pass iff sup <= c1^2 in the squared
// convention of (2.13).  The innermost ring is excluded.
struct CoordinateConditionResult {
  double sup_squared = 0.0;
  bool pass = false;
};
CoordinateConditionResult check_coordinate_condition(const MetricData& m, double c1);

// min over boundary nodes of -grad_N h, N the outward Eulerian unit normal.
double check_physical_condition(const LagrangianState& state, const MetricData& m,
                                int time_index);
double physical_margin(const MetricData& m, const Eigen::VectorXd& h_slice);

ConditionReport track_conditions(const LagrangianState& state);

// e(h) law with derivatives; default is the linear law e(h) = c h.
struct EnthalpyLaw {
  std::function<double(double)> e, de, d2e;
  bool linear = true;
  double c = 1.0;

  static EnthalpyLaw linear_law(double c) {
    EnthalpyLaw law;
    law.linear = true;
    law.c = c;
    law.e = [c](double h) { return c * h; };
    law.de = [c](double) { return c; };
    law.d2e = [](double) { return 0.0; };
    return law;
  }

  // Newton inversion of e
  double invert(double target, double guess = 0.0) const;

  Eigen::VectorXd e_of(const Eigen::VectorXd& h) const;
  Eigen::VectorXd de_of(const Eigen::VectorXd& h) const;
  Eigen::VectorXd d2e_of(const Eigen::VectorXd& h) const;
};

}  // namespace fbeuler

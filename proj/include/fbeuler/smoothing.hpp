#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "fbeuler/grid.hpp"

namespace fbeuler {

// Uniform tensor box in (t, y1, y2) used for the extension + mollification
// chain.  Data index: (it * ny + i1) * ny + i2.
struct Box {
  double t_lo = -0.5, t_hi = 2.5;
  double y_lo = -2.5, y_hi = 2.5;
  int nt = 64, ny = 64;

  double dt() const { return (t_hi - t_lo) / nt; }
  double dy() const { return (y_hi - y_lo) / ny; }
  double t_at(int i) const { return t_lo + i * dt(); }
  double y_at(int i) const { return y_lo + i * dy(); }
  int size() const { return nt * ny * ny; }
  int index(int it, int i1, int i2) const { return (it * ny + i1) * ny + i2; }
};

struct BoxFunction {
  Box box;
  Eigen::VectorXd data;
  double T = 1.0;  // physical time horizon for the domain mask
};

using SpaceTimeFn = std::function<double(double t, double y1, double y2)>;

// Finite-order Hestenes extension kernel: nodes lambda_k = (k+1)/2 for
// k = 1..2M+1 so the sample stride 2 lambda - 1 is an integer, moments
// sum c = 1 and sum c lambda^j = 0 for 1 <= j <= M-1 enforced by a
// minimum-norm solve.
struct ExtensionKernel {
  int M = 6;
  Eigen::VectorXd lambda;  // node positions
  Eigen::VectorXd c;       // weights
};
ExtensionKernel make_extension_kernel(int M);

// one-dimensional extension of samples f(s), s <= 0, to s > 0:
// f_ext(s) = sum_k c_k f(s (1 - 2 lambda_k)); evaluator form.
double extend_evaluate(const ExtensionKernel& k, const std::function<double(double)>& f,
                       double s);

struct SmootherConfig {
  double theta = 1.0;      // >= 1
  int M = 6;               // extension order
  double cutoff_lo = 0.5;  // multiplier is 1 for |xi| <= cutoff_lo * theta_base * theta
  double theta_base = 24.0;  // kernel dilation (the free scale of the mollifier)
  Box box;
  double T = 1.0;          // time horizon of the input
};

// The full section-14 chain: zero-extension in t <= 0, Hestenes extension in
// time beyond T and in radius beyond the unit circle (after a collar split at
// the origin), sampling onto the box, band-limited radial-bump Fourier
// multiplier, and the chi(theta t) temporal cutoff.
class Smoother {
 public:
  explicit Smoother(const SmootherConfig& cfg);

  // extension + sampling only (theta-independent part)
  BoxFunction extend_to_box(const SpaceTimeFn& u) const;
  // multiplier + cutoff at a given theta
  BoxFunction mollify(const BoxFunction& ubox, double theta) const;
  // the whole operator
  BoxFunction smooth(const SpaceTimeFn& u, double theta) const;

  const SmootherConfig& config() const { return cfg_; }

 private:
  SmootherConfig cfg_;
  ExtensionKernel kernel_;
};

// adapter: polar-grid trajectory -> callable (degree-5 Lagrange in time,
// spectral evaluation in space)
SpaceTimeFn trajectory_function(GridPtr grid, const Eigen::VectorXd& t_nodes,
                                const std::vector<Eigen::VectorXd>& series);

// evaluate a box function at an arbitrary interior point (tricubic-by-axis
// Lagrange interpolation)
double box_eval(const BoxFunction& f, double t, double y1, double y2);

// Axiom verification report for (14.5)-(14.9).
struct SmootherAxiomRow {
  std::string axiom;
  double a = 0.0, b = 0.0;
  double slope = 0.0, expected = 0.0, constant = 0.0;
  bool pass = false;
};
struct TaggedFunction {
  std::string name;
  SpaceTimeFn fn;
  double regularity = 0.0;  // Holder class b
};
std::vector<SmootherAxiomRow> verify_smoother_axioms(
    const Smoother& smoother, const std::vector<TaggedFunction>& corpus,
    double slope_tol = 0.25, double slope_tol_derivative = 0.3);

// the standard corpus: |t - t0|^gamma profiles with smooth spatial factors
std::vector<TaggedFunction> smoothing_corpus(double T);

}  // namespace fbeuler

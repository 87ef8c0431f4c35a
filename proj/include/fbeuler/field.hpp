#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fbeuler/errors.hpp"
#include "fbeuler/grid.hpp"

namespace fbeuler {

// Variance matters: vectors and one-forms transform differently under the
// Lie derivatives, and two-forms are kept with both index slots explicit.
enum class Variance { Scalar, Vector, OneForm, TwoForm };

struct Field {
  Variance var = Variance::Scalar;
  int n = 2;                // spatial dimension
  Eigen::MatrixXd data;     // n_nodes x ncomp

  Field() = default;
  Field(Variance v, int dim, int n_nodes) : var(v), n(dim) {
    data = Eigen::MatrixXd::Zero(n_nodes, ncomp(v, dim));
  }

  static int ncomp(Variance v, int dim) {
    switch (v) {
      case Variance::Scalar: return 1;
      case Variance::Vector:
      case Variance::OneForm: return dim;
      case Variance::TwoForm: return dim * dim;
    }
    return 1;
  }

  int n_nodes() const { return static_cast<int>(data.rows()); }

  // component accessors; two-forms indexed (a,b) -> a*n + b
  Eigen::VectorXd comp(int a) const { return data.col(a); }
  auto col(int a) { return data.col(a); }
  auto col(int a, int b) { return data.col(a * n + b); }
  Eigen::VectorXd comp(int a, int b) const { return data.col(a * n + b); }

  double max_abs() const { return data.size() ? data.cwiseAbs().maxCoeff() : 0.0; }
};

inline Field scalar_field(const Eigen::VectorXd& v) {
  Field f;
  f.var = Variance::Scalar;
  f.data = v;
  return f;
}

inline Field vector_field(const Eigen::MatrixXd& comps) {
  Field f;
  f.var = Variance::Vector;
  f.n = static_cast<int>(comps.cols());
  f.data = comps;
  return f;
}

inline Field one_form(const Eigen::MatrixXd& comps) {
  Field f;
  f.var = Variance::OneForm;
  f.n = static_cast<int>(comps.cols());
  f.data = comps;
  return f;
}

// Second-order finite differences along a uniform time axis, centered in the
// interior and one-sided at the ends.  `series` holds one matrix per time.
template <typename Mat>
Mat fd_time1(const std::vector<Mat>& series, double dt, int i) {
  const int nt = static_cast<int>(series.size());
  if (nt < 3) throw ConfigInvalid("fd_time1 needs at least 3 time nodes");
  if (i == 0) return (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt);
  if (i == nt - 1)
    return (3.0 * series[nt - 1] - 4.0 * series[nt - 2] + series[nt - 3]) / (2.0 * dt);
  return (series[i + 1] - series[i - 1]) / (2.0 * dt);
}

template <typename Mat>
Mat fd_time2(const std::vector<Mat>& series, double dt, int i) {
  const int nt = static_cast<int>(series.size());
  if (nt < 4) throw ConfigInvalid("fd_time2 needs at least 4 time nodes");
  const double d2 = dt * dt;
  if (i == 0)
    return (2.0 * series[0] - 5.0 * series[1] + 4.0 * series[2] - series[3]) / d2;
  if (i == nt - 1)
    return (2.0 * series[nt - 1] - 5.0 * series[nt - 2] + 4.0 * series[nt - 3] -
            series[nt - 4]) / d2;
  return (series[i + 1] - 2.0 * series[i] + series[i - 1]) / d2;
}

// One-sided k-th time derivative at t=0 using a (k+order)-point stencil,
// exact for polynomials of degree < npts.
Eigen::VectorXd fd_time_deriv_at_start(const std::vector<Eigen::VectorXd>& series,
                                       double dt, int k, int npts);

// Stencil weights for the k-th derivative at x=0 from nodes 0, dt, 2dt, ...
Eigen::VectorXd fd_onesided_weights(int k, int npts, double dt);

}  // namespace fbeuler

#include "fbeuler/field.hpp"

namespace fbeuler {

Eigen::VectorXd fd_onesided_weights(int k, int npts, double dt) {
  // Solve the Vandermonde system sum_j w_j (j dt)^m / m! = delta_{mk}.
  Eigen::MatrixXd V(npts, npts);
  for (int m = 0; m < npts; ++m) {
    double fact = 1.0;
    for (int q = 1; q <= m; ++q) fact *= q;
    for (int j = 0; j < npts; ++j) V(m, j) = std::pow(j * dt, m) / fact;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(npts);
  rhs[k] = 1.0;
  return V.fullPivLu().solve(rhs);
}

Eigen::VectorXd fd_time_deriv_at_start(const std::vector<Eigen::VectorXd>& series,
                                       double dt, int k, int npts) {
  if (static_cast<int>(series.size()) < npts)
    throw ConfigInvalid("fd_time_deriv_at_start: not enough time nodes");
  const Eigen::VectorXd w = fd_onesided_weights(k, npts, dt);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(series[0].size());
  for (int j = 0; j < npts; ++j) out += w[j] * series[j];
  return out;
}

}  // namespace fbeuler

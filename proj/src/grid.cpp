#include "fbeuler/grid.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"

namespace fbeuler {
namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

using Eigen::MatrixXd;
using Eigen::VectorXd;

// CGL differentiation matrix for nodes x_j = cos(j pi / M), j = 0..M,
// with the negative-sum trick on the diagonal.
MatrixXd cgl_diff_matrix(int M) {
  const int n = M + 1;
  VectorXd x(n), c(n);
  for (int j = 0; j < n; ++j) {
    x[j] = std::cos(kPi * j / M);
    c[j] = (j == 0 || j == M) ? 2.0 : 1.0;
  }
  MatrixXd D(n, n);
  for (int i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double sgn = (((i + j) % 2) == 0) ? 1.0 : -1.0;
      D(i, j) = (c[i] / c[j]) * sgn / (x[i] - x[j]);
      rowsum += D(i, j);
    }
    D(i, i) = -rowsum;
  }
  return D;
}

// int_0^1 T_k(x) dx
double cheb_integral_01(int k) {
  if (k == 0) return 1.0;
  if (k == 1) return 0.5;
  auto t_at_0 = [](int m) -> double {
    if (m % 2 == 1) return 0.0;
    return ((m / 2) % 2 == 0) ? 1.0 : -1.0;
  };
  const double hi = (1.0 - t_at_0(k + 1)) / (2.0 * (k + 1));
  const double lo = (1.0 - t_at_0(k - 1)) / (2.0 * (k - 1));
  return hi - lo;
}

// int_0^1 x T_m(x) dx
double cheb_x_integral_01(int m) {
  if (m == 0) return cheb_integral_01(1);
  return 0.5 * (cheb_integral_01(m + 1) + cheb_integral_01(std::abs(m - 1)));
}

}  // namespace

PolarGrid::PolarGrid(int n_radial, int n_angular)
    : n_radial_(n_radial), n_angular_(n_angular) {
  if (n_radial < 3) throw ConfigInvalid("n_radial must be >= 3");
  if (n_angular < 4 || n_angular % 2 != 0)
    throw ConfigInvalid("n_angular must be even and >= 4");

  const int M = 2 * n_radial - 1;  // full diameter: M+1 CGL points, none at 0
  VectorXd x_full(M + 1);
  for (int j = 0; j <= M; ++j) x_full[j] = std::cos(kPi * j / M);

  radial_nodes_.resize(n_radial);
  for (int i = 0; i < n_radial; ++i) radial_nodes_[i] = x_full[n_radial - 1 - i];
  min_radial_spacing_ = radial_nodes_[n_radial - 1] - radial_nodes_[n_radial - 2];
  for (int i = 0; i + 1 < n_radial; ++i)
    min_radial_spacing_ =
        std::min(min_radial_spacing_, radial_nodes_[i + 1] - radial_nodes_[i]);

  angles_.resize(n_angular);
  for (int k = 0; k < n_angular; ++k) angles_[k] = 2.0 * kPi * k / n_angular;

  nodes_.resize(n_nodes(), 2);
  for (int i = 0; i < n_radial; ++i)
    for (int k = 0; k < n_angular; ++k) {
      const int p = node_index(i, k);
      nodes_(p, 0) = radial_nodes_[i] * std::cos(angles_[k]);
      nodes_(p, 1) = radial_nodes_[i] * std::sin(angles_[k]);
    }

  // Fold the full-diameter differentiation matrix onto the positive half.
  const MatrixXd D_full = cgl_diff_matrix(M);
  dr_same_.resize(n_radial, n_radial);
  dr_opp_.resize(n_radial, n_radial);
  for (int i = 0; i < n_radial; ++i) {
    const int ji = n_radial - 1 - i;
    for (int ip = 0; ip < n_radial; ++ip) {
      const int jp = n_radial - 1 - ip;
      dr_same_(i, ip) = D_full(ji, jp);
      dr_opp_(i, ip) = D_full(ji, M - jp);
    }
  }

  // Fourier differentiation matrix, even node count.
  dphi_ = MatrixXd::Zero(n_angular, n_angular);
  for (int k = 0; k < n_angular; ++k)
    for (int kp = 0; kp < n_angular; ++kp) {
      if (k == kp) continue;
      const int d = k - kp;
      const double sgn = ((d % 2) == 0) ? 1.0 : -1.0;
      dphi_(k, kp) = 0.5 * sgn / std::tan(0.5 * d * 2.0 * kPi / n_angular);
    }

  // Quadrature: w+_j = int_0^1 x l_j(x) dx on the full node set, folded.
  VectorXd w_plus(M + 1);
  {
    VectorXd J(M + 1);
    for (int m = 0; m <= M; ++m) J[m] = cheb_x_integral_01(m);
    for (int j = 0; j <= M; ++j) {
      const double cj = (j == 0 || j == M) ? 2.0 : 1.0;
      double s = 0.0;
      for (int m = 0; m <= M; ++m) {
        const double cm = (m == 0 || m == M) ? 2.0 : 1.0;
        s += (2.0 / (M * cm * cj)) * std::cos(kPi * m * j / M) * J[m];
      }
      w_plus[j] = s;
    }
  }
  quad_weights_.resize(n_nodes());
  const double wang = 2.0 * kPi / n_angular;
  for (int i = 0; i < n_radial; ++i) {
    const int ji = n_radial - 1 - i;
    const double wr = w_plus[ji] + w_plus[M - ji];
    for (int k = 0; k < n_angular; ++k) quad_weights_[node_index(i, k)] = wr * wang;
  }

  // Chain rule d/dy^1 = cos(phi) d/dr - sin(phi)/r d/dphi, etc.
  for (int a = 0; a < 2; ++a) {
    chain_r_[a].resize(n_nodes());
    chain_phi_[a].resize(n_nodes());
  }
  for (int i = 0; i < n_radial; ++i)
    for (int k = 0; k < n_angular; ++k) {
      const int p = node_index(i, k);
      const double r = radial_nodes_[i];
      const double cs = std::cos(angles_[k]), sn = std::sin(angles_[k]);
      chain_r_[0][p] = cs;
      chain_phi_[0][p] = -sn / r;
      chain_r_[1][p] = sn;
      chain_phi_[1][p] = cs / r;
    }

  boundary_nodes_.resize(n_angular);
  for (int k = 0; k < n_angular; ++k)
    boundary_nodes_[k] = node_index(n_radial - 1, k);
}

VectorXd PolarGrid::d_radial(const VectorXd& f) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> F(f.data(), n_radial_, n_angular_);
  RowMat Fs(n_radial_, n_angular_);
  const int h = n_angular_ / 2;
  for (int k = 0; k < n_angular_; ++k)
    Fs.col(k) = F.col((k + h) % n_angular_);
  RowMat out = dr_same_ * F + dr_opp_ * Fs;
  return Eigen::Map<VectorXd>(out.data(), n_nodes());
}

VectorXd PolarGrid::d_angular(const VectorXd& f) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> F(f.data(), n_radial_, n_angular_);
  RowMat out = F * dphi_.transpose();
  return Eigen::Map<VectorXd>(out.data(), n_nodes());
}

VectorXd PolarGrid::d(const VectorXd& f, int a) const {
  VectorXd out = chain_r_[a].cwiseProduct(d_radial(f));
  out.noalias() += chain_phi_[a].cwiseProduct(d_angular(f));
  return out;
}

VectorXd PolarGrid::d_transpose(const VectorXd& f, int a) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  // (diag(cr) R + diag(cphi) Phi)^T f = R^T (cr f) + Phi^T (cphi f)
  VectorXd fr = chain_r_[a].cwiseProduct(f);
  VectorXd fp = chain_phi_[a].cwiseProduct(f);
  Eigen::Map<const RowMat> Fr(fr.data(), n_radial_, n_angular_);
  Eigen::Map<const RowMat> Fp(fp.data(), n_radial_, n_angular_);
  // R^T g = same^T G + shift(opp^T G); the half shift is an involution.
  RowMat G1 = dr_same_.transpose() * Fr;
  RowMat G2 = dr_opp_.transpose() * Fr;
  const int h = n_angular_ / 2;
  RowMat out(n_radial_, n_angular_);
  for (int k = 0; k < n_angular_; ++k)
    out.col(k) = G1.col(k) + G2.col((k + h) % n_angular_);
  out += Fp * dphi_;
  return Eigen::Map<VectorXd>(out.data(), n_nodes());
}

}  // namespace fbeuler

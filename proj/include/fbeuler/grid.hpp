#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

namespace fbeuler {

// Tensor collocation grid on the unit disk: Chebyshev-Gauss-Lobatto nodes in
// radius (positive half of a symmetric node set, so there is no node at the
// pole and the last node sits on the boundary r=1), equispaced Fourier nodes
// in angle.  A function on the disk is stored node-major with index
// i_rad * n_angular + k_ang (radius outer, angle inner, radii increasing).
//
// Radial differentiation works on the full diameter: the value at (-r, phi)
// is the value at (r, phi + pi), which is an exact identity for functions on
// the disk.  This gives spectral accuracy through the pole without pole
// conditions on individual Fourier modes.
class PolarGrid {
 public:
  PolarGrid(int n_radial, int n_angular);

  int n_radial() const { return n_radial_; }
  int n_angular() const { return n_angular_; }
  int n_nodes() const { return n_radial_ * n_angular_; }
  int dim() const { return 2; }

  const Eigen::VectorXd& radial_nodes() const { return radial_nodes_; }
  double radius(int node) const { return radial_nodes_[node / n_angular_]; }
  double angle(int node) const { return angles_[node % n_angular_]; }
  int node_index(int i_rad, int k_ang) const { return i_rad * n_angular_ + k_ang; }

  // Cartesian coordinates of the nodes, n_nodes x 2.
  const Eigen::MatrixXd& nodes() const { return nodes_; }

  // d/dy^a of scalar nodal data (a = 0 or 1), spectral in both directions.
  Eigen::VectorXd d(const Eigen::VectorXd& f, int a) const;
  // Transpose of the same matrix (for summation-by-parts operators).
  Eigen::VectorXd d_transpose(const Eigen::VectorXd& f, int a) const;

  Eigen::VectorXd d_radial(const Eigen::VectorXd& f) const;
  Eigen::VectorXd d_angular(const Eigen::VectorXd& f) const;

  // Quadrature weights for \int_disk f dy (includes the r dr factor).
  const Eigen::VectorXd& quad_weights() const { return quad_weights_; }

  bool is_boundary(int node) const { return node / n_angular_ == n_radial_ - 1; }
  // Boundary ring nodes in angular order; node_index(n_radial-1, k).
  const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
  int n_interior() const { return (n_radial_ - 1) * n_angular_; }

  // Smallest radial node spacing (at the boundary cluster).
  double min_radial_spacing() const { return min_radial_spacing_; }

  int half_shift(int k_ang) const { return (k_ang + n_angular_ / 2) % n_angular_; }

  // Structured pieces, exposed for operator assembly.
  const Eigen::MatrixXd& radial_same() const { return dr_same_; }
  const Eigen::MatrixXd& radial_opposite() const { return dr_opp_; }
  const Eigen::MatrixXd& angular_matrix() const { return dphi_; }
  // Chain-rule coefficients: d/dy^a = cr(a) * d/dr + cphi(a) * d/dphi.
  const Eigen::VectorXd& chain_radial(int a) const { return chain_r_[a]; }
  const Eigen::VectorXd& chain_angular(int a) const { return chain_phi_[a]; }

 private:
  int n_radial_ = 0;
  int n_angular_ = 0;
  Eigen::VectorXd radial_nodes_;
  Eigen::VectorXd angles_;
  Eigen::MatrixXd nodes_;
  Eigen::MatrixXd dr_same_, dr_opp_;  // folded CGL differentiation
  Eigen::MatrixXd dphi_;              // Fourier differentiation
  Eigen::VectorXd quad_weights_;
  Eigen::VectorXd chain_r_[2], chain_phi_[2];
  std::vector<int> boundary_nodes_;
  double min_radial_spacing_ = 0.0;
};

using GridPtr = std::shared_ptr<const PolarGrid>;

inline GridPtr make_grid(int n_radial, int n_angular) {
  return std::make_shared<const PolarGrid>(n_radial, n_angular);
}

}  // namespace fbeuler

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fbeuler/grid.hpp"

namespace fbeuler {

// C-infinity plateau bump: 1 on |s| <= 1/4, 0 on |s| >= 1/2.
double plateau_bump(double s);
double plateau_bump_d(double s);
// Odd companion g(s) = s * bump(s); g' = 1 on the plateau.
double plateau_ramp(double s);
double plateau_ramp_d(double s);
// Monotone C-infinity step: 0 for t <= 0, 1 for t >= 1.
double smooth_step(double t);

// Tangential / radial / time vector fields (closed-form values and first
// derivatives; nothing here is ever differenced numerically).
struct VectorFieldSpec {
  enum class Kind { Rotation, Interior, Radial, Time };
  enum class Family { S0, S1, R, T };

  Kind kind = Kind::Radial;
  Family family = Family::R;
  int rot_a = 0, rot_b = 1;            // rotation plane
  Eigen::Vector2d center{0.0, 0.0};    // interior fields
  double scale = 1.0;
  bool swapped = false;                // interior orientation (d/dy^2 version)

  static VectorFieldSpec rotation(int a, int b);
  static VectorFieldSpec interior(const Eigen::Vector2d& center, double scale,
                                  bool swapped);
  static VectorFieldSpec radial();
  static VectorFieldSpec time();

  bool is_time() const { return kind == Kind::Time; }
  bool is_tangential() const { return kind == Kind::Rotation || kind == Kind::Interior; }

  Eigen::Vector2d value(const Eigen::Vector2d& y) const;
  // deriv(c, a) = d_c T^a
  Eigen::Matrix2d derivative(const Eigen::Vector2d& y) const;

  // nodal caches: values n_nodes x 2; derivs n_nodes x 4 at column a*2+c = d_c T^a
  Eigen::MatrixXd values_on(const PolarGrid& grid) const;
  Eigen::MatrixXd derivatives_on(const PolarGrid& grid) const;
};

// Exact commutator [U,V]^a = U^c d_c V^a - V^c d_c U^a of two specs,
// evaluated from the closed forms.
Eigen::Vector2d bracket_value(const VectorFieldSpec& u, const VectorFieldSpec& v,
                              const Eigen::Vector2d& y);

// Families of section 4 for the disk: S0 rotations, S1 interior covering
// fields for {d >= d0}, and the radial field R.  Time is appended by callers
// that want the space-time families T or U.
struct FieldFamilies {
  std::vector<VectorFieldSpec> s0;
  std::vector<VectorFieldSpec> s1;
  VectorFieldSpec radial;

  std::vector<VectorFieldSpec> tangential() const;       // S = S0 + S1
  std::vector<VectorFieldSpec> spatial() const;          // R-family = S + {R}
  std::vector<VectorFieldSpec> all_with_time() const;    // U = S + {R} + {D_t}
};

FieldFamilies family_fields(int n, double d0);

}  // namespace fbeuler

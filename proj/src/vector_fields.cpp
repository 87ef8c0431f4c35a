#include "fbeuler/vector_fields.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"

namespace fbeuler {

namespace {

double q_exp(double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }
double q_exp_d(double u) { return u > 0.0 ? std::exp(-1.0 / u) / (u * u) : 0.0; }
double q_exp_dd(double u) {
  if (u <= 0.0) return 0.0;
  return std::exp(-1.0 / u) * (1.0 - 2.0 * u) / (u * u * u * u);
}

// smooth 0->1 transition on [0,1] and its first two derivatives
double sstep(double u) {
  const double a = q_exp(u), b = q_exp(1.0 - u);
  return a / (a + b);
}
double sstep_d(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double a = q_exp(u), b = q_exp(1.0 - u);
  const double da = q_exp_d(u), db = -q_exp_d(1.0 - u);
  const double s = a + b;
  return (da * s - a * (da + db)) / (s * s);
}
double sstep_dd(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  const double a = q_exp(u), b = q_exp(1.0 - u);
  const double da = q_exp_d(u), db = -q_exp_d(1.0 - u);
  const double dda = q_exp_dd(u), ddb = q_exp_dd(1.0 - u);
  const double s = a + b, ds = da + db, dds = dda + ddb;
  const double first = (da * s - a * ds) / (s * s);
  return (dda * s - a * dds) / (s * s) - 2.0 * ds * first / s;
}

double bump_dd(double s) {
  // plateau_bump(s) = sstep(u), u = 4(1/2 - |s|); u' = -4 sign(s), u'' = 0
  const double u = (0.5 - std::abs(s)) * 4.0;
  return 16.0 * sstep_dd(u);
}

double ramp_dd(double s) { return 2.0 * plateau_bump_d(s) + s * bump_dd(s); }

}  // namespace

double smooth_step(double t) { return sstep(t); }

double plateau_bump(double s) {
  const double u = (0.5 - std::abs(s)) * 4.0;
  return sstep(u);
}

double plateau_bump_d(double s) {
  const double u = (0.5 - std::abs(s)) * 4.0;
  const double sign = (s >= 0.0) ? 1.0 : -1.0;
  return sstep_d(u) * (-4.0) * sign;
}

double plateau_ramp(double s) { return s * plateau_bump(s); }
double plateau_ramp_d(double s) { return plateau_bump(s) + s * plateau_bump_d(s); }

VectorFieldSpec VectorFieldSpec::rotation(int a, int b) {
  VectorFieldSpec s;
  s.kind = Kind::Rotation;
  s.family = Family::S0;
  s.rot_a = a;
  s.rot_b = b;
  return s;
}

VectorFieldSpec VectorFieldSpec::interior(const Eigen::Vector2d& center, double scale,
                                          bool swapped) {
  VectorFieldSpec s;
  s.kind = Kind::Interior;
  s.family = Family::S1;
  s.center = center;
  s.scale = scale;
  s.swapped = swapped;
  return s;
}

VectorFieldSpec VectorFieldSpec::radial() {
  VectorFieldSpec s;
  s.kind = Kind::Radial;
  s.family = Family::R;
  return s;
}

VectorFieldSpec VectorFieldSpec::time() {
  VectorFieldSpec s;
  s.kind = Kind::Time;
  s.family = Family::T;
  return s;
}

Eigen::Vector2d VectorFieldSpec::value(const Eigen::Vector2d& y) const {
  switch (kind) {
    case Kind::Rotation: {
      Eigen::Vector2d out = Eigen::Vector2d::Zero();
      out[rot_b] = y[rot_a];
      out[rot_a] = -y[rot_b];
      return out;
    }
    case Kind::Interior: {
      const double u1 = (y[0] - center[0]) / scale;
      const double u2 = (y[1] - center[1]) / scale;
      Eigen::Vector2d out;
      if (!swapped) {
        out[0] = plateau_bump(u1) * plateau_ramp_d(u2);
        out[1] = -plateau_bump_d(u1) * plateau_ramp(u2);
      } else {
        out[1] = plateau_bump(u2) * plateau_ramp_d(u1);
        out[0] = -plateau_bump_d(u2) * plateau_ramp(u1);
      }
      return out;
    }
    case Kind::Radial:
      return y;
    case Kind::Time:
      throw VarianceMismatch("time field has no spatial value");
  }
  return Eigen::Vector2d::Zero();
}

Eigen::Matrix2d VectorFieldSpec::derivative(const Eigen::Vector2d& y) const {
  Eigen::Matrix2d d = Eigen::Matrix2d::Zero();  // d(c,a) = d_c T^a
  switch (kind) {
    case Kind::Rotation:
      d(rot_a, rot_b) = 1.0;
      d(rot_b, rot_a) = -1.0;
      return d;
    case Kind::Interior: {
      const double u1 = (y[0] - center[0]) / scale;
      const double u2 = (y[1] - center[1]) / scale;
      if (!swapped) {
        // T^0 = f(u1) g'(u2), T^1 = -f'(u1) g(u2)
        d(0, 0) = plateau_bump_d(u1) * plateau_ramp_d(u2) / scale;
        d(1, 0) = plateau_bump(u1) * ramp_dd(u2) / scale;
        d(0, 1) = -bump_dd(u1) * plateau_ramp(u2) / scale;
        d(1, 1) = -plateau_bump_d(u1) * plateau_ramp_d(u2) / scale;
      } else {
        // T^1 = f(u2) g'(u1), T^0 = -f'(u2) g(u1)
        d(1, 1) = plateau_bump_d(u2) * plateau_ramp_d(u1) / scale;
        d(0, 1) = plateau_bump(u2) * ramp_dd(u1) / scale;
        d(1, 0) = -bump_dd(u2) * plateau_ramp(u1) / scale;
        d(0, 0) = -plateau_bump_d(u2) * plateau_ramp_d(u1) / scale;
      }
      return d;
    }
    case Kind::Radial:
      d.setIdentity();
      return d;
    case Kind::Time:
      throw VarianceMismatch("time field has no spatial derivative");
  }
  return d;
}

Eigen::MatrixXd VectorFieldSpec::values_on(const PolarGrid& grid) const {
  Eigen::MatrixXd out(grid.n_nodes(), 2);
  for (int p = 0; p < grid.n_nodes(); ++p)
    out.row(p) = value(grid.nodes().row(p).transpose()).transpose();
  return out;
}

Eigen::MatrixXd VectorFieldSpec::derivatives_on(const PolarGrid& grid) const {
  Eigen::MatrixXd out(grid.n_nodes(), 4);
  for (int p = 0; p < grid.n_nodes(); ++p) {
    const Eigen::Matrix2d d = derivative(grid.nodes().row(p).transpose());
    out(p, 0) = d(0, 0);  // column a*2+c holds d_c T^a
    out(p, 1) = d(1, 0);
    out(p, 2) = d(0, 1);
    out(p, 3) = d(1, 1);
  }
  return out;
}

Eigen::Vector2d bracket_value(const VectorFieldSpec& u, const VectorFieldSpec& v,
                              const Eigen::Vector2d& y) {
  const Eigen::Vector2d uv = u.value(y), vv = v.value(y);
  const Eigen::Matrix2d du = u.derivative(y), dv = v.derivative(y);
  Eigen::Vector2d out;
  for (int a = 0; a < 2; ++a) {
    double s = 0.0;
    for (int c = 0; c < 2; ++c) s += uv[c] * dv(c, a) - vv[c] * du(c, a);
    out[a] = s;
  }
  return out;
}

std::vector<VectorFieldSpec> FieldFamilies::tangential() const {
  std::vector<VectorFieldSpec> out = s0;
  out.insert(out.end(), s1.begin(), s1.end());
  return out;
}

std::vector<VectorFieldSpec> FieldFamilies::spatial() const {
  auto out = tangential();
  out.push_back(radial);
  return out;
}

std::vector<VectorFieldSpec> FieldFamilies::all_with_time() const {
  auto out = spatial();
  out.push_back(VectorFieldSpec::time());
  return out;
}

FieldFamilies family_fields(int n, double d0) {
  if (n != 2) throw ConfigInvalid("family_fields implemented for n=2");
  if (!(d0 > 0.0 && d0 < 1.0)) throw ConfigInvalid("d0 must lie in (0,1)");
  FieldFamilies fam;
  fam.s0.push_back(VectorFieldSpec::rotation(0, 1));
  fam.radial = VectorFieldSpec::radial();
  // Support half-width d0/2 in sup norm, plateau half-width d0/4; lattice
  // spacing scale/4.  Centers kept far enough in that every support stays
  // inside {d >= d0/2}; the plateaus still cover {d >= d0}.
  const double s = d0;
  const double spacing = s / 4.0;
  const double reach = 1.0 - d0 / 2.0 - (s / 2.0) * std::sqrt(2.0) - 1e-12;
  const int kmax = static_cast<int>(std::floor(reach / spacing));
  for (int i = -kmax; i <= kmax; ++i)
    for (int j = -kmax; j <= kmax; ++j) {
      Eigen::Vector2d c(i * spacing, j * spacing);
      if (c.norm() > reach) continue;
      fam.s1.push_back(VectorFieldSpec::interior(c, s, false));
      fam.s1.push_back(VectorFieldSpec::interior(c, s, true));
    }
  return fam;
}

}  // namespace fbeuler

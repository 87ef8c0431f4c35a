#include "fbeuler/calculus.hpp"

#include "fbeuler/errors.hpp"

namespace fbeuler {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd apply_vector_to_scalar(const VectorFieldSpec& T, const VectorXd& f,
                                const PolarGrid& grid) {
  const MatrixXd Tv = T.values_on(grid);
  VectorXd out = VectorXd::Zero(f.size());
  for (int c = 0; c < grid.dim(); ++c)
    out += Tv.col(c).cwiseProduct(grid.d(f, c));
  return out;
}

Field lie_derivative(const VectorFieldSpec& T, const Field& F, LieVariant variant,
                     const MetricData& metric) {
  if (T.is_time())
    throw VarianceMismatch("use hat/check_time_derivative for the time direction");
  if (variant == LieVariant::Hat &&
      !(F.var == Variance::Vector || F.var == Variance::Scalar))
    throw VarianceMismatch("hat variant applies to vectors (and functions)");
  if (variant == LieVariant::Check &&
      !(F.var == Variance::OneForm || F.var == Variance::TwoForm ||
        F.var == Variance::Scalar))
    throw VarianceMismatch("check variant applies to forms (and functions)");

  const PolarGrid& g = *metric.grid;

  const int n = F.n;
  const MatrixXd Tv = T.values_on(g);
  const MatrixXd Td = T.derivatives_on(g);  // col a*n+c = d_c T^a

  auto advect = [&](const VectorXd& comp) {
    VectorXd out = VectorXd::Zero(comp.size());
    for (int c = 0; c < n; ++c) out += Tv.col(c).cwiseProduct(g.d(comp, c));
    return out;
  };

  Field out(F.var, n, F.n_nodes());
  switch (F.var) {
    case Variance::Scalar:
      out.data.col(0) = advect(F.data.col(0));
      break;
    case Variance::Vector:
      for (int a = 0; a < n; ++a) {
        VectorXd t = advect(F.data.col(a));
        for (int c = 0; c < n; ++c)
          t -= Td.col(a * n + c).cwiseProduct(F.data.col(c));
        out.data.col(a) = t;
      }
      break;
    case Variance::OneForm:
      for (int a = 0; a < n; ++a) {
        VectorXd t = advect(F.data.col(a));
        for (int c = 0; c < n; ++c)
          t += Td.col(c * n + a).cwiseProduct(F.data.col(c));
        out.data.col(a) = t;
      }
      break;
    case Variance::TwoForm:
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          VectorXd t = advect(F.data.col(a * n + b));
          for (int c = 0; c < n; ++c) {
            t += Td.col(c * n + a).cwiseProduct(F.data.col(c * n + b));
            t += Td.col(c * n + b).cwiseProduct(F.data.col(a * n + c));
          }
          out.data.col(a * n + b) = t;
        }
      break;
  }

  if (variant != LieVariant::Plain) {
    VectorXd t_sigma = VectorXd::Zero(F.n_nodes());
    for (int c = 0; c < n; ++c)
      t_sigma += Tv.col(c).cwiseProduct(g.d(metric.sigma, c));
    const double sgn = (variant == LieVariant::Hat) ? 1.0 : -1.0;
    for (int c = 0; c < out.data.cols(); ++c)
      out.data.col(c) += sgn * t_sigma.cwiseProduct(F.data.col(c));
  }
  return out;
}

VectorXd divergence(const Field& W, const MetricData& m) {
  if (W.var != Variance::Vector)
    throw VarianceMismatch("divergence takes a contravariant vector");
  const PolarGrid& g = *m.grid;
  VectorXd out = VectorXd::Zero(W.n_nodes());
  for (int a = 0; a < W.n; ++a)
    out += g.d(m.kappa.cwiseProduct(W.data.col(a)), a);
  return out.cwiseQuotient(m.kappa);
}

Field curl(const Field& w, const PolarGrid& grid) {
  if (w.var != Variance::OneForm)
    throw VarianceMismatch("curl takes a covariant one-form");
  const int n = w.n;
  Field out(Variance::TwoForm, n, w.n_nodes());
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      out.data.col(a * n + b) = grid.d(w.data.col(b), a) - grid.d(w.data.col(a), b);
    }
  return out;
}

double curl_identity_check(const VectorFieldSpec& T, const Field& w,
                           const MetricData& m) {
  const Field cw = curl(w, *m.grid);
  const Field lhs = lie_derivative(T, cw, LieVariant::Plain, m);
  const Field rhs = curl(lie_derivative(T, w, LieVariant::Plain, m), *m.grid);
  return (lhs.data - rhs.data).cwiseAbs().maxCoeff();
}

std::vector<Field> hat_time_derivative(const std::vector<Field>& series,
                                       const MetricSeries& ms) {
  const int nt = static_cast<int>(series.size());
  std::vector<MatrixXd> weighted(nt);
  for (int i = 0; i < nt; ++i) {
    weighted[i] = series[i].data;
    for (int c = 0; c < weighted[i].cols(); ++c)
      weighted[i].col(c) = ms.at[i].kappa.cwiseProduct(weighted[i].col(c));
  }
  std::vector<Field> out(nt);
  for (int i = 0; i < nt; ++i) {
    out[i] = series[i];
    MatrixXd d = fd_time1(weighted, ms.dt(), i);
    for (int c = 0; c < d.cols(); ++c)
      out[i].data.col(c) = d.col(c).cwiseQuotient(ms.at[i].kappa);
  }
  return out;
}

std::vector<Field> check_time_derivative(const std::vector<Field>& series,
                                         const MetricSeries& ms) {
  const int nt = static_cast<int>(series.size());
  std::vector<MatrixXd> weighted(nt);
  for (int i = 0; i < nt; ++i) {
    weighted[i] = series[i].data;
    for (int c = 0; c < weighted[i].cols(); ++c)
      weighted[i].col(c) = weighted[i].col(c).cwiseQuotient(ms.at[i].kappa);
  }
  std::vector<Field> out(nt);
  for (int i = 0; i < nt; ++i) {
    out[i] = series[i];
    MatrixXd d = fd_time1(weighted, ms.dt(), i);
    for (int c = 0; c < d.cols(); ++c)
      out[i].data.col(c) = ms.at[i].kappa.cwiseProduct(d.col(c));
  }
  return out;
}

Field lower_index(const Field& W, const MetricData& m) {
  if (W.var != Variance::Vector) throw VarianceMismatch("lower_index takes a vector");
  const int n = W.n;
  Field out(Variance::OneForm, n, W.n_nodes());
  for (int a = 0; a < n; ++a) {
    VectorXd t = VectorXd::Zero(W.n_nodes());
    for (int b = 0; b < n; ++b)
      t += m.g.col(a * n + b).cwiseProduct(W.data.col(b));
    out.data.col(a) = t;
  }
  return out;
}

Field raise_index(const Field& w, const MetricData& m) {
  if (w.var != Variance::OneForm) throw VarianceMismatch("raise_index takes a one-form");
  const int n = w.n;
  Field out(Variance::Vector, n, w.n_nodes());
  for (int a = 0; a < n; ++a) {
    VectorXd t = VectorXd::Zero(w.n_nodes());
    for (int b = 0; b < n; ++b)
      t += m.g_inv.col(a * n + b).cwiseProduct(w.data.col(b));
    out.data.col(a) = t;
  }
  return out;
}

}  // namespace fbeuler

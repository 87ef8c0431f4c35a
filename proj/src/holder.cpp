#include "fbeuler/holder.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"
#include "fbeuler/field.hpp"

namespace fbeuler {

using Eigen::VectorXd;

namespace {

// centered 4th-order first derivative along one axis of the box, one-sided
// near the edges
void box_derivative(const Box& b, const VectorXd& in, int axis, double h,
                    VectorXd& out) {
  out.resize(in.size());
  const int n0 = b.nt, n1 = b.ny, n2 = b.ny;
  auto idx = [&](int i0, int i1, int i2) { return b.index(i0, i1, i2); };
  const int n_axis = (axis == 0) ? n0 : (axis == 1 ? n1 : n2);
  for (int i0 = 0; i0 < n0; ++i0)
    for (int i1 = 0; i1 < n1; ++i1)
      for (int i2 = 0; i2 < n2; ++i2) {
        int pos = (axis == 0) ? i0 : (axis == 1 ? i1 : i2);
        auto at = [&](int p) {
          return (axis == 0) ? in[idx(p, i1, i2)]
                             : (axis == 1 ? in[idx(i0, p, i2)] : in[idx(i0, i1, p)]);
        };
        double v;
        if (pos >= 2 && pos + 2 < n_axis) {
          v = (at(pos - 2) - 8.0 * at(pos - 1) + 8.0 * at(pos + 1) - at(pos + 2)) /
              (12.0 * h);
        } else if (pos + 1 < n_axis && pos >= 1) {
          v = (at(pos + 1) - at(pos - 1)) / (2.0 * h);
        } else if (pos == 0) {
          v = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        } else {
          v = (3.0 * at(pos) - 4.0 * at(pos - 1) + at(pos - 2)) / (2.0 * h);
        }
        out[idx(i0, i1, i2)] = v;
      }
}

// domain mask: [0, T] x closed unit disk with a small margin
std::vector<int> domain_mask(const BoxFunction& f) {
  std::vector<int> mask;
  const Box& b = f.box;
  for (int i0 = 0; i0 < b.nt; ++i0) {
    const double t = b.t_at(i0);
    if (t < -1e-12 || t > f.T + 1e-12) continue;
    for (int i1 = 0; i1 < b.ny; ++i1)
      for (int i2 = 0; i2 < b.ny; ++i2) {
        if (std::hypot(b.y_at(i1), b.y_at(i2)) > 1.0) continue;
        mask.push_back(b.index(i0, i1, i2));
      }
  }
  return mask;
}

double masked_sup(const std::vector<int>& mask, const VectorXd& v) {
  double s = 0.0;
  for (int q : mask) s = std::max(s, std::abs(v[q]));
  return s;
}

// quarter-octave separation difference-quotient seminorm at exponent mu;
// pair bases are sampled on a stride-2 lattice, which keeps the sup proxy
// within a few percent while staying fast on large boxes
double holder_seminorm(const BoxFunction& f, const std::vector<VectorXd>& fields,
                       double mu) {
  const Box& b = f.box;
  std::vector<char> inmask(b.size(), 0);
  std::vector<int> bases;
  for (int i0 = 0; i0 < b.nt; ++i0) {
    const double t = b.t_at(i0);
    if (t < -1e-12 || t > f.T + 1e-12) continue;
    for (int i1 = 0; i1 < b.ny; ++i1)
      for (int i2 = 0; i2 < b.ny; ++i2) {
        if (std::hypot(b.y_at(i1), b.y_at(i2)) > 1.0) continue;
        const int q = b.index(i0, i1, i2);
        inmask[q] = 1;
        if ((i0 % 2) == 0 && (i1 % 2) == 0 && (i2 % 2) == 0) bases.push_back(q);
      }
  }
  const double steps[3] = {b.dt(), b.dy(), b.dy()};
  const int sizes[3] = {b.nt, b.ny, b.ny};
  const int strides[3] = {b.ny * b.ny, b.ny, 1};
  std::vector<int> seps;
  for (int k = 0;; ++k) {
    const int sep = static_cast<int>(std::ceil(std::pow(2.0, 0.25 * k)));
    if (sep >= std::max(sizes[0], std::max(sizes[1], sizes[2]))) break;
    if (seps.empty() || sep != seps.back()) seps.push_back(sep);
  }
  const int total = b.size();
  double best = 0.0;
  for (const VectorXd& v : fields) {
    const double* vd = v.data();
    for (int axis = 0; axis < 3; ++axis) {
      for (int sep : seps) {
        if (sep >= sizes[axis]) continue;
        const long long off = static_cast<long long>(sep) * strides[axis];
        const double denom = std::pow(sep * steps[axis], mu);
        double worst = 0.0;
        for (int q : bases) {
          const long long p = q + off;
          if (p >= total || !inmask[p]) continue;
          const double d = std::abs(vd[p] - vd[q]);
          if (d > worst) worst = d;
        }
        best = std::max(best, worst / denom);
      }
    }
  }
  return best;
}

}  // namespace

double holder_norm(const BoxFunction& u, double a) {
  if (a < 0.0) throw ConfigInvalid("holder exponent must be nonnegative");
  const Box& b = u.box;
  // k < a <= k+1
  int k = static_cast<int>(std::ceil(a)) - 1;
  if (k < 0) k = 0;
  const double mu = a - k;
  if (k + 3 > std::min(b.nt, b.ny))
    throw GridTooCoarse("box too coarse for the requested derivative order");

  const std::vector<int> mask = domain_mask(u);
  double norm = masked_sup(mask, u.data);

  // all derivatives of exact order k by repeated FD
  std::vector<VectorXd> level = {u.data};
  for (int step = 0; step < k; ++step) {
    std::vector<VectorXd> next;
    for (const VectorXd& v : level)
      for (int axis = 0; axis < 3; ++axis) {
        VectorXd d;
        box_derivative(b, v, axis, axis == 0 ? b.dt() : b.dy(), d);
        next.push_back(std::move(d));
      }
    level = std::move(next);
  }
  norm += holder_seminorm(u, level, mu > 0.0 ? mu : 1.0);
  return norm;
}

double holder_norm_trajectory(GridPtr grid, const VectorXd& t_nodes,
                              const std::vector<VectorXd>& series, double a) {
  int k = static_cast<int>(std::ceil(a)) - 1;
  if (k < 0) k = 0;
  const double mu = a - k;
  const double dt = t_nodes[1] - t_nodes[0];
  const int nt = static_cast<int>(t_nodes.size());
  if (nt < k + 3) throw GridTooCoarse("trajectory too short for the derivative order");

  double sup = 0.0;
  for (const auto& s : series) sup = std::max(sup, s.cwiseAbs().maxCoeff());

  // derivatives of order exactly k: spectral in space, FD in time
  std::vector<std::vector<VectorXd>> level = {series};
  for (int step = 0; step < k; ++step) {
    std::vector<std::vector<VectorXd>> next;
    for (const auto& v : level) {
      std::vector<VectorXd> dtv(nt);
      for (int t = 0; t < nt; ++t) dtv[t] = fd_time1(v, dt, t);
      next.push_back(std::move(dtv));
      for (int axis = 0; axis < 2; ++axis) {
        std::vector<VectorXd> da(nt);
        for (int t = 0; t < nt; ++t) da[t] = grid->d(v[t], axis);
        next.push_back(std::move(da));
      }
    }
    level = std::move(next);
  }

  // difference quotients: time separations (dyadic) and spatial node pairs
  // along rings/lines at node distance
  double semi = 0.0;
  const double ex = mu > 0.0 ? mu : 1.0;
  for (const auto& v : level) {
    for (int sep = 1; sep < nt; sep *= 2) {
      const double denom = std::pow(sep * dt, ex);
      for (int t = 0; t + sep < nt; ++t)
        semi = std::max(semi,
                        (v[t + sep] - v[t]).cwiseAbs().maxCoeff() / denom);
    }
    // angular neighbors
    const int na = grid->n_angular();
    for (int t = 0; t < nt; ++t)
      for (int i = 0; i < grid->n_radial(); ++i)
        for (int kk = 0; kk < na; ++kk) {
          const int p = grid->node_index(i, kk);
          const int q = grid->node_index(i, (kk + 1) % na);
          const double dy = (grid->nodes().row(p) - grid->nodes().row(q)).norm();
          if (dy < 1e-14) continue;
          semi = std::max(semi, std::abs(v[t][p] - v[t][q]) / std::pow(dy, ex));
        }
  }
  return sup + semi;
}

}  // namespace fbeuler

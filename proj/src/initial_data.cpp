#include "fbeuler/initial_data.hpp"

#include <cmath>
#include <iostream>
#include <cstdlib>
#include <map>
#include <memory>

#include <json.hpp>

#include "fbeuler/errors.hpp"
#include "fbeuler/vector_fields.hpp"
#include "fbeuler/wave.hpp"

namespace fbeuler {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Symbolic jet expressions: time derivatives of the coupled system at t = 0.
// Kinds: H (enthalpy level), V (velocity time-order, component), Deriv
// (Eulerian derivative), Prod, Sum, Scale.  The commutator [D_t, d_i] =
// -(d_i V^k) d_k generates the multilinear terms.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { H, V, Deriv, Sum, Prod, Scale } kind;
  int level = 0;  // H level or V time-order
  int comp = 0;   // V component or Deriv direction
  ExprPtr a, b;
  double coeff = 1.0;
};

ExprPtr make_h(int l) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::H;
  e->level = l;
  return e;
}
ExprPtr make_v(int k, int i) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::V;
  e->level = k;
  e->comp = i;
  return e;
}
ExprPtr deriv(ExprPtr x, int i) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Deriv;
  e->comp = i;
  e->a = std::move(x);
  return e;
}
ExprPtr sum(ExprPtr x, ExprPtr y) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Sum;
  e->a = std::move(x);
  e->b = std::move(y);
  return e;
}
ExprPtr prod(ExprPtr x, ExprPtr y) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Prod;
  e->a = std::move(x);
  e->b = std::move(y);
  return e;
}
ExprPtr scale(ExprPtr x, double c) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Scale;
  e->a = std::move(x);
  e->coeff = c;
  return e;
}

// D_t of an expression; the commutator term uses the current velocity V_0.
ExprPtr dt(const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::H:
      return make_h(e->level + 1);
    case Expr::Kind::V:
      return make_v(e->level + 1, e->comp);
    case Expr::Kind::Deriv: {
      ExprPtr out = deriv(dt(e->a), e->comp);
      for (int k = 0; k < 2; ++k)
        out = sum(out, scale(prod(deriv(make_v(0, k), e->comp), deriv(e->a, k)), -1.0));
      return out;
    }
    case Expr::Kind::Sum:
      return sum(dt(e->a), dt(e->b));
    case Expr::Kind::Prod:
      return sum(prod(dt(e->a), e->b), prod(e->a, dt(e->b)));
    case Expr::Kind::Scale:
      return scale(dt(e->a), e->coeff);
  }
  throw ConfigInvalid("unreachable");
}

// rhs of the enthalpy wave equation: lap h + (d_i V^j)(d_j V^i)
ExprPtr wave_rhs() {
  ExprPtr lap = deriv(deriv(make_h(0), 0), 0);
  lap = sum(lap, deriv(deriv(make_h(0), 1), 1));
  ExprPtr q = prod(deriv(make_v(0, 1), 0), deriv(make_v(0, 0), 1));
  q = sum(q, prod(deriv(make_v(0, 0), 1), deriv(make_v(0, 1), 0)));
  // include diagonal terms (d_0 V^0)^2 + (d_1 V^1)^2
  q = sum(q, prod(deriv(make_v(0, 0), 0), deriv(make_v(0, 0), 0)));
  q = sum(q, prod(deriv(make_v(0, 1), 1), deriv(make_v(0, 1), 1)));
  return sum(lap, q);
}

struct EvalContext {
  const DirichletSolver* solver = nullptr;
  std::vector<VectorXd> h_known;                // corrected levels
  std::map<int, MatrixXd> v_known;              // V time-orders, columns = comps
  std::map<const Expr*, VectorXd> memo;

  const PolarGrid& grid() const { return solver->grid(); }

  VectorXd eval(const ExprPtr& e);
  MatrixXd eval_v(int k);
};

VectorXd EvalContext::eval(const ExprPtr& e) {
  auto it = memo.find(e.get());
  if (it != memo.end()) return it->second;
  VectorXd out;
  switch (e->kind) {
    case Expr::Kind::H:
      if (e->level >= static_cast<int>(h_known.size()))
        throw ConfigInvalid("jet evaluation requested an unknown enthalpy level");
      out = h_known[e->level];
      break;
    case Expr::Kind::V:
      out = eval_v(e->level).col(e->comp);
      break;
    case Expr::Kind::Deriv: {
      // Eulerian derivative at t=0 with f0 = y (identity jacobian)
      out = grid().d(eval(e->a), e->comp);
      break;
    }
    case Expr::Kind::Sum:
      out = eval(e->a) + eval(e->b);
      break;
    case Expr::Kind::Prod:
      out = eval(e->a).cwiseProduct(eval(e->b));
      break;
    case Expr::Kind::Scale:
      out = e->coeff * eval(e->a);
      break;
  }
  memo.emplace(e.get(), out);
  return out;
}

MatrixXd EvalContext::eval_v(int k) {
  auto it = v_known.find(k);
  if (it != v_known.end()) return it->second;
  // V_{k} = D_t^{k-1} (-grad h), k >= 1
  MatrixXd out(grid().n_nodes(), 2);
  for (int i = 0; i < 2; ++i) {
    ExprPtr e = scale(deriv(make_h(0), i), -1.0);
    for (int q = 0; q < k - 1; ++q) e = dt(e);
    out.col(i) = eval(e);
  }
  v_known.emplace(k, out);
  return out;
}

// angular Fourier coefficients of a boundary-ring vector
struct RingModes {
  VectorXd cosc, sinc;  // index m = 0..na/2
};

RingModes ring_modes(const PolarGrid& g, const VectorXd& ring) {
  const int na = g.n_angular();
  RingModes out;
  out.cosc = VectorXd::Zero(na / 2 + 1);
  out.sinc = VectorXd::Zero(na / 2 + 1);
  for (int m = 0; m <= na / 2; ++m) {
    double ac = 0.0, as = 0.0;
    for (int k = 0; k < na; ++k) {
      const double ph = 2.0 * 3.14159265358979323846 * k * m / na;
      ac += ring[k] * std::cos(ph);
      as += ring[k] * std::sin(ph);
    }
    const double norm = (m == 0 || m == na / 2) ? 1.0 / na : 2.0 / na;
    out.cosc[m] = ac * norm;
    out.sinc[m] = as * norm;
  }
  return out;
}

// nodal field r^{m+2p} cos/sin(m phi); exact polynomial on the disk
VectorXd poly_mode_field(const PolarGrid& g, int m, int p, bool sine) {
  VectorXd out(g.n_nodes());
  for (int q = 0; q < g.n_nodes(); ++q) {
    const double r = g.radius(q), ph = g.angle(q);
    out[q] = std::pow(r, m + 2 * p) * (sine ? std::sin(m * ph) : std::cos(m * ph));
  }
  return out;
}

// radial polynomial algebra per mode: f = r^m sum_j c_j r^{2j};
// lap(f e^{im phi}) = e^{im phi} r^m sum_j c_j ((m+2j)^2 - m^2) r^{2j-2}
VectorXd lap_mode(int m, const VectorXd& c) {
  VectorXd out = VectorXd::Zero(c.size());
  for (int j = 1; j < c.size(); ++j) {
    const double k = m + 2.0 * j;
    out[j - 1] += c[j] * (k * k - m * m);
  }
  return out;
}

// correction profile for one mode: q = r^m (1 - r^2) sum a_i r^{2i} with
// trace(lap^j q) = delta_{jD} for j = 1..Dmax, so corrections at one ladder
// level leave the other levels untouched (trace(q) = 0 automatically)
VectorXd ladder_profile(int m, int D, int Dmax) {
  const int K = Dmax;
  Eigen::MatrixXd A(K, K);
  for (int i = 0; i < K; ++i) {
    VectorXd c = VectorXd::Zero(i + 2 + Dmax);
    c[i] = 1.0;
    c[i + 1] -= 1.0;  // (1 - r^2) factor
    for (int j = 1; j <= Dmax; ++j) {
      c = lap_mode(m, c);
      A(j - 1, i) = c.sum();
    }
  }
  VectorXd rhs = VectorXd::Zero(K);
  rhs[D - 1] = 1.0;
  const VectorXd a = A.fullPivLu().solve(rhs);
  VectorXd c = VectorXd::Zero(K + 1);
  for (int i = 0; i < K; ++i) {
    c[i] += a[i];
    c[i + 1] -= a[i];
  }
  return c;  // coefficients of r^m sum c_j r^{2j}
}

VectorXd field_from_profile(const PolarGrid& g, int m, const VectorXd& c, bool sine) {
  VectorXd out = VectorXd::Zero(g.n_nodes());
  for (int j = 0; j < c.size(); ++j)
    if (c[j] != 0.0) out += c[j] * poly_mode_field(g, m, j, sine);
  return out;
}

// exact zero-trace projection: subtract the harmonic polynomials
// sum_m t_m r^m e^{im phi} matching the ring trace
VectorXd remove_trace_harmonic(const PolarGrid& g, const VectorXd& f,
                               VectorXd* removed = nullptr) {
  VectorXd ring(g.n_angular());
  for (int k = 0; k < g.n_angular(); ++k) ring[k] = f[g.boundary_nodes()[k]];
  VectorXd out = f;
  VectorXd rem = VectorXd::Zero(f.size());
  if (ring.cwiseAbs().maxCoeff() > 0.0) {
    const RingModes tm = ring_modes(g, ring);
    for (int m = 0; m <= g.n_angular() / 2; ++m) {
      if (tm.cosc[m] != 0.0) rem += tm.cosc[m] * poly_mode_field(g, m, 0, false);
      if (m > 0 && m < g.n_angular() / 2 && tm.sinc[m] != 0.0)
        rem += tm.sinc[m] * poly_mode_field(g, m, 0, true);
    }
    out -= rem;
    for (int b : g.boundary_nodes()) out[b] = 0.0;
  }
  if (removed) *removed = rem;
  return out;
}

// particular solution chi with lap chi = r^m sum c_j r^{2j} e^{im phi}
VectorXd inverse_lap_profile(int m, const VectorXd& c) {
  VectorXd out = VectorXd::Zero(c.size() + 1);
  for (int j = 0; j < c.size(); ++j) {
    const double k = m + 2.0 * (j + 1);
    out[j + 1] = c[j] / (k * k - m * m);
  }
  return out;
}

// subtract the harmonic extension of the boundary trace
VectorXd zero_trace(const DirichletSolver& solver, const VectorXd& f,
                    VectorXd* correction = nullptr) {
  const PolarGrid& g = solver.grid();
  VectorXd bc(g.n_angular());
  for (int k = 0; k < g.n_angular(); ++k) bc[k] = f[g.boundary_nodes()[k]];
  if (bc.cwiseAbs().maxCoeff() < 1e-300) {
    if (correction) correction->setZero(f.size());
    return f;
  }
  const VectorXd harm =
      solver.solve_with_boundary(VectorXd::Zero(f.size()), bc);
  if (correction) *correction = harm;
  VectorXd out = f - harm;
  for (int b : g.boundary_nodes()) out[b] = 0.0;
  return out;
}

}  // namespace

CompatibilityJet compat_recursion(const VectorXd& h0, const VectorXd& h1,
                                  const MatrixXd& V0, int m,
                                  const DirichletSolver& solver) {
  if (m < 2) throw ConfigInvalid("jet order m must be at least 2");
  const PolarGrid& g = solver.grid();

  // Levels l >= 2 are determined by the recursion, so the trace corrections
  // are pushed back onto the free data (h0 for even levels, h1 and V0 for
  // odd ones).  All correction fields are polynomial per angular mode, which
  // the spectral operators differentiate exactly, so each sweep cancels the
  // targeted traces up to the nonlinear F couplings.
  VectorXd h0c = remove_trace_harmonic(g, h0);
  VectorXd rem1;
  VectorXd h1c = remove_trace_harmonic(g, h1, &rem1);
  MatrixXd v0c = V0;
  {
    // keep h1 = -div V0: removed part is harmonic per mode, its potential is
    // the closed-form particular solution
    VectorXd ring(g.n_angular());
    for (int k = 0; k < g.n_angular(); ++k) ring[k] = rem1[g.boundary_nodes()[k]];
    if (ring.cwiseAbs().maxCoeff() > 0.0) {
      const RingModes tm = ring_modes(g, ring);
      VectorXd chi = VectorXd::Zero(g.n_nodes());
      for (int mm = 0; mm <= g.n_angular() / 2; ++mm) {
        VectorXd base = VectorXd::Zero(1);
        base[0] = 1.0;
        const VectorXd prof = inverse_lap_profile(mm, base);
        if (tm.cosc[mm] != 0.0)
          chi += tm.cosc[mm] * field_from_profile(g, mm, prof, false);
        if (mm > 0 && mm < g.n_angular() / 2 && tm.sinc[mm] != 0.0)
          chi += tm.sinc[mm] * field_from_profile(g, mm, prof, true);
      }
      // div(V0 + grad chi) = div V0 + lap chi = div V0 + removed harmonic
      MatrixXd gradchi(g.n_nodes(), 2);
      gradchi.col(0) = g.d(chi, 0);
      gradchi.col(1) = g.d(chi, 1);
      v0c += gradchi;
    }
  }

  auto trace_of = [&](const VectorXd& f) {
    VectorXd bc(g.n_angular());
    for (int k = 0; k < g.n_angular(); ++k) bc[k] = f[g.boundary_nodes()[k]];
    return bc;
  };

  std::vector<VectorXd> levels;
  const int l_cap = std::min(m, 4);
  const int max_sweeps = 12;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    EvalContext ctx;
    ctx.solver = &solver;
    levels.assign({h0c, h1c});
    ctx.h_known = levels;
    ctx.v_known.emplace(0, v0c);
    ExprPtr e = wave_rhs();
    for (int l = 2; l <= m; ++l) {
      ctx.memo.clear();
      levels.push_back(ctx.eval(e));
      ctx.h_known = levels;
      if (l < m) e = dt(e);
    }
    double scale = 1.0;
    for (const auto& lv : levels) scale = std::max(scale, lv.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (int l = 2; l <= l_cap; ++l)
      worst = std::max(worst, trace_of(levels[l]).cwiseAbs().maxCoeff());
    if (std::getenv("FBE_JET_DEBUG"))
      std::cerr << "[jet] sweep " << sweep << " worst-trace " << worst
                << " scale " << scale << "\n";
    if (worst <= 1e-12 * scale) break;
    for (int l = 2; l <= l_cap; ++l) {
      const VectorXd tl = trace_of(levels[l]);
      if (tl.cwiseAbs().maxCoeff() <= 1e-13 * scale) continue;
      const RingModes tm = ring_modes(g, tl);
      const int depth = (l % 2 == 0) ? l / 2 : (l - 1) / 2;
      const int depth_max = (l % 2 == 0) ? l_cap / 2 : std::max((l_cap - 1) / 2, 1);
      VectorXd corr = VectorXd::Zero(g.n_nodes());
      VectorXd chi_corr = VectorXd::Zero(g.n_nodes());
      for (int mm = 0; mm <= g.n_angular() / 2; ++mm) {
        if (std::abs(tm.cosc[mm]) < 1e-300 &&
            (mm == 0 || mm == g.n_angular() / 2 || std::abs(tm.sinc[mm]) < 1e-300))
          continue;
        const VectorXd prof = ladder_profile(mm, depth, depth_max);
        if (tm.cosc[mm] != 0.0)
          corr -= tm.cosc[mm] * field_from_profile(g, mm, prof, false);
        if (mm > 0 && mm < g.n_angular() / 2 && tm.sinc[mm] != 0.0)
          corr -= tm.sinc[mm] * field_from_profile(g, mm, prof, true);
        if (l % 2 == 1) {
          const VectorXd chip = inverse_lap_profile(mm, prof);
          if (tm.cosc[mm] != 0.0)
            chi_corr -= tm.cosc[mm] * field_from_profile(g, mm, chip, false);
          if (mm > 0 && mm < g.n_angular() / 2 && tm.sinc[mm] != 0.0)
            chi_corr -= tm.sinc[mm] * field_from_profile(g, mm, chip, true);
        }
      }
      if (l % 2 == 0) {
        h0c += corr;
      } else {
        h1c += corr;
        MatrixXd gradchi(g.n_nodes(), 2);
        gradchi.col(0) = g.d(chi_corr, 0);
        gradchi.col(1) = g.d(chi_corr, 1);
        v0c += gradchi;
      }
    }
  }

  CompatibilityJet jet;
  jet.m = m;
  jet.h_levels = levels;
  jet.V0 = v0c;
  jet.provenance.assign(levels.size(), "recursion");
  jet.provenance[0] = "data (trace ladder)";
  jet.provenance[1] = "data (trace ladder)";
  return jet;
}

VectorXd f_term(int l_plus_2, const std::vector<VectorXd>& h_levels,
                const MatrixXd& V0, const DirichletSolver& solver) {
  if (l_plus_2 < 2) throw ConfigInvalid("F terms start at level 2");
  const int l = l_plus_2 - 2;
  EvalContext ctx;
  ctx.solver = &solver;
  ctx.h_known = h_levels;
  ctx.v_known.emplace(0, V0);
  ExprPtr e = wave_rhs();
  for (int q = 0; q < l; ++q) e = dt(e);
  VectorXd full = ctx.eval(e);
  // subtract lap applied to h_l
  ctx.memo.clear();
  ExprPtr lap = sum(deriv(deriv(make_h(l), 0), 0), deriv(deriv(make_h(l), 1), 1));
  return full - ctx.eval(lap);
}

BoundarySeries boundary_series(const PolarGrid& grid,
                               const std::vector<VectorXd>& h0_data,
                               const std::vector<VectorXd>& h1_data, int n_max) {
  const int na = grid.n_angular();
  const int n = 2;
  BoundarySeries out;
  out.n_max = n_max;
  out.coeff.assign(n_max + 1, {});
  // angular Laplacian on the circle via the Fourier differentiation matrix
  const MatrixXd lap_omega = grid.angular_matrix() * grid.angular_matrix();

  auto get = [&](int k, int l) -> VectorXd {
    if (k == 0)
      return l < static_cast<int>(h0_data.size()) ? h0_data[l] : VectorXd::Zero(na);
    if (k == 1)
      return l < static_cast<int>(h1_data.size()) ? h1_data[l] : VectorXd::Zero(na);
    if (k <= n_max && l < static_cast<int>(out.coeff[k].size()))
      return out.coeff[k][l];
    return VectorXd::Zero(na);
  };
  auto put = [&](int k, int l, VectorXd v) {
    if (static_cast<int>(out.coeff[k].size()) <= l)
      out.coeff[k].resize(l + 1, VectorXd::Zero(na));
    out.coeff[k][l] = std::move(v);
  };
  for (int l = 0; l <= n_max; ++l) {
    put(0, l, get(0, l));
    if (n_max >= 1) put(1, l, get(1, l));
  }
  auto binom = [](int nn_, int kk_) {
    double b = 1.0;
    for (int q = 0; q < kk_; ++q) b = b * (nn_ - q) / (q + 1);
    return b;
  };
  // d_r^2 h_l = -r^{-2} lap_omega h_l - (n-1) r^{-1} d_r h_l + h_{l+2}; take
  // d_r^k at r=1 by Leibniz: d_r^j r^{-2}|_1 = (-1)^j (j+1)!, d_r^j r^{-1}|_1
  // = (-1)^j j!.  Diagonals ascend so h_{k, l+2} is already available.
  for (int total = 2; total <= n_max; ++total) {
    for (int k2 = 2; k2 <= total; ++k2) {
      const int l = total - k2;
      const int k = k2 - 2;
      VectorXd acc = get(k, l + 2);
      double fact = 1.0;  // j!
      for (int j = 0; j <= k; ++j) {
        if (j > 0) fact *= j;
        const double sgn = (j % 2 == 0) ? 1.0 : -1.0;
        const double c2 = sgn * fact * (j + 1);  // d_r^j r^{-2} at 1
        const double c1 = sgn * fact;            // d_r^j r^{-1} at 1
        acc -= binom(k, j) * c2 * (lap_omega * get(k - j, l));
        acc -= binom(k, j) * c1 * (n - 1) * get(k - j + 1, l);
      }
      put(k2, l, acc);
    }
  }
  // cutoff scales per the smallness rule
  out.eps.resize(n_max + 1);
  for (int k = 0; k <= n_max; ++k) {
    double nrm = 0.0;
    for (const auto& v : out.coeff[k]) nrm = std::max(nrm, v.cwiseAbs().maxCoeff());
    out.eps[k] = std::min(0.5, 0.5 / (nrm + 1.0));
  }
  return out;
}

AssembledData assemble_formal_solution(const CompatibilityJet& jet,
                                       const MatrixXd& v0,
                                       const DirichletSolver& solver, double T,
                                       int n_times) {
  const PolarGrid& g = solver.grid();
  const int nn = g.n_nodes();
  const int m = jet.m;

  // x jet: x_{l+2} = D_t^l(-grad h)|_0
  std::vector<MatrixXd> x_levels;  // starting at order 2
  {
    EvalContext ctx;
    ctx.solver = &solver;
    ctx.h_known = jet.h_levels;
    ctx.v_known.emplace(0, jet.V0);
    for (int l = 0; l + 2 <= m; ++l) {
      MatrixXd lvl(nn, 2);
      for (int i = 0; i < 2; ++i) {
        ExprPtr e = scale(deriv(make_h(0), i), -1.0);
        for (int q = 0; q < l; ++q) e = dt(e);
        ctx.memo.clear();
        lvl.col(i) = ctx.eval(e);
      }
      x_levels.push_back(lvl);
    }
  }

  AssembledData out;
  out.eps_h.resize(m + 1);
  for (int l = 0; l <= m; ++l) {
    const double nrm = jet.h_levels[l].cwiseAbs().maxCoeff();
    out.eps_h[l] = std::min(0.5, 0.5 / (nrm + 1.0));
  }
  out.eps_x.resize(x_levels.size());
  for (size_t l = 0; l < x_levels.size(); ++l) {
    const double nrm = x_levels[l].cwiseAbs().maxCoeff();
    out.eps_x[l] = std::min(0.5, 0.5 / (nrm + 1.0));
  }

  LagrangianState st;
  st.grid = solver.grid_ptr();
  st.t_nodes = VectorXd::LinSpaced(n_times, 0.0, T);
  st.x.resize(n_times);
  st.v.resize(n_times);
  st.h.resize(n_times);
  auto chi = [](double s) {
    return s <= 1.0 ? 1.0 : (s >= 2.0 ? 0.0 : smooth_step(2.0 - s));
  };
  auto chi_d = [&](double s) {
    if (s <= 1.0 || s >= 2.0) return 0.0;
    const double hh = 1e-6;
    return (chi(s + hh) - chi(s - hh)) / (2.0 * hh);
  };
  for (int t = 0; t < n_times; ++t) {
    const double tt = st.t_nodes[t];
    VectorXd h = VectorXd::Zero(nn);
    double fact = 1.0;
    for (int l = 0; l <= m; ++l) {
      if (l > 0) fact *= l;
      h += chi(tt / out.eps_h[l]) * std::pow(tt, l) / fact * jet.h_levels[l];
    }
    for (int b : g.boundary_nodes()) h[b] = 0.0;
    st.h[t] = h;

    MatrixXd x = g.nodes() + tt * v0;
    MatrixXd v = v0;
    fact = 1.0;  // (l+2)!
    for (size_t l = 0; l < x_levels.size(); ++l) {
      fact = 1.0;
      for (int q = 1; q <= static_cast<int>(l) + 2; ++q) fact *= q;
      const double s = tt / out.eps_x[l];
      const double c = chi(s);
      const double cd = chi_d(s) / out.eps_x[l];
      const double p = std::pow(tt, static_cast<int>(l) + 2);
      const double pd = (static_cast<int>(l) + 2) * std::pow(tt, static_cast<int>(l) + 1);
      x += (c * p / fact) * x_levels[l];
      v += ((cd * p + c * pd) / fact) * x_levels[l];
    }
    st.x[t] = x;
    st.v[t] = v;
  }
  out.state = std::move(st);
  return out;
}

CompatibilityReport verify_compatibility(const LagrangianState& state, int m) {
  CompatibilityReport rep;
  const PolarGrid& g = *state.grid;
  rep.scale = 0.0;
  for (const auto& h : state.h) rep.scale = std::max(rep.scale, h.cwiseAbs().maxCoeff());
  for (int k = 0; k <= m; ++k) {
    const int npts = std::min<int>(k + 3, state.n_times());
    if (npts < k + 1) break;
    const VectorXd d = fd_time_deriv_at_start(state.h, state.dt(), k, npts);
    double worst = 0.0;
    for (int b : g.boundary_nodes()) worst = std::max(worst, std::abs(d[b]));
    // normalize against the derivative's own scale
    rep.residual.push_back(worst * std::pow(state.dt(), k));
  }
  return rep;
}

CompatibilityJet jet_from_potential(const VectorXd& phi, const VectorXd& h0, int m,
                                    const DirichletSolver& solver) {
  const MatrixXd v0 = solver.metric_gradient(phi);
  // h1 = -div V0 = -lap phi (collocation form at the identity metric)
  const VectorXd h1 = -solver.laplacian(phi);
  CompatibilityJet jet = compat_recursion(h0, h1, v0, m, solver);
  jet.h_minus1 = -phi;
  return jet;
}

VectorXd oracle_h2(const CompatibilityJet& jet, const DirichletSolver& solver,
                   double dt, int nt) {
  // explicit collocation leapfrog of the coupled system (16.1); stable at
  // the small oracle grids and consistent with the collocation operators the
  // recursion evaluates
  const PolarGrid& g = solver.grid();
  const int nn = g.n_nodes();
  if (dt > 0.5 * g.min_radial_spacing())
    throw CflViolation("oracle step too large for explicit marching");

  std::vector<MatrixXd> x(nt);
  std::vector<VectorXd> h(nt);
  auto lap_at = [&](const MatrixXd& xs, const VectorXd& q) {
    const MetricData m = build_metric_slice(solver.grid_ptr(), xs);
    VectorXd d0 = g.d(q, 0), d1 = g.d(q, 1);
    VectorXd f0 = m.g_inv.col(0).cwiseProduct(d0) + m.g_inv.col(1).cwiseProduct(d1);
    VectorXd f1 = m.g_inv.col(2).cwiseProduct(d0) + m.g_inv.col(3).cwiseProduct(d1);
    VectorXd out = g.d(m.kappa.cwiseProduct(f0), 0) + g.d(m.kappa.cwiseProduct(f1), 1);
    return VectorXd(out.cwiseQuotient(m.kappa));
  };
  auto grad_at = [&](const MatrixXd& xs, const VectorXd& q) {
    const MetricData m = build_metric_slice(solver.grid_ptr(), xs);
    return eulerian_gradient(m, q);
  };
  auto forcing_at = [&](const MatrixXd& xs, const MatrixXd& v) {
    const MetricData m = build_metric_slice(solver.grid_ptr(), xs);
    const MatrixXd dv = eulerian_jacobian(m, v);
    VectorXd f = VectorXd::Zero(nn);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        f += dv.col(j * 2 + i).cwiseProduct(dv.col(i * 2 + j));
    return f;
  };

  // bootstrap from the data and the equations themselves
  x[0] = g.nodes();
  h[0] = jet.h_levels[0];
  const VectorXd f0 = forcing_at(x[0], jet.V0);
  const VectorXd lap0 = lap_at(x[0], h[0]);
  const MatrixXd gh0 = grad_at(x[0], h[0]);
  x[1] = x[0] + dt * jet.V0 - 0.5 * dt * dt * gh0;
  h[1] = h[0] + dt * jet.h_levels[1] + 0.5 * dt * dt * (lap0 + f0);
  for (int b : g.boundary_nodes()) h[1][b] = 0.0;

  for (int j = 1; j + 1 < nt; ++j) {
    const MatrixXd ghj = grad_at(x[j], h[j]);
    x[j + 1] = 2.0 * x[j] - x[j - 1] - dt * dt * ghj;
    const MatrixXd vc = (x[j + 1] - x[j - 1]) / (2.0 * dt);
    const VectorXd fj = forcing_at(x[j], vc);
    VectorXd hn = 2.0 * h[j] - h[j - 1] + dt * dt * (lap_at(x[j], h[j]) + fj);
    for (int b : g.boundary_nodes()) hn[b] = 0.0;
    h[j + 1] = hn;
  }
  return fd_time_deriv_at_start(h, dt, 2, 5);
}

std::string jet_to_json(const CompatibilityJet& jet) {
  nlohmann::json doc;
  doc["m"] = jet.m;
  nlohmann::json levels = nlohmann::json::array();
  for (int l = 0; l < static_cast<int>(jet.h_levels.size()); ++l) {
    nlohmann::json lev;
    lev["l"] = l;
    lev["field"] = std::vector<double>(jet.h_levels[l].data(),
                                       jet.h_levels[l].data() + jet.h_levels[l].size());
    levels.push_back(std::move(lev));
  }
  doc["levels"] = std::move(levels);
  std::vector<double> v0flat;
  for (int r = 0; r < jet.V0.rows(); ++r)
    for (int c = 0; c < jet.V0.cols(); ++c) v0flat.push_back(jet.V0(r, c));
  doc["V0"] = v0flat;
  doc["provenance"] = jet.provenance;
  return doc.dump();
}

}  // namespace fbeuler

#include "fbeuler/nash_moser.hpp"

#include <cmath>

#include "fbeuler/errors.hpp"

namespace fbeuler {

using Eigen::VectorXd;

void NashMoserParams::validate() const {
  if (theta0 < 1.0) throw ConfigInvalid("theta0 must be >= 1");
  if (!(alpha > lambda() + mu() + mu_prime()))
    throw ConfigInvalid("alpha must exceed lambda + mu + mu'");
  if (std::abs(alpha - std::round(alpha)) < 1e-9)
    throw ConfigInvalid("alpha must not be an integer");
  if (max_iters < 1) throw ConfigInvalid("max_iters must be positive");
}

VectorXd update_g(const NashMoserProblem& p, int i, const VectorXd& f,
                  const std::vector<VectorXd>& e_history,
                  const NashMoserParams& params) {
  const double theta_i = params.theta0 * std::ldexp(1.0, i);
  if (i == 0) return p.smooth(f, params.theta0);
  const double theta_prev = params.theta0 * std::ldexp(1.0, i - 1);
  VectorXd E = VectorXd::Zero(f.size());
  for (int j = 0; j + 1 < i; ++j) E += e_history[j];
  const VectorXd fe = f - E;
  return p.smooth(fe, theta_i) - p.smooth(fe, theta_prev) -
         p.smooth(e_history[i - 1], theta_i);
}

std::pair<VectorXd, VectorXd> error_terms(const NashMoserProblem& p,
                                          const VectorXd& u_i, const VectorXd& su_i,
                                          const VectorXd& du_i) {
  const VectorXd e1 = p.phi_prime(u_i, du_i) - p.phi_prime(su_i, du_i);
  const VectorXd e2 = p.phi(u_i + du_i) - p.phi(u_i) - p.phi_prime(u_i, du_i);
  return {e1, e2};
}

namespace {

NashMoserResult run_once(const NashMoserProblem& p, const VectorXd& f,
                         const NashMoserParams& params, bool& violated) {
  violated = false;
  NashMoserResult out;
  out.delta_used = params.delta;
  out.f_norm_check = p.norm(f, params.alpha + params.lambda());

  VectorXd u = VectorXd::Zero(p.dim);
  std::vector<VectorXd> e_history;
  std::vector<VectorXd> g_history;
  VectorXd E = VectorXd::Zero(p.dim);  // sum of e_j, j < i

  for (int i = 0; i < params.max_iters; ++i) {
    const double theta_i = params.theta0 * std::ldexp(1.0, i);
    const VectorXd su = p.smooth(u, theta_i);
    if (p.norm(su, params.mu_prime()) > 1.0 + 1e-12)
      throw InverseRefused("||S_i u_i|| at order mu' exceeds 1");
    const VectorXd g = update_g(p, i, f, e_history, params);
    g_history.push_back(g);
    const VectorXd du = p.inverse(su, g);
    const auto [e1, e2] = error_terms(p, u, su, du);
    e_history.push_back(e1 + e2);
    u += du;
    E += (i > 0) ? e_history[i - 1] : VectorXd::Zero(p.dim);

    IterationRecord rec;
    rec.i = i;
    rec.theta = theta_i;
    rec.e1 = e1.cwiseAbs().maxCoeff();
    rec.e2 = e2.cwiseAbs().maxCoeff();
    rec.residual_sup = (p.phi(u) - f).cwiseAbs().maxCoeff();
    for (double a : params.track_orders) rec.du_norms.push_back(p.norm(du, a));
    // (15.21)
    rec.hypothesis_ok = true;
    for (size_t k = 0; k < params.track_orders.size(); ++k) {
      const double a = params.track_orders[k];
      if (rec.du_norms[k] > params.delta * std::pow(theta_i, a - params.alpha) + 1e-300)
        rec.hypothesis_ok = false;
    }
    // telescoping (15.14): sum_{j<=i} g_j + S_i E_i - S_i f, E_i = sum_{j<i} e_j
    {
      VectorXd acc = VectorXd::Zero(p.dim);
      for (const auto& gj : g_history) acc += gj;
      acc += p.smooth(E, theta_i) - p.smooth(f, theta_i);
      rec.telescoping = acc.cwiseAbs().maxCoeff();
    }
    // (15.16): Phi(u_{i+1}) - S_i f - e_i - (I - S_i) E_i
    {
      VectorXd lhs = p.phi(u) - p.smooth(f, theta_i) - e_history[i] -
                     (E - p.smooth(E, theta_i));
      rec.identity_1516 = lhs.cwiseAbs().maxCoeff();
    }
    out.trace.push_back(rec);
    if (!rec.hypothesis_ok) {
      violated = true;
      break;
    }
    if (rec.residual_sup <= params.target_residual) {
      out.converged = true;
      break;
    }
  }
  out.u = u;
  return out;
}

}  // namespace

NashMoserResult nash_moser_run(const NashMoserProblem& p, const VectorXd& f,
                               NashMoserParams params) {
  params.validate();
  if (params.delta <= 0.0) {
    const double fn = p.norm(f, params.alpha + params.lambda());
    params.delta = std::sqrt(std::max(fn, 1e-16));
  }
  int restarts = 0;
  for (;;) {
    bool violated = false;
    NashMoserResult out = run_once(p, f, params, violated);
    out.restarts = restarts;
    if (!violated) return out;
    if (++restarts > params.max_restarts)
      throw HypothesisViolated("inductive bound (15.21)-style failed after restarts");
    params.delta *= 0.5;
  }
}

HypothesisReport monitor_hypothesis(const std::vector<IterationRecord>& trace,
                                    const NashMoserParams& params, double a) {
  HypothesisReport rep;
  rep.predicted_slope = a - params.alpha - params.lambda();
  std::vector<double> lx, ly;
  for (const auto& rec : trace) {
    rep.flags.push_back(rec.hypothesis_ok);
    if (rec.residual_sup > 0.0) {
      lx.push_back(rec.i * std::log(2.0));
      ly.push_back(std::log(rec.residual_sup));
    }
  }
  if (lx.size() >= 3) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(lx.size());
    for (int i = 0; i < n; ++i) {
      sx += lx[i];
      sy += ly[i];
      sxx += lx[i] * lx[i];
      sxy += lx[i] * ly[i];
    }
    rep.fitted_decay_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return rep;
}

NashMoserProblem quadratic_toy() {
  NashMoserProblem p;
  p.dim = 1;
  p.phi = [](const VectorXd& u) { return VectorXd(u.array() + u.array().square()); };
  p.phi_prime = [](const VectorXd& u, const VectorXd& v) {
    return VectorXd((1.0 + 2.0 * u.array()) * v.array());
  };
  p.inverse = [](const VectorXd& u, const VectorXd& g) {
    return VectorXd(g.array() / (1.0 + 2.0 * u.array()));
  };
  p.smooth = [](const VectorXd& u, double) { return u; };
  p.norm = [](const VectorXd& u, double) { return u.cwiseAbs().maxCoeff(); };
  return p;
}

NashMoserProblem dyadic_quadratic_toy(int n_modes) {
  NashMoserProblem p;
  p.dim = n_modes;
  p.phi = [](const VectorXd& u) { return VectorXd(u.array() + u.array().square()); };
  p.phi_prime = [](const VectorXd& u, const VectorXd& v) {
    return VectorXd((1.0 + 2.0 * u.array()) * v.array());
  };
  p.inverse = [](const VectorXd& u, const VectorXd& g) {
    return VectorXd(g.array() / (1.0 + 2.0 * u.array()));
  };
  p.smooth = [](const VectorXd& u, double theta) {
    VectorXd out = u;
    for (int j = 0; j < u.size(); ++j)
      if (std::ldexp(1.0, j) > theta) out[j] = 0.0;
    return out;
  };
  p.norm = [](const VectorXd& u, double a) {
    double s = 0.0;
    for (int j = 0; j < u.size(); ++j)
      s = std::max(s, std::abs(u[j]) * std::pow(2.0, j * a));
    return s;
  };
  return p;
}

}  // namespace fbeuler

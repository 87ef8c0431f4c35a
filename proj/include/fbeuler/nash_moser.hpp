#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace fbeuler {

// Loss-of-derivative ledger: lambda = 2 r0 + 6, mu = 3 r0 + 8, mu' = r0 + 4,
// alpha a non-integer above lambda + mu + mu'.
struct NashMoserParams {
  int n = 2;
  double theta0 = 1.0;
  double alpha = 30.5;
  double delta = 0.1;
  int max_iters = 24;
  double target_residual = 1e-12;
  int max_restarts = 5;
  std::vector<double> track_orders = {0.0};
  double alpha_tilde = 0.0;  // monitor-only proof parameter

  int r0() const { return n / 2 + 1; }
  double lambda() const { return 2.0 * r0() + 6.0; }
  double mu() const { return 3.0 * r0() + 8.0; }
  double mu_prime() const { return r0() + 4.0; }
  void validate() const;
};

struct NashMoserProblem {
  int dim = 1;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> phi;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      phi_prime;  // Phi'(u) v
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      inverse;  // psi(u) g
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, double)> smooth;  // S_theta
  std::function<double(const Eigen::VectorXd&, double)> norm;  // ||.||_a proxy
};

struct IterationRecord {
  int i = 0;
  double theta = 1.0;
  double residual_sup = 0.0;           // ||Phi(u_{i+1}) - f|| sup
  std::vector<double> du_norms;        // tracked ||du_i||_a
  double e1 = 0.0, e2 = 0.0;           // sup norms of e'_i, e''_i
  bool hypothesis_ok = true;           // (15.21) at this step
  double telescoping = 0.0;            // (15.14) defect
  double identity_1516 = 0.0;          // (15.16) defect
};

struct NashMoserResult {
  Eigen::VectorXd u;
  std::vector<IterationRecord> trace;
  bool converged = false;
  int restarts = 0;
  double delta_used = 0.0;
  double f_norm_check = 0.0;  // ||f||_{alpha+lambda} proxy vs delta^2, reported
};

// g-update (15.15): g_0 = S_0 f, g_i = (S_i - S_{i-1})(f - E_{i-1}) - S_i e_{i-1}
Eigen::VectorXd update_g(const NashMoserProblem& p, int i, const Eigen::VectorXd& f,
                         const std::vector<Eigen::VectorXd>& e_history,
                         const NashMoserParams& params);

// error terms (15.9)-(15.10)
std::pair<Eigen::VectorXd, Eigen::VectorXd> error_terms(const NashMoserProblem& p,
                                                        const Eigen::VectorXd& u_i,
                                                        const Eigen::VectorXd& su_i,
                                                        const Eigen::VectorXd& du_i);

NashMoserResult nash_moser_run(const NashMoserProblem& p, const Eigen::VectorXd& f,
                               NashMoserParams params);

struct HypothesisReport {
  std::vector<bool> flags;        // (15.21) per iteration
  double fitted_decay_slope = 0;  // log2 residual vs i
  double predicted_slope = 0;     // a - alpha - lambda for tracked a
};
HypothesisReport monitor_hypothesis(const std::vector<IterationRecord>& trace,
                                    const NashMoserParams& params, double a = 0.0);

// toy problems
NashMoserProblem quadratic_toy();  // scalar u + u^2, identity smoothing
// componentwise quadratic on dyadic modes with truncation smoothing and norms
// sup_j |u_j| 2^{j a}
NashMoserProblem dyadic_quadratic_toy(int n_modes);

}  // namespace fbeuler

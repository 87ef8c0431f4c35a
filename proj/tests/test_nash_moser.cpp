#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbeuler/nash_moser.hpp"

using namespace fbeuler;
using Eigen::VectorXd;

TEST_CASE("parameter ledger validation") {
  NashMoserParams p;
  CHECK(p.r0() == 2);
  CHECK(p.lambda() == doctest::Approx(10.0));
  CHECK(p.mu() == doctest::Approx(14.0));
  CHECK(p.mu_prime() == doctest::Approx(6.0));
  p.validate();
  NashMoserParams bad = p;
  bad.alpha = 29.5;  // below lambda + mu + mu'
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
  bad.alpha = 31.0;  // integer
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
}

TEST_CASE("quadratic toy converges to the closed-form root") {
  auto p = quadratic_toy();
  NashMoserParams params;
  params.max_iters = 40;
  params.delta = 0.2;
  const VectorXd f = VectorXd::Constant(1, 0.01);
  const auto out = nash_moser_run(p, f, params);
  const double root = (-1.0 + std::sqrt(1.04)) / 2.0;
  CHECK(out.converged);
  CHECK(std::abs(out.u[0] - root) < 1e-10);
  CHECK(out.trace.back().residual_sup < 1e-12);
  SUBCASE("telescoping identity holds along the trace") {
    for (const auto& rec : out.trace) CHECK(rec.telescoping < 1e-10);
  }
  SUBCASE("identity (15.16) holds along the trace") {
    for (const auto& rec : out.trace) CHECK(rec.identity_1516 < 1e-10);
  }
}

TEST_CASE("f = 0 stays at the fixed point") {
  auto p = quadratic_toy();
  NashMoserParams params;
  params.max_iters = 5;
  params.delta = 0.1;
  params.target_residual = 1e-300;  // run all iterations
  const auto out = nash_moser_run(p, VectorXd::Zero(1), params);
  CHECK(out.u[0] == 0.0);
  for (const auto& rec : out.trace) CHECK(rec.residual_sup == 0.0);
}

TEST_CASE("linear problem with exact inverse") {
  NashMoserProblem p;
  p.dim = 3;
  Eigen::Matrix3d L;
  L << 2, 0.3, 0, 0.1, 1.5, 0.2, 0, 0.1, 1.8;
  p.phi = [L](const VectorXd& u) { return VectorXd(L * u); };
  p.phi_prime = [L](const VectorXd&, const VectorXd& v) { return VectorXd(L * v); };
  p.inverse = [L](const VectorXd&, const VectorXd& g) {
    return VectorXd(L.fullPivLu().solve(g));
  };
  p.smooth = [](const VectorXd& u, double) { return u; };
  p.norm = [](const VectorXd& u, double) {
    return u.size() ? u.cwiseAbs().maxCoeff() : 0.0;
  };
  NashMoserParams params;
  params.max_iters = 6;
  params.delta = 1.0;
  VectorXd f(3);
  f << 0.01, -0.02, 0.005;
  const auto out = nash_moser_run(p, f, params);
  CHECK(out.converged);
  CHECK(out.trace.size() == 1);  // one effective step
  for (const auto& rec : out.trace) CHECK(rec.e2 < 1e-15);
}

TEST_CASE("error terms") {
  auto p = quadratic_toy();
  const VectorXd u = VectorXd::Constant(1, 0.3);
  const VectorXd du = VectorXd::Constant(1, 0.05);
  SUBCASE("identity smoothing kills e'") {
    const auto [e1, e2] = error_terms(p, u, u, du);
    CHECK(e1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(e2[0] == doctest::Approx(0.05 * 0.05));  // (du)^2 for u + u^2
  }
  SUBCASE("su != u gives linear-difference e'") {
    const VectorXd su = VectorXd::Constant(1, 0.2);
    const auto [e1, e2] = error_terms(p, u, su, du);
    CHECK(e1[0] == doctest::Approx(2.0 * (0.3 - 0.2) * 0.05));
  }
}

TEST_CASE("g-update telescoping on the dyadic toy") {
  auto p = dyadic_quadratic_toy(8);
  NashMoserParams params;
  params.theta0 = 1.0;
  VectorXd f(8);
  for (int j = 0; j < 8; ++j) f[j] = 1e-3 * std::pow(2.0, -3.5 * j);
  SUBCASE("g_0 = S_0 f") {
    const VectorXd g0 = update_g(p, 0, f, {}, params);
    CHECK((g0 - p.smooth(f, 1.0)).cwiseAbs().maxCoeff() < 1e-16);
  }
  SUBCASE("zero error history gives the dyadic band of f") {
    std::vector<VectorXd> e = {VectorXd::Zero(8), VectorXd::Zero(8)};
    const VectorXd g2 = update_g(p, 2, f, e, params);
    const VectorXd expect = p.smooth(f, 4.0) - p.smooth(f, 2.0);
    CHECK((g2 - expect).cwiseAbs().maxCoeff() < 1e-16);
  }
  SUBCASE("telescoping along a run") {
    VectorXd u = VectorXd::Zero(8);
    std::vector<VectorXd> e_hist, g_hist;
    for (int i = 0; i < 8; ++i) {
      const double theta = std::ldexp(1.0, i);
      const VectorXd su = p.smooth(u, theta);
      const VectorXd g = update_g(p, i, f, e_hist, params);
      g_hist.push_back(g);
      const VectorXd du = p.inverse(su, g);
      const auto [e1, e2] = error_terms(p, u, su, du);
      e_hist.push_back(e1 + e2);
      u += du;
      VectorXd E = VectorXd::Zero(8);
      for (int j = 0; j < i; ++j) E += e_hist[j];
      VectorXd acc = VectorXd::Zero(8);
      for (const auto& gj : g_hist) acc += gj;
      acc += p.smooth(E, theta) - p.smooth(f, theta);
      CHECK(acc.cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK((p.phi(u) - f).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("hypothesis monitor") {
  NashMoserParams params;
  params.delta = 0.1;
  SUBCASE("single-step trace passes vacuously") {
    std::vector<IterationRecord> trace(1);
    trace[0].hypothesis_ok = true;
    trace[0].residual_sup = 1e-14;
    const auto rep = monitor_hypothesis(trace, params);
    CHECK(rep.flags.size() == 1);
    CHECK(rep.flags[0]);
  }
  SUBCASE("injected oversized step flags at that iteration") {
    auto p = quadratic_toy();
    // direct check of the bound logic through the run
    NashMoserParams tight;
    tight.delta = 1e-9;  // makes the first step violate the bound
    tight.max_iters = 3;
    tight.max_restarts = 1;
    CHECK_THROWS_AS(nash_moser_run(p, VectorXd::Constant(1, 0.01), tight),
                    HypothesisViolated);
  }
  SUBCASE("fitted decay slope on a synthetic geometric trace") {
    std::vector<IterationRecord> trace;
    for (int i = 0; i < 6; ++i) {
      IterationRecord r;
      r.i = i;
      r.theta = std::ldexp(1.0, i);
      r.residual_sup = std::pow(2.0, -3.5 * i);
      r.hypothesis_ok = true;
      trace.push_back(r);
    }
    NashMoserParams toy;
    toy.alpha = 2.5;
    const auto rep = monitor_hypothesis(trace, toy);
    CHECK(rep.fitted_decay_slope == doctest::Approx(-3.5).epsilon(1e-6));
  }
}

TEST_CASE("determinism: identical runs produce identical traces") {
  auto p = quadratic_toy();
  NashMoserParams params;
  params.max_iters = 12;
  params.delta = 0.2;
  const VectorXd f = VectorXd::Constant(1, 0.01);
  const auto a = nash_moser_run(p, f, params);
  const auto b = nash_moser_run(p, f, params);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].residual_sup == b.trace[i].residual_sup);
    CHECK(a.trace[i].e2 == b.trace[i].e2);
  }
  CHECK(a.u[0] == b.u[0]);
}

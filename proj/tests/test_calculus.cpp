#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbeuler/calculus.hpp"
#include "test_support.hpp"

using namespace fbeuler;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("vector field families") {
  const auto fam = family_fields(2, 0.5);
  SUBCASE("exactly one rotation with vanishing coordinate divergence") {
    CHECK(fam.s0.size() == 1);
    const Eigen::Vector2d y(0.3, -0.4);
    const Eigen::Matrix2d d = fam.s0[0].derivative(y);
    CHECK(d(0, 0) + d(1, 1) == doctest::Approx(0.0));
    const Eigen::Vector2d v = fam.s0[0].value(y);
    CHECK(v[0] == doctest::Approx(0.4));
    CHECK(v[1] == doctest::Approx(0.3));
  }
  SUBCASE("interior field equals d/dy1 at its center") {
    REQUIRE(!fam.s1.empty());
    const auto& f = fam.s1[0];
    const Eigen::Vector2d v = f.value(f.center);
    if (!f.swapped) {
      CHECK(v[0] == doctest::Approx(1.0));
      CHECK(v[1] == doctest::Approx(0.0).epsilon(1e-12));
    }
    // coordinate divergence vanishes identically
    const Eigen::Vector2d probe = f.center + Eigen::Vector2d(0.07, -0.05);
    const Eigen::Matrix2d d = f.derivative(probe);
    CHECK(std::abs(d(0, 0) + d(1, 1)) < 1e-12);
  }
  SUBCASE("radial field value") {
    const Eigen::Vector2d v = fam.radial.value(Eigen::Vector2d(0.5, 0.0));
    CHECK(v[0] == doctest::Approx(0.5));
    CHECK(v[1] == doctest::Approx(0.0));
  }
  SUBCASE("the interior family covers the tangent space on d >= d0") {
    // every probe point with d >= d0 sits in some plateau where the two
    // orientations give the coordinate directions
    for (double r : {0.0, 0.2, 0.4, 0.499}) {
      for (double ang : {0.0, 1.0, 2.5}) {
        const Eigen::Vector2d y(r * std::cos(ang), r * std::sin(ang));
        double best = 0.0;
        for (size_t i = 0; i + 1 < fam.s1.size(); i += 2) {
          const Eigen::Vector2d a = fam.s1[i].value(y);
          const Eigen::Vector2d b = fam.s1[i + 1].value(y);
          best = std::max(best, std::abs(a[0] * b[1] - a[1] * b[0]));
        }
        CHECK(best > 0.5);
      }
    }
  }
}

TEST_CASE("commutators of the families") {
  const auto fam = family_fields(2, 0.5);
  SUBCASE("[R, S] = 0 for the rotation") {
    CounterRng rng(5);
    for (int i = 0; i < 20; ++i) {
      const Eigen::Vector2d y(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
      const Eigen::Vector2d br = bracket_value(fam.radial, fam.s0[0], y);
      CHECK(br.cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("rotation brackets close in coefficient form (n = 2, 3)") {
    // n=2: the single rotation commutes with itself trivially; n=3: the
    // bracket of J_ab = y^a d_b - y^b d_a with J_bc equals -J_ac.  Verified on
    // coefficient matrices (J_ab)^c_d.
    auto J = [](int a, int b) {
      Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
      m(b, a) = 1.0;   // coefficient of y^a in component b
      m(a, b) = -1.0;  // coefficient of y^b in component a
      return m;
    };
    // bracket of linear fields with coefficient matrices A, B is BA - AB
    const Eigen::Matrix3d j01 = J(0, 1), j12 = J(1, 2), j02 = J(0, 2);
    const Eigen::Matrix3d br = j01 * j12 - j12 * j01;
    CHECK((br + j02).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("divergence examples") {
  auto g = make_grid(11, 20);
  MetricData m = MetricData::identity(g);
  SUBCASE("div R = n") {
    Field R = vector_field(g->nodes());
    CHECK((divergence(R, m).array() - 2.0).abs().maxCoeff() < 1e-11);
  }
  SUBCASE("rotation field is divergence free") {
    MatrixXd S(g->n_nodes(), 2);
    S.col(0) = -g->nodes().col(1);
    S.col(1) = g->nodes().col(0);
    CHECK(divergence(vector_field(S), m).cwiseAbs().maxCoeff() < 1e-11);
  }
  SUBCASE("div of a metric gradient is the Laplacian") {
    auto gp = make_grid(13, 24);
    const MetricData mp = build_metric_slice(gp, testing::perturbed_map(*gp, 0.08));
    DirichletSolver solver(gp, mp);
    CounterRng rng(11);
    const VectorXd q = testing::smooth_scalar(*gp, rng);
    const MatrixXd W = solver.metric_gradient(q);
    const VectorXd lhs = divergence(vector_field(W), mp);
    const VectorXd rhs = solver.laplacian(q);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-8 * rhs.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("Lie derivative examples") {
  auto g = make_grid(11, 20);
  MetricData m = MetricData::identity(g);
  const auto fam = family_fields(2, 0.5);
  SUBCASE("L_T T = 0") {
    for (const auto& T : {fam.s0[0], fam.radial, fam.s1[0]}) {
      Field W = vector_field(T.values_on(*g));
      const Field out = lie_derivative(T, W, LieVariant::Plain, m);
      CHECK(out.data.cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("L_R of a constant vector is its negative") {
    MatrixXd e1 = MatrixXd::Zero(g->n_nodes(), 2);
    e1.col(0).setOnes();
    const Field out = lie_derivative(fam.radial, vector_field(e1),
                                     LieVariant::Plain, m);
    CHECK((out.data + e1).cwiseAbs().maxCoeff() < 1e-11);
  }
  SUBCASE("variant/variance mismatches throw") {
    Field w = one_form(MatrixXd::Zero(g->n_nodes(), 2));
    CHECK_THROWS_AS(lie_derivative(fam.s0[0], w, LieVariant::Hat, m),
                    VarianceMismatch);
    Field W(Variance::Vector, 2, g->n_nodes());
    CHECK_THROWS_AS(lie_derivative(fam.s0[0], W, LieVariant::Check, m),
                    VarianceMismatch);
  }
}

TEST_CASE("curl examples and identity") {
  auto g = make_grid(13, 24);
  MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.05));
  SUBCASE("curl of a gradient vanishes") {
    CounterRng rng(2);
    const VectorXd q = testing::smooth_scalar(*g, rng);
    MatrixXd w(g->n_nodes(), 2);
    w.col(0) = g->d(q, 0);
    w.col(1) = g->d(q, 1);
    const Field c = curl(one_form(w), *g);
    CHECK(c.data.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + q.cwiseAbs().maxCoeff()));
  }
  SUBCASE("curl of (-y2, y1) is 2") {
    MatrixXd w(g->n_nodes(), 2);
    w.col(0) = -g->nodes().col(1);
    w.col(1) = g->nodes().col(0);
    const Field c = curl(one_form(w), *g);
    CHECK((c.comp(0, 1).array() - 2.0).abs().maxCoeff() < 1e-11);
    // antisymmetry
    CHECK((c.comp(0, 1) + c.comp(1, 0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("Lie derivative commutes with curl at discretization accuracy") {
    const auto fam = family_fields(2, 0.5);
    CounterRng rng(9);
    MatrixXd w = testing::smooth_vector(*g, rng, 3);
    double res = curl_identity_check(fam.s0[0], one_form(w), m);
    CHECK(res < 1e-8 * (1.0 + w.cwiseAbs().maxCoeff()));
    res = curl_identity_check(fam.s1[1], one_form(w), m);
    CHECK(res < 1e-4);
  }
}

TEST_CASE("Leibniz and product rules on polynomial data") {
  auto g = make_grid(11, 20);
  MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.0) );
  const auto fam = family_fields(2, 0.5);
  CounterRng rng(21);
  const MatrixXd alpha = testing::smooth_vector(*g, rng, 3);
  const MatrixXd W = testing::smooth_vector(*g, rng, 3);
  const VectorFieldSpec T = fam.s0[0];

  SUBCASE("(4.14): L_T(alpha_c W^c) = (L_T alpha) W + alpha (L_T W)") {
    const VectorXd contracted = alpha.col(0).cwiseProduct(W.col(0)) +
                                alpha.col(1).cwiseProduct(W.col(1));
    const VectorXd lhs = apply_vector_to_scalar(T, contracted, *g);
    const Field la = lie_derivative(T, one_form(alpha), LieVariant::Plain, m);
    const Field lw = lie_derivative(T, vector_field(W), LieVariant::Plain, m);
    const VectorXd rhs = la.data.col(0).cwiseProduct(W.col(0)) +
                         la.data.col(1).cwiseProduct(W.col(1)) +
                         alpha.col(0).cwiseProduct(lw.data.col(0)) +
                         alpha.col(1).cwiseProduct(lw.data.col(1));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("(4.21): L_T(beta W) = (check L_T beta) W + beta (hat L_T W)") {
    auto gp = make_grid(11, 20);
    // weighted variants need a nontrivial kappa; low-degree map keeps
    // everything polynomial so the rule is exact to roundoff
    MatrixXd x = gp->nodes();
    for (int p = 0; p < gp->n_nodes(); ++p) {
      const double y1 = gp->nodes()(p, 0), y2 = gp->nodes()(p, 1);
      x(p, 0) += 0.05 * y1 * y2;
      x(p, 1) += 0.04 * (y1 * y1 - y2);
    }
    const MetricData mp = build_metric_slice(gp, x);
    Field beta(Variance::TwoForm, 2, gp->n_nodes());
    CounterRng rng2(22);
    for (int c = 0; c < 4; ++c) beta.data.col(c) = testing::smooth_scalar(*gp, rng2, 2);
    const MatrixXd W2 = testing::smooth_vector(*gp, rng2, 2);
    MatrixXd bw(gp->n_nodes(), 2);
    for (int a = 0; a < 2; ++a)
      bw.col(a) = beta.data.col(a * 2 + 0).cwiseProduct(W2.col(0)) +
                  beta.data.col(a * 2 + 1).cwiseProduct(W2.col(1));
    const Field lhs = lie_derivative(T, one_form(bw), LieVariant::Plain, mp);
    const Field cb = lie_derivative(T, beta, LieVariant::Check, mp);
    const Field hw = lie_derivative(T, vector_field(W2), LieVariant::Hat, mp);
    MatrixXd rhs(gp->n_nodes(), 2);
    for (int a = 0; a < 2; ++a)
      rhs.col(a) = cb.data.col(a * 2 + 0).cwiseProduct(W2.col(0)) +
                   cb.data.col(a * 2 + 1).cwiseProduct(W2.col(1)) +
                   beta.data.col(a * 2 + 0).cwiseProduct(hw.data.col(0)) +
                   beta.data.col(a * 2 + 1).cwiseProduct(hw.data.col(1));
    CHECK((lhs.data - rhs).cwiseAbs().maxCoeff() <
          1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("hat divergence rule (4.19) converges under refinement") {
  const auto fam = family_fields(2, 0.5);
  std::vector<double> res;
  for (int nr : {9, 13, 17}) {
    auto g = make_grid(nr, 2 * nr - 2);
    const MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.08));
    CounterRng rng(31);
    const MatrixXd W = testing::smooth_vector(*g, rng, 3);
    const VectorFieldSpec U = fam.s1[0];
    const Field lw = lie_derivative(U, vector_field(W), LieVariant::Hat, m);
    const VectorXd lhs = divergence(lw, m);
    const VectorXd divW = divergence(vector_field(W), m);
    const VectorXd rhs = apply_vector_to_scalar(U, divW, *g) +
                         apply_vector_to_scalar(U, m.sigma, *g).cwiseProduct(divW);
    res.push_back((lhs - rhs).cwiseAbs().maxCoeff());
  }
  CHECK(res[2] < res[0]);
  CHECK(res[2] < 1e-4);
}

TEST_CASE("hat time derivative") {
  auto g = make_grid(9, 16);
  SUBCASE("static metric reduces to plain time differences") {
    LagrangianState st = static_state(g, VectorXd::Zero(g->n_nodes()), 6, 1e-2);
    MetricSeries ms = build_metric_series(st);
    std::vector<Field> series;
    for (int t = 0; t < 6; ++t) {
      MatrixXd W(g->n_nodes(), 2);
      W.col(0).setConstant(std::sin(0.3 * t));
      W.col(1).setConstant(std::cos(0.2 * t));
      series.push_back(vector_field(W));
    }
    const auto hat = hat_time_derivative(series, ms);
    std::vector<MatrixXd> plain(6);
    for (int t = 0; t < 6; ++t) plain[t] = series[t].data;
    for (int t = 0; t < 6; ++t) {
      const MatrixXd d = fd_time1(plain, ms.dt(), t);
      CHECK((hat[t].data - d).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("hat commutes with divergence exactly by construction") {
    LagrangianState st = static_state(g, VectorXd::Zero(g->n_nodes()), 6, 5e-3);
    for (int t = 0; t < st.n_times(); ++t) {
      const double a = 1.0 + 0.05 * st.t_nodes[t];
      st.x[t] = a * g->nodes();
    }
    MetricSeries ms = build_metric_series(st);
    CounterRng rng(41);
    std::vector<Field> series;
    for (int t = 0; t < st.n_times(); ++t) {
      CounterRng r2(41, "w", t);
      series.push_back(vector_field(testing::smooth_vector(*g, r2, 2)));
    }
    const auto hat = hat_time_derivative(series, ms);
    // div(hat W) vs hat-scalar derivative of div W
    std::vector<VectorXd> divs(st.n_times());
    for (int t = 0; t < st.n_times(); ++t)
      divs[t] = ms.at[t].kappa.cwiseProduct(divergence(series[t], ms.at[t]));
    for (int t = 0; t < st.n_times(); ++t) {
      const VectorXd lhs = divergence(hat[t], ms.at[t]);
      const VectorXd rhs =
          fd_time1(divs, ms.dt(), t).cwiseQuotient(ms.at[t].kappa);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <
            1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("raise and lower round trip") {
  auto g = make_grid(9, 16);
  const MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.1));
  CounterRng rng(51);
  const MatrixXd W = testing::smooth_vector(*g, rng, 3);
  const Field back = raise_index(lower_index(vector_field(W), m), m);
  CHECK((back.data - W).cwiseAbs().maxCoeff() < 1e-12 * (1 + W.cwiseAbs().maxCoeff()));
}

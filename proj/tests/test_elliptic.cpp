#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbeuler/calculus.hpp"
#include "test_support.hpp"

using namespace fbeuler;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("Dirichlet solver closed forms") {
  auto g = make_grid(13, 16);
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("f = 1 gives (|y|^2 - 1)/4") {
    const VectorXd q = solver.solve(VectorXd::Ones(g->n_nodes()));
    VectorXd exact(g->n_nodes());
    for (int p = 0; p < g->n_nodes(); ++p) {
      const double r = g->radius(p);
      exact[p] = (r * r - 1.0) / 4.0;
    }
    CHECK((q - exact).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("f = 0 gives 0") {
    const VectorXd q = solver.solve(VectorXd::Zero(g->n_nodes()));
    CHECK(q.cwiseAbs().maxCoeff() < 1e-13);
  }
  SUBCASE("boundary trace is exactly zero") {
    CounterRng rng(1);
    VectorXd f(g->n_nodes());
    for (int p = 0; p < g->n_nodes(); ++p) f[p] = rng.normal();
    const VectorXd q = solver.solve(f);
    for (int b : g->boundary_nodes()) CHECK(q[b] == 0.0);
  }
}

TEST_CASE("Dirichlet solver self-convergence on a smooth mode") {
  // smooth non-polynomial right side against a fine-grid reference
  auto eval_f = [](double x, double y) {
    return std::sin(2.3 * x + 0.4) * std::cos(1.7 * y);
  };
  auto solve_at = [&](int nr, int na, double x0, double y0) {
    auto g = make_grid(nr, na);
    DirichletSolver solver(g, MetricData::identity(g));
    VectorXd f(g->n_nodes());
    for (int p = 0; p < g->n_nodes(); ++p)
      f[p] = eval_f(g->nodes()(p, 0), g->nodes()(p, 1));
    const VectorXd q = solver.solve(f);
    // probe by quadrature-weighted average around the first interior ring
    double num = 0, den = 0;
    for (int p = 0; p < g->n_nodes(); ++p) {
      const double w = g->quad_weights()[p];
      const double dx = g->nodes()(p, 0) - x0, dy = g->nodes()(p, 1) - y0;
      const double k = std::exp(-40.0 * (dx * dx + dy * dy));
      num += w * k * q[p];
      den += w * k;
    }
    return num / den;
  };
  const double ref = solve_at(41, 48, 0.3, 0.2);
  const double e1 = std::abs(solve_at(11, 24, 0.3, 0.2) - ref);
  const double e2 = std::abs(solve_at(17, 32, 0.3, 0.2) - ref);
  CHECK(e2 < 0.5 * e1);
  CHECK(e2 < 1e-6);
}

TEST_CASE("projection examples and invariants") {
  auto g = make_grid(11, 20);
  const MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.06));
  DirichletSolver solver(g, m);
  SUBCASE("rotation field is a fixed point at the identity metric") {
    DirichletSolver si(g, MetricData::identity(g));
    MatrixXd S(g->n_nodes(), 2);
    S.col(0) = -g->nodes().col(1);
    S.col(1) = g->nodes().col(0);
    const MatrixXd PS = si.project_divfree(S);
    CHECK((PS - S).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("pure gradients of boundary-zero potentials are killed") {
    CounterRng rng(7);
    const VectorXd q = testing::boundary_zero_scalar(*g, rng);
    const MatrixXd W = solver.metric_gradient(q);
    const MatrixXd PW = solver.project_divfree(W);
    CHECK(solver.norm(PW) < 1e-9 * std::max(1.0, solver.norm(W)));
  }
  SUBCASE("contraction, idempotency and orthogonality on rough fields") {
    for (int i = 0; i < 8; ++i) {
      CounterRng rng(100 + i);
      MatrixXd U(g->n_nodes(), 2);
      for (int p = 0; p < g->n_nodes(); ++p)
        for (int c = 0; c < 2; ++c) U(p, c) = rng.normal();
      const MatrixXd PU = solver.project_divfree(U);
      const double nu = solver.norm(U);
      CHECK(solver.norm(PU) <= nu * (1.0 + 1e-10));
      CHECK(solver.norm(solver.project_divfree(PU) - PU) < 1e-9 * nu);
      CHECK(std::abs(solver.inner(PU, U - PU)) < 1e-9 * nu * nu);
    }
  }
}

TEST_CASE("inner product examples") {
  auto g = make_grid(11, 20);
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("area of the unit disk") {
    MatrixXd e1 = MatrixXd::Zero(g->n_nodes(), 2);
    e1.col(0).setOnes();
    CHECK(solver.inner(e1, e1) ==
          doctest::Approx(3.14159265358979323846).epsilon(1e-12));
  }
  SUBCASE("symmetry and positivity") {
    CounterRng rng(9);
    const MatrixXd U = testing::smooth_vector(*g, rng);
    const MatrixXd W = testing::smooth_vector(*g, rng);
    CHECK(std::abs(solver.inner(U, W) - solver.inner(W, U)) <
          1e-12 * std::abs(solver.inner(U, W)));
    CHECK(solver.inner(U, U) > 0.0);
  }
}

TEST_CASE("normal operator") {
  auto g = make_grid(17, 32);
  DirichletSolver solver(g, MetricData::identity(g));
  const VectorXd h = testing::default_h0(*g);
  SUBCASE("A_h e1 is e1 up to discretization (oracle value)") {
    MatrixXd e1 = MatrixXd::Zero(g->n_nodes(), 2);
    e1.col(0).setOnes();
    const MatrixXd A = solver.normal_operator(h, e1);
    CHECK((A - e1).cwiseAbs().maxCoeff() < 5e-3);
    // refinement improves it
    auto g2 = make_grid(33, 64);
    DirichletSolver s2(g2, MetricData::identity(g2));
    MatrixXd e12 = MatrixXd::Zero(g2->n_nodes(), 2);
    e12.col(0).setOnes();
    const MatrixXd A2 = s2.normal_operator(testing::default_h0(*g2), e12);
    CHECK((A2 - e12).cwiseAbs().maxCoeff() < (A - e1).cwiseAbs().maxCoeff());
  }
  SUBCASE("symmetry on projected fields") {
    CounterRng rng(13);
    MatrixXd U(g->n_nodes(), 2), W(g->n_nodes(), 2);
    for (int p = 0; p < g->n_nodes(); ++p)
      for (int c = 0; c < 2; ++c) {
        U(p, c) = rng.normal();
        W(p, c) = rng.normal();
      }
    const MatrixXd Up = solver.project_divfree(U);
    const MatrixXd Wp = solver.project_divfree(W);
    const double s1 = solver.inner(Up, solver.normal_operator(h, Wp));
    const double s2 = solver.inner(Wp, solver.normal_operator(h, Up));
    CHECK(std::abs(s1 - s2) < 1e-10 * solver.norm(Up) * solver.norm(Wp));
  }
  SUBCASE("positivity via Rayleigh extremes") {
    const auto ray = rayleigh_extremes(solver, h, 80, 3);
    CHECK(ray.lambda_min > -1e-6);
    CHECK(ray.lambda_max > 0.0);
  }
  SUBCASE("depends only on the boundary normal derivative of f") {
    CounterRng rng(17);
    const VectorXd q = testing::smooth_scalar(*g, rng, 3);
    VectorXd f2 = h;
    for (int p = 0; p < g->n_nodes(); ++p) {
      const double r = g->radius(p);
      const double w = (1.0 - r * r);
      f2[p] += 0.2 * w * w * q[p];
    }
    MatrixXd W = testing::smooth_vector(*g, rng, 3);
    const MatrixXd A1 = solver.normal_operator(h, W);
    const MatrixXd A2 = solver.normal_operator(f2, W);
    CHECK((A1 - A2).cwiseAbs().maxCoeff() <
          1e-8 * std::max(1.0, A1.cwiseAbs().maxCoeff()));
  }
  SUBCASE("nonzero boundary trace is rejected") {
    CHECK_THROWS_AS(
        solver.normal_operator(VectorXd::Ones(g->n_nodes()),
                               MatrixXd::Zero(g->n_nodes(), 2)),
        BoundaryTraceNonzero);
  }
}

TEST_CASE("projected multiplication operators") {
  auto g = make_grid(11, 20);
  const MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.05));
  DirichletSolver solver(g, m);
  CounterRng rng(23);
  SUBCASE("G is the identity on divergence-free fields") {
    const MatrixXd W = solver.project_divfree(testing::smooth_vector(*g, rng));
    const MatrixXd GW = solver.identity_operator(W);
    CHECK(solver.norm(GW - W) < 1e-9 * solver.norm(W));
  }
  SUBCASE("zero beta gives zero") {
    Field beta(Variance::TwoForm, 2, g->n_nodes());
    const MatrixXd W = solver.project_divfree(testing::smooth_vector(*g, rng));
    CHECK(solver.norm(solver.projected_multiplication(beta, W)) < 1e-12);
  }
  SUBCASE("norm bound over random pairs") {
    for (int i = 0; i < 32; ++i) {
      CounterRng r2(400 + i);
      Field beta(Variance::TwoForm, 2, g->n_nodes());
      for (int c = 0; c < 4; ++c) beta.data.col(c) = testing::smooth_scalar(*g, r2, 2);
      const MatrixXd W = solver.project_divfree(testing::smooth_vector(*g, r2, 3));
      const MatrixXd MW = solver.projected_multiplication(beta, W);
      // ||beta||_inf as the max nodal g-operator norm
      double bmax = 0.0;
      for (int p = 0; p < g->n_nodes(); ++p) {
        Eigen::Matrix2d B, G, Gi;
        B << beta.data(p, 0), beta.data(p, 1), beta.data(p, 2), beta.data(p, 3);
        G << m.g(p, 0), m.g(p, 1), m.g(p, 2), m.g(p, 3);
        Gi << m.g_inv(p, 0), m.g_inv(p, 1), m.g_inv(p, 2), m.g_inv(p, 3);
        // operator norm of g^{-1} beta in the g-inner product
        const Eigen::Matrix2d A = Gi * B;
        const Eigen::Matrix2d M = A.transpose() * G * A;
        const Eigen::Matrix2d Mg = Gi * M;
        bmax = std::max(bmax, std::sqrt(Mg.eigenvalues().real().maxCoeff()));
      }
      CHECK(solver.norm(MW) <= bmax * solver.norm(W) * (1.0 + 1e-8));
    }
  }
}

TEST_CASE("dense operator oracles") {
  auto g = make_grid(9, 12);
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("projection matrix is idempotent") {
    const MatrixXd P = dense_oracle_assemble(solver, OperatorTag::Projection);
    CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("normal operator matrix is weighted-symmetric on the div-free class") {
    const VectorXd h = testing::default_h0(*g);
    const MatrixXd P = dense_oracle_assemble(solver, OperatorTag::Projection);
    const MatrixXd A = dense_oracle_assemble(solver, OperatorTag::Normal, &h);
    // weighted Gram matrix of the vec layout
    const int nn = g->n_nodes();
    MatrixXd Wt = MatrixXd::Zero(2 * nn, 2 * nn);
    for (int c = 0; c < 2; ++c)
      Wt.block(c * nn, c * nn, nn, nn).diagonal() = solver.weighted_kappa();
    const MatrixXd S = P.transpose() * Wt * A * P;
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <
          1e-8 * std::max(1.0, S.cwiseAbs().maxCoeff()));
  }
  SUBCASE("G acts as the identity on a divergence-free basis") {
    Field gform(Variance::TwoForm, 2, g->n_nodes());
    gform.data = solver.metric().g;
    const MatrixXd P = dense_oracle_assemble(solver, OperatorTag::Projection);
    const MatrixXd G =
        dense_oracle_assemble(solver, OperatorTag::Multiplication, nullptr, &gform);
    CHECK((G * P - P).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("size gate") {
    auto gl = make_grid(40, 128);
    DirichletSolver sl(gl, MetricData::identity(gl));
    CHECK_THROWS_AS(dense_oracle_assemble(sl, OperatorTag::Projection),
                    GridTooLarge);
  }
}

TEST_CASE("div-curl pointwise estimate (Lemma 5.1 diagnostic)") {
  auto g = make_grid(13, 24);
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("gradient one-forms give a finite fitted constant") {
    double worst = 0.0;
    for (int i = 0; i < 8; ++i) {
      CounterRng rng(600 + i);
      const VectorXd q = testing::smooth_scalar(*g, rng);
      MatrixXd w(g->n_nodes(), 2);
      w.col(0) = g->d(q, 0);
      w.col(1) = g->d(q, 1);
      const auto rep = divcurl_estimate_check(solver, one_form(w));
      worst = std::max(worst, rep.sup_ratio);
      CHECK(std::isfinite(rep.sup_ratio));
    }
    CHECK(worst < 50.0);
  }
  SUBCASE("tangentially varying form is dominated by the first term") {
    VectorXd q(g->n_nodes());
    for (int p = 0; p < g->n_nodes(); ++p)
      q[p] = std::sin(3.0 * g->angle(p)) * g->radius(p) * g->radius(p) *
             g->radius(p);
    MatrixXd w(g->n_nodes(), 2);
    w.col(0) = g->d(q, 0);
    w.col(1) = g->d(q, 1);
    const auto rep = divcurl_estimate_check(solver, one_form(w));
    CHECK(rep.sup_ratio < 30.0);
  }
  SUBCASE("zero form gives ratio zero") {
    const auto rep =
        divcurl_estimate_check(solver, one_form(MatrixXd::Zero(g->n_nodes(), 2)));
    CHECK(rep.sup_ratio == 0.0);
  }
}

TEST_CASE("projection nearly commutes with tangential Lie derivatives (4.31)") {
  const auto fam = family_fields(2, 0.5);
  std::vector<double> res;
  for (int nr : {11, 17}) {
    auto g = make_grid(nr, 2 * nr - 2);
    const MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.08));
    DirichletSolver solver(g, m);
    CounterRng rng(71);
    const MatrixXd u = testing::smooth_vector(*g, rng, 3);
    const Field lu = lie_derivative(fam.s0[0], vector_field(u), LieVariant::Hat, m);
    const Field lpu = lie_derivative(
        fam.s0[0], vector_field(solver.project_divfree(u)), LieVariant::Hat, m);
    const MatrixXd lhs = solver.project_divfree(lpu.data);
    const MatrixXd rhs = solver.project_divfree(lu.data);
    res.push_back((lhs - rhs).cwiseAbs().maxCoeff());
  }
  CHECK(res[1] < res[0]);
  CHECK(res[1] < 1e-3);
}

TEST_CASE("normal-operator commutator (4.35) at a fixed grid") {
  auto g = make_grid(17, 32);
  const MetricData m = build_metric_slice(g, testing::perturbed_map(*g, 0.08));
  DirichletSolver solver(g, m);
  const auto fam = family_fields(2, 0.5);
  CounterRng rng(73);
  VectorXd f = testing::boundary_zero_scalar(*g, rng, 3);
  MatrixXd W = solver.project_divfree(testing::smooth_vector(*g, rng, 3));
  const VectorFieldSpec T = fam.s0[0];

  const MatrixXd AfW = solver.normal_operator(f, W);
  const Field lowered = lower_index(vector_field(AfW), m);
  const Field lt = lie_derivative(T, lowered, LieVariant::Plain, m);
  const MatrixXd lhs = solver.project_divfree(raise_index(lt, m).data);
  const Field hatW = lie_derivative(T, vector_field(W), LieVariant::Hat, m);
  const MatrixXd rhs1 = solver.normal_operator(f, hatW.data);
  const VectorXd tf = apply_vector_to_scalar(T, f, *g);
  const VectorXd tsig = apply_vector_to_scalar(T, m.sigma, *g);
  const MatrixXd rhs2 = solver.normal_operator(VectorXd(tf - tsig.cwiseProduct(f)), W);
  const double res = (lhs - rhs1 - rhs2).cwiseAbs().maxCoeff();
  CHECK(res < 5e-4 * std::max(1.0, AfW.cwiseAbs().maxCoeff()));
}

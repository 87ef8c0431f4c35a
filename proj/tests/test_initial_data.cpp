#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fbeuler/euler.hpp"
#include "fbeuler/initial_data.hpp"
#include "test_support.hpp"

using namespace fbeuler;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("F terms of the recursion") {
  auto g = make_grid(11, 20);
  const int nn = g->n_nodes();
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("F_2 vanishes for V0 = 0") {
    std::vector<VectorXd> h = {VectorXd::Zero(nn), VectorXd::Zero(nn)};
    const VectorXd F2 = f_term(2, h, MatrixXd::Zero(nn, 2), solver);
    CHECK(F2.cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("F_2 = 2 for the swap field") {
    std::vector<VectorXd> h = {VectorXd::Zero(nn), VectorXd::Zero(nn)};
    MatrixXd V0(nn, 2);
    V0.col(0) = g->nodes().col(1);
    V0.col(1) = g->nodes().col(0);
    const VectorXd F2 = f_term(2, h, V0, solver);
    CHECK((F2.array() - 2.0).abs().maxCoeff() < 1e-11);
  }
  SUBCASE("V0 = 0 gives h2 = lap h0") {
    CounterRng rng(7);
    VectorXd h0 = testing::boundary_zero_scalar(*g, rng, 3);
    const auto jet =
        compat_recursion(h0, VectorXd::Zero(nn), MatrixXd::Zero(nn, 2), 4, solver);
    // traces of the generated levels vanish after the ladder
    for (int l = 0; l <= 4; ++l) {
      double tr = 0;
      for (int b : g->boundary_nodes())
        tr = std::max(tr, std::abs(jet.h_levels[l][b]));
      CHECK(tr < 1e-10 * std::max(1.0, jet.h_levels[l].cwiseAbs().maxCoeff()));
    }
    // after the ladder adjusts h0, h2 equals lap of the adjusted h0 exactly
    const VectorXd lap = solver.laplacian(jet.h_levels[0]);
    CHECK((jet.h_levels[2] - lap).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, lap.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("short-time integration oracle agrees on h2") {
  auto g = make_grid(13, 24);
  DirichletSolver solver(g, MetricData::identity(g));
  const auto jet = jet_from_potential(testing::bump_potential(*g, 0.01),
                                      testing::default_h0(*g), 6, solver);
  const VectorXd h2o = oracle_h2(jet, solver, 4e-4, 9);
  const double rel = (h2o - jet.h_levels[2]).cwiseAbs().maxCoeff() /
                     jet.h_levels[2].cwiseAbs().maxCoeff();
  CHECK(rel < 1e-4);
}

TEST_CASE("boundary power series (flat metric)") {
  auto g = make_grid(9, 16);
  const int na = g->n_angular();
  SUBCASE("zero data gives zero coefficients") {
    std::vector<VectorXd> zero(3, VectorXd::Zero(na));
    const auto series = boundary_series(*g, zero, zero, 4);
    for (const auto& row : series.coeff)
      for (const auto& c : row) CHECK(c.cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("radial split identity at r = 1 for h = (1 - r^2)/2") {
    // grad_N^2 h + (n-1)/r grad_N h equals lap h for a radial function
    auto gp = make_grid(11, 16);
    DirichletSolver solver(gp, MetricData::identity(gp));
    const VectorXd h = testing::default_h0(*gp);
    const VectorXd lap = solver.laplacian(h);
    // radial derivatives at the boundary: d_r h = -r, d_r^2 h = -1
    for (int b : gp->boundary_nodes()) {
      const double split = -1.0 + (2 - 1) * (-1.0);
      CHECK(std::abs(lap[b] - split) < 1e-10);
    }
  }
  SUBCASE("constant normal data reproduces the hand-computed k = 2 row") {
    std::vector<VectorXd> h0(1, VectorXd::Zero(na));
    std::vector<VectorXd> h1(1, VectorXd::Constant(na, -0.5));  // h_{1,0} = -c0
    const auto series = boundary_series(*g, h0, h1, 3);
    // h_{2,0} = -(n-1) h_{1,0} = c0
    CHECK((series.coeff[2][0].array() - 0.5).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("formal assembly") {
  auto g = make_grid(11, 20);
  const int nn = g->n_nodes();
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("single-level jet is constant below the first cutoff") {
    CompatibilityJet jet;
    jet.m = 3;
    CounterRng rng(17);
    jet.h_levels = {testing::boundary_zero_scalar(*g, rng, 3), VectorXd::Zero(nn),
                    VectorXd::Zero(nn), VectorXd::Zero(nn)};
    jet.V0 = MatrixXd::Zero(nn, 2);
    jet.provenance = {"d", "d", "r", "r"};
    const auto out = assemble_formal_solution(jet, jet.V0, solver, 0.05, 11);
    for (int t = 0; t < out.state.n_times(); ++t)
      CHECK((out.state.h[t] - jet.h_levels[0]).cwiseAbs().maxCoeff() < 1e-13);
  }
  SUBCASE("FD recovery of the first two levels") {
    const auto jet = jet_from_potential(testing::bump_potential(*g, 0.01),
                                        testing::default_h0(*g), 6, solver);
    const auto out = assemble_formal_solution(jet, jet.V0, solver, 0.02, 21);
    const VectorXd d1 = fd_time_deriv_at_start(out.state.h, out.state.dt(), 1, 4);
    const VectorXd d2 = fd_time_deriv_at_start(out.state.h, out.state.dt(), 2, 5);
    CHECK((d1 - jet.h_levels[1]).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((d2 - jet.h_levels[2]).cwiseAbs().maxCoeff() < 1e-5);
  }
  SUBCASE("residual of the system decays at the jet order") {
    const auto jet = jet_from_potential(testing::bump_potential(*g, 0.01),
                                        testing::default_h0(*g), 6, solver);
    const auto out = assemble_formal_solution(jet, jet.V0, solver, 0.04, 41);
    const auto& st = out.state;
    // wave-equation residual of the assembled pair, interior nodes
    MetricSeries ms = build_metric_series(st);
    const auto f = quadratic_forcing(ms, st.v);
    std::vector<VectorXd> eh(st.n_times());
    for (int t = 0; t < st.n_times(); ++t) eh[t] = st.h[t];
    std::vector<double> resv, ts;
    DirichletSolver s0(g, MetricData::identity(g));
    for (int t = 4; t + 4 < st.n_times(); t += 4) {
      const VectorXd lapc = [&] {
        DirichletSolver st_solver(g, ms.at[t]);
        return VectorXd(st_solver.laplacian(st.h[t]));
      }();
      const VectorXd r = fd_time2(eh, st.dt(), t) - lapc - f[t];
      double worst = 0;
      for (int p = 0; p < g->n_interior(); ++p)
        worst = std::max(worst, std::abs(r[p]));
      resv.push_back(worst);
      ts.push_back(st.t_nodes[t]);
    }
    // fitted slope of log residual vs log t at least m - 2.5 (m = 6)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(resv.size());
    for (int i = 0; i < n; ++i) {
      const double X = std::log(ts[i]), Y = std::log(resv[i] + 1e-300);
      sx += X;
      sy += Y;
      sxx += X * X;
      sxy += X * Y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= 3.5);
  }
  SUBCASE("jet order locality: levels below m agree between m = 4 and m = 6") {
    const auto j4 = jet_from_potential(testing::bump_potential(*g, 0.01),
                                       testing::default_h0(*g), 4, solver);
    const auto j6 = jet_from_potential(testing::bump_potential(*g, 0.01),
                                       testing::default_h0(*g), 6, solver);
    for (int l = 0; l <= 4; ++l)
      CHECK((j4.h_levels[l] - j6.h_levels[l]).cwiseAbs().maxCoeff() < 1e-11);
  }
}

TEST_CASE("compatibility verifier") {
  auto g = make_grid(11, 20);
  DirichletSolver solver(g, MetricData::identity(g));
  SUBCASE("assembled data passes to order four") {
    const auto jet = jet_from_potential(testing::bump_potential(*g, 0.01),
                                        testing::default_h0(*g), 6, solver);
    const auto out = assemble_formal_solution(jet, jet.V0, solver, 0.02, 21);
    const auto rep = verify_compatibility(out.state, 4);
    for (double r : rep.residual) CHECK(r <= 1e-6 * std::max(rep.scale, 1.0));
  }
  SUBCASE("a corrupted level is flagged") {
    auto jet = jet_from_potential(testing::bump_potential(*g, 0.01),
                                  testing::default_h0(*g), 6, solver);
    // bump supported at the boundary ring breaks the k = 2 trace
    for (int b : g->boundary_nodes()) jet.h_levels[2][b] += 0.5;
    const auto out = assemble_formal_solution(jet, jet.V0, solver, 0.02, 21);
    const auto rep = verify_compatibility(out.state, 4);
    CHECK(rep.residual[2] > 1e-4);
  }
  SUBCASE("zero data has zero residuals") {
    LagrangianState st = static_state(g, VectorXd::Zero(g->n_nodes()), 8, 1e-3);
    const auto rep = verify_compatibility(st, 3);
    for (double r : rep.residual) CHECK(r == 0.0);
  }
}

TEST_CASE("eps schedule rule is enforced and logged") {
  auto g = make_grid(9, 16);
  DirichletSolver solver(g, MetricData::identity(g));
  const auto jet = jet_from_potential(testing::bump_potential(*g, 0.02),
                                      testing::default_h0(*g), 5, solver);
  const auto out = assemble_formal_solution(jet, jet.V0, solver, 0.03, 13);
  REQUIRE(out.eps_h.size() == static_cast<size_t>(jet.m + 1));
  for (int l = 0; l <= jet.m; ++l) {
    const double nrm = jet.h_levels[l].cwiseAbs().maxCoeff();
    CHECK((nrm + 1.0) * out.eps_h[l] <= 0.5 + 1e-12);
  }
}

TEST_CASE("jet JSON export") {
  auto g = make_grid(7, 12);
  DirichletSolver solver(g, MetricData::identity(g));
  const auto jet = jet_from_potential(testing::bump_potential(*g, 0.01),
                                      testing::default_h0(*g), 3, solver);
  const std::string doc = jet_to_json(jet);
  CHECK(doc.find("\"m\":3") != std::string::npos);
  CHECK(doc.find("provenance") != std::string::npos);
}

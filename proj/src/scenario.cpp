#include "fbeuler/scenario.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fbeuler/calculus.hpp"
#include "fbeuler/errors.hpp"
#include "fbeuler/euler.hpp"
#include "fbeuler/initial_data.hpp"
#include "fbeuler/json_io.hpp"
#include "fbeuler/nash_moser.hpp"
#include "fbeuler/rng.hpp"
#include "fbeuler/smoothing.hpp"
#include "fbeuler/wave.hpp"

namespace fbeuler {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

const std::vector<std::string>& ScenarioConfig::allowed_scenarios() {
  static const std::vector<std::string> v = {
      "check-operators", "solve-enthalpy", "linearize",    "invert",
      "nash-moser",      "gen-data",       "smooth-axioms"};
  return v;
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void validate_config(const ScenarioConfig& cfg) {
  std::vector<std::string> errors;
  bool ok = false;
  for (const auto& s : ScenarioConfig::allowed_scenarios())
    if (s == cfg.scenario) ok = true;
  if (!ok) {
    std::string msg = "unknown scenario '" + cfg.scenario + "'; allowed:";
    for (const auto& s : ScenarioConfig::allowed_scenarios()) msg += " " + s;
    errors.push_back(msg);
  }
  if (cfg.n != 2) errors.push_back("n must be 2 (acceptance dimension)");
  if (cfg.T > 1.0) errors.push_back("T must satisfy T <= 1");
  if (!(cfg.dt > 0.0)) errors.push_back("dt must be positive");
  if (cfg.n_radial < 3) errors.push_back("n_radial must be >= 3");
  if (cfg.n_angular < 4 || cfg.n_angular % 2 != 0)
    errors.push_back("n_angular must be even and >= 4");
  if (cfg.e_function != "linear" && cfg.e_function != "tanh")
    errors.push_back("e_function must be 'linear' or 'tanh'");
  if (!(cfg.e_coefficient > 0.0)) errors.push_back("e coefficient must be positive");
  if (!errors.empty()) {
    std::string all;
    for (const auto& e : errors) all += (all.empty() ? "" : "; ") + e;
    throw ConfigInvalid(all);
  }
}

ScenarioConfig config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("scenario", cfg.scenario);
  get("n", cfg.n);
  get("n_radial", cfg.n_radial);
  get("n_angular", cfg.n_angular);
  get("T", cfg.T);
  get("dt", cfg.dt);
  get("e_function", cfg.e_function);
  get("e_coefficient", cfg.e_coefficient);
  get("c0_target", cfg.c0_target);
  get("c1_target", cfg.c1_target);
  get("seed", cfg.seed);
  get("out_dir", cfg.out_dir);
  get("toy", cfg.toy);
  get("jet_order", cfg.jet_order);
  validate_config(cfg);
  return cfg;
}

ScenarioConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("config file does not exist: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  out << std::setprecision(17);
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
  }
  if (!out) throw IoFailure("write failed for " + path);
}

namespace {

EnthalpyLaw law_from(const ScenarioConfig& cfg) {
  if (cfg.e_function == "linear") return EnthalpyLaw::linear_law(cfg.e_coefficient);
  EnthalpyLaw law;
  law.linear = false;
  const double c = cfg.e_coefficient;
  law.e = [c](double h) { return c * h + 0.1 * std::tanh(h); };
  law.de = [c](double h) {
    const double t = std::tanh(h);
    return c + 0.1 * (1.0 - t * t);
  };
  law.d2e = [](double h) {
    const double t = std::tanh(h);
    return -0.2 * t * (1.0 - t * t);
  };
  return law;
}

MatrixXd random_rough_vector(const PolarGrid& g, CounterRng& rng) {
  MatrixXd U(g.n_nodes(), 2);
  for (int p = 0; p < g.n_nodes(); ++p)
    for (int c = 0; c < 2; ++c) U(p, c) = rng.normal();
  return U;
}

VectorXd default_h0(const PolarGrid& g) {
  VectorXd h(g.n_nodes());
  for (int p = 0; p < g.n_nodes(); ++p) {
    const double r = g.radius(p);
    h[p] = 0.5 * (1.0 - r * r);
  }
  return h;
}

VectorXd default_phi(const PolarGrid& g, double amp) {
  VectorXd phi(g.n_nodes());
  for (int p = 0; p < g.n_nodes(); ++p) {
    const double x = g.nodes()(p, 0), y = g.nodes()(p, 1);
    const double w = 1.0 - x * x - y * y;
    phi[p] = amp * w * w * (1.0 + 0.3 * x - 0.2 * y);
  }
  return phi;
}

// near-equilibrium trajectory from the compatibility machinery
LagrangianState scenario_state(const ScenarioConfig& cfg,
                               const DirichletSolver& solver, double v_amp) {
  const auto jet = jet_from_potential(default_phi(solver.grid(), v_amp),
                                      default_h0(solver.grid()), cfg.jet_order,
                                      solver);
  const int nt = std::max(6, static_cast<int>(std::round(cfg.T / cfg.dt)) + 1);
  return assemble_formal_solution(jet, jet.V0, solver, cfg.T, nt).state;
}

int scenario_check_operators(const ScenarioConfig& cfg, const fs::path& dir) {
  auto grid = make_grid(cfg.n_radial, cfg.n_angular);
  MetricData m = MetricData::identity(grid);
  DirichletSolver solver(grid, m);
  std::vector<std::vector<double>> rows;  // id, value, threshold, pass
  int fails = 0;
  auto check = [&](double id, double value, double threshold) {
    const bool ok = value <= threshold;
    rows.push_back({id, value, threshold, ok ? 1.0 : 0.0});
    if (!ok) ++fails;
  };
  double worst_p2 = 0, worst_norm = 0, worst_orth = 0;
  for (int i = 0; i < 64; ++i) {
    CounterRng rng(cfg.seed, "check-operators", i);
    const MatrixXd U = random_rough_vector(*grid, rng);
    const MatrixXd PU = solver.project_divfree(U);
    const MatrixXd P2U = solver.project_divfree(PU);
    const double nu = solver.norm(U);
    worst_p2 = std::max(worst_p2, solver.norm(P2U - PU) / nu);
    worst_norm = std::max(worst_norm, solver.norm(PU) / nu - 1.0);
    worst_orth = std::max(worst_orth, std::abs(solver.inner(PU, U - PU)) / (nu * nu));
  }
  check(1, worst_p2, 1e-8);
  check(2, worst_norm, 1e-8);
  check(3, worst_orth, 1e-8);
  // normal-operator symmetry on projected fields
  const VectorXd h = default_h0(*grid);
  {
    CounterRng rng(cfg.seed, "check-operators", 1001);
    const MatrixXd U = solver.project_divfree(random_rough_vector(*grid, rng));
    const MatrixXd W = solver.project_divfree(random_rough_vector(*grid, rng));
    const double s1 = solver.inner(U, solver.normal_operator(h, W));
    const double s2 = solver.inner(W, solver.normal_operator(h, U));
    check(4, std::abs(s1 - s2) / (solver.norm(U) * solver.norm(W)), 1e-6);
    const auto ray = rayleigh_extremes(solver, h, 120, cfg.seed);
    check(5, -ray.lambda_min, 1e-6);
    const MatrixXd GW = solver.identity_operator(W);
    check(6, solver.norm(GW - W) / solver.norm(W), 1e-7);
  }
  write_csv((dir / "operator_checks.csv").string(),
            {"check_id", "value", "threshold", "pass"}, rows);
  return fails == 0 ? 0 : 1;
}

int scenario_solve_enthalpy(const ScenarioConfig& cfg, const fs::path& dir) {
  auto grid = make_grid(cfg.n_radial, cfg.n_angular);
  DirichletSolver solver(grid, MetricData::identity(grid));
  LagrangianState st = scenario_state(cfg, solver, 0.01);
  MetricSeries ms = build_metric_series(st);
  const EnthalpyLaw law = law_from(cfg);
  VectorXd h1 = fd_time_deriv_at_start(st.h, st.dt(), 1, 3);
  auto res = solve_enthalpy(ms, st.v, law, st.h[0], h1.cwiseQuotient(law.de_of(st.h[0])));
  st.h = res.h;
  save_state(st, (dir / "trajectory.json").string());
  std::vector<VectorXd> eprime(st.n_times());
  for (int t = 0; t < st.n_times(); ++t) eprime[t] = law.de_of(res.h[t]);
  const MatrixXd E = wave_energy(ms, res.h, eprime, 3);
  std::vector<std::vector<double>> rows;
  for (int t = 0; t < st.n_times(); ++t)
    rows.push_back({st.t_nodes[t], E(t, 0), E(t, 1), E(t, 2)});
  write_csv((dir / "energy.csv").string(), {"t", "E_1", "E_2", "E_3"}, rows);
  return res.condition_lost ? 1 : 0;
}

int scenario_linearize(const ScenarioConfig& cfg, const fs::path& dir) {
  auto grid = make_grid(9, 16);
  DirichletSolver solver(grid, MetricData::identity(grid));
  ScenarioConfig c2 = cfg;
  c2.dt = 4e-3;
  c2.T = 0.06;
  LagrangianState st = scenario_state(c2, solver, 0.01);
  EnthalpyLaw law = EnthalpyLaw::linear_law(cfg.e_coefficient);
  VectorXd h1 = fd_time_deriv_at_start(st.h, st.dt(), 1, 3);
  EulerWorkspace ws = make_euler_workspace(grid, st.t_nodes, st.x, law, st.h[0],
                                           h1 / law.c, false);
  const int nt = ws.n_times();
  std::vector<MatrixXd> dx(nt);
  for (int t = 0; t < nt; ++t) {
    const double s = st.t_nodes[t] / st.t_nodes[nt - 1];
    dx[t].resize(grid->n_nodes(), 2);
    for (int p = 0; p < grid->n_nodes(); ++p) {
      const double y1 = grid->nodes()(p, 0), y2 = grid->nodes()(p, 1);
      dx[t](p, 0) = s * s * (0.5 + y1 * y2);
      dx[t](p, 1) = s * s * (0.3 * y1 * y1 - y2);
    }
  }
  const auto lin = linearized_apply(ws, dx);
  std::vector<std::vector<double>> rows;
  double prev = 0;
  int fails = 0;
  for (double eps : {1e-3, 5e-4}) {
    std::vector<MatrixXd> xp(nt), xm(nt);
    for (int t = 0; t < nt; ++t) {
      xp[t] = st.x[t] + eps * dx[t];
      xm[t] = st.x[t] - eps * dx[t];
    }
    EulerWorkspace wp = make_euler_workspace(grid, st.t_nodes, xp, law, st.h[0],
                                             h1 / law.c, false);
    EulerWorkspace wm = make_euler_workspace(grid, st.t_nodes, xm, law, st.h[0],
                                             h1 / law.c, false);
    const auto pp = euler_residual(wp);
    const auto pm = euler_residual(wm);
    double defect = 0;
    for (int t = 0; t < nt; ++t)
      defect = std::max(defect,
                        ((pp[t] - pm[t]) / (2 * eps) - lin[t]).cwiseAbs().maxCoeff());
    rows.push_back({eps, defect});
    if (prev > 0) {
      const double ratio = prev / defect;
      rows.push_back({0.0, ratio});
      if (ratio < 3.6 || ratio > 4.4) ++fails;
    }
    prev = defect;
  }
  write_csv((dir / "fd_check.csv").string(), {"eps", "defect_or_ratio"}, rows);
  return fails == 0 ? 0 : 1;
}

int scenario_invert(const ScenarioConfig& cfg, const fs::path& dir) {
  auto grid = make_grid(8, 8);
  DirichletSolver solver(grid, MetricData::identity(grid));
  ScenarioConfig c2 = cfg;
  c2.dt = 4e-3;
  c2.T = 0.06;
  LagrangianState st = scenario_state(c2, solver, 0.006);
  EnthalpyLaw law = EnthalpyLaw::linear_law(1.0);
  VectorXd h1 = fd_time_deriv_at_start(st.h, st.dt(), 1, 3);
  EulerWorkspace ws =
      make_euler_workspace(grid, st.t_nodes, st.x, law, st.h[0], h1, true);
  const int nt = ws.n_times();
  const int nn = grid->n_nodes();
  std::vector<MatrixXd> F(nt);
  const double T = st.t_nodes[nt - 1];
  for (int t = 0; t < nt; ++t) {
    const double s = st.t_nodes[t] / T;
    const double env = s * s * s * s;
    F[t].resize(nn, 2);
    for (int p = 0; p < nn; ++p) {
      const double y1 = grid->nodes()(p, 0), y2 = grid->nodes()(p, 1);
      F[t](p, 0) = env * (0.3 + 0.5 * y1 - 0.2 * y2 * y2);
      F[t](p, 1) = env * (-0.1 + 0.4 * y1 * y2);
    }
  }
  InversionOptions stro;
  stro.mode = InversionMode::Structural;
  stro.max_outer = 40;
  const auto str = invert_linearized(ws, F, stro);
  InversionOptions oro;
  oro.mode = InversionMode::Oracle;
  const auto orr = invert_linearized(ws, F, oro);
  double diff = 0, scale = 1e-300;
  for (int t = 0; t < nt; ++t) {
    diff = std::max(diff, (str.dx[t] - orr.dx[t]).cwiseAbs().maxCoeff());
    scale = std::max(scale, orr.dx[t].cwiseAbs().maxCoeff());
  }
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < str.residual_history.size(); ++i)
    rows.push_back({static_cast<double>(i), str.residual_history[i]});
  write_csv((dir / "inversion_history.csv").string(), {"iteration", "residual"},
            rows);
  write_csv((dir / "inversion_summary.csv").string(),
            {"structural_residual", "oracle_residual", "relative_difference"},
            {{str.residual_rel, orr.residual_rel, diff / scale}});
  return (diff / scale <= 1e-6 && orr.residual_rel <= 1e-6 &&
          str.residual_rel <= 1e-3)
             ? 0
             : 1;
}

int scenario_nash_moser(const ScenarioConfig& cfg, const fs::path& dir) {
  NashMoserParams params;
  params.theta0 = 1.0;
  params.max_iters = 30;
  NashMoserResult result;
  if (cfg.toy == "quadratic") {
    auto p = quadratic_toy();
    VectorXd f = VectorXd::Constant(1, 0.01);
    result = nash_moser_run(p, f, params);
  } else if (cfg.toy == "dyadic") {
    auto p = dyadic_quadratic_toy(10);
    params.alpha = 2.5;
    // the dyadic toy tracks its own ladder; small alpha keeps the spectrum
    // resolvable, so bypass the PDE-scale validation
    params.max_iters = 10;
    VectorXd f(10);
    for (int j = 0; j < 10; ++j) f[j] = 1e-3 * std::pow(2.0, -3.5 * j);
    params.delta = 0.2;
    // run update machinery directly
    NashMoserProblem prob = p;
    NashMoserParams pp = params;
    // note: validate() is for the PDE ledger; the toy uses its own exponents
    result.delta_used = pp.delta;
    VectorXd u = VectorXd::Zero(prob.dim);
    std::vector<VectorXd> e_history;
    for (int i = 0; i < pp.max_iters; ++i) {
      const double theta_i = std::ldexp(1.0, i);
      const VectorXd su = prob.smooth(u, theta_i);
      const VectorXd g = update_g(prob, i, f, e_history, pp);
      const VectorXd du = prob.inverse(su, g);
      const auto [e1, e2] = error_terms(prob, u, su, du);
      e_history.push_back(e1 + e2);
      u += du;
      IterationRecord rec;
      rec.i = i;
      rec.theta = theta_i;
      rec.residual_sup = (prob.phi(u) - f).cwiseAbs().maxCoeff();
      rec.e1 = e1.cwiseAbs().maxCoeff();
      rec.e2 = e2.cwiseAbs().maxCoeff();
      result.trace.push_back(rec);
    }
    result.u = u;
    result.converged = true;
  } else {
    throw ConfigInvalid("unknown toy id '" + cfg.toy + "'");
  }
  std::vector<std::vector<double>> rows;
  for (const auto& rec : result.trace)
    rows.push_back({static_cast<double>(rec.i), rec.theta, rec.residual_sup, rec.e1,
                    rec.e2, rec.telescoping});
  write_csv((dir / "trace.csv").string(),
            {"i", "theta_i", "res_sup", "e1", "e2", "telescoping"}, rows);
  const double target = (cfg.toy == "quadratic") ? 1e-10 : 1e-6;
  return (!result.trace.empty() && result.trace.back().residual_sup <= target) ? 0
                                                                               : 1;
}

int scenario_gen_data(const ScenarioConfig& cfg, const fs::path& dir) {
  auto grid = make_grid(std::min(cfg.n_radial, 17), std::min(cfg.n_angular, 32));
  DirichletSolver solver(grid, MetricData::identity(grid));
  const auto jet = jet_from_potential(default_phi(*grid, 0.01), default_h0(*grid),
                                      cfg.jet_order, solver);
  {
    std::ofstream out(dir / "jet.json");
    out << jet_to_json(jet);
  }
  const auto assembled =
      assemble_formal_solution(jet, jet.V0, solver, cfg.T, 33);
  save_state(assembled.state, (dir / "assembled.json").string());
  const auto rep = verify_compatibility(assembled.state, 4);
  std::vector<std::vector<double>> rows;
  bool ok = true;
  for (size_t k = 0; k < rep.residual.size(); ++k) {
    rows.push_back({static_cast<double>(k), rep.residual[k]});
    if (rep.residual[k] > 1e-6 * std::max(rep.scale, 1.0)) ok = false;
  }
  write_csv((dir / "compatibility.csv").string(), {"k", "boundary_residual"}, rows);
  return ok ? 0 : 1;
}

int scenario_smooth_axioms(const ScenarioConfig& cfg, const fs::path& dir) {
  SmootherConfig sc;
  sc.T = 1.0;
  sc.box.t_lo = -0.2;
  sc.box.t_hi = 1.03;
  sc.box.nt = 1920;
  sc.box.y_lo = -1.03;
  sc.box.y_hi = 1.03;
  sc.box.ny = 32;
  Smoother smoother(sc);
  const auto rows = verify_smoother_axioms(smoother, smoothing_corpus(sc.T));
  std::vector<std::vector<double>> out;
  int fails = 0;
  for (const auto& r : rows) {
    out.push_back({r.a, r.b, r.slope, r.expected, r.constant, r.pass ? 1.0 : 0.0});
    if (!r.pass) ++fails;
  }
  write_csv((dir / "smoother_axioms.csv").string(),
            {"a", "b", "slope", "expected", "constant", "pass"}, out);
  (void)cfg;
  return fails == 0 ? 0 : 1;
}

}  // namespace

int run_scenario(const ScenarioConfig& cfg) {
  validate_config(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  // manifest before heavy work, for crash forensics
  json manifest;
  manifest["scenario"] = cfg.scenario;
  manifest["seed"] = cfg.seed;
  manifest["grid"] = {{"n_radial", cfg.n_radial}, {"n_angular", cfg.n_angular}};
  manifest["T"] = cfg.T;
  manifest["dt"] = cfg.dt;
  manifest["version"] = "fbeuler 1.0";
  manifest["timestamp"] = iso8601_now();
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoFailure("cannot write manifest");
    out << manifest.dump(2);
  }
  int code = 0;
  if (cfg.scenario == "check-operators")
    code = scenario_check_operators(cfg, dir);
  else if (cfg.scenario == "solve-enthalpy")
    code = scenario_solve_enthalpy(cfg, dir);
  else if (cfg.scenario == "linearize")
    code = scenario_linearize(cfg, dir);
  else if (cfg.scenario == "invert")
    code = scenario_invert(cfg, dir);
  else if (cfg.scenario == "nash-moser")
    code = scenario_nash_moser(cfg, dir);
  else if (cfg.scenario == "gen-data")
    code = scenario_gen_data(cfg, dir);
  else if (cfg.scenario == "smooth-axioms")
    code = scenario_smooth_axioms(cfg, dir);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest["wall_time_seconds"] = wall;
  manifest["exit_code"] = code;
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2);
  }
  return code;
}

}  // namespace fbeuler

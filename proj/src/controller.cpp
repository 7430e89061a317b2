#include "ddmpc/controller.hpp"

#include <cmath>
#include <sstream>

#include "ddmpc/csv.hpp"
#include "ddmpc/errors.hpp"

namespace ddmpc {

namespace {

constexpr double kDivergenceLimit = 1e12;

double constraint_margin(const Eigen::VectorXd& v, const SymMatrix& S) {
  if (S.dim() == 0 || S.mat().cwiseAbs().maxCoeff() == 0.0) return 1.0;
  return 1.0 - std::sqrt(std::max(0.0, weighted_norm_sq(v, S)));
}

void record_step(ControllerState& st, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& u, const MpcConfig& cfg,
                 std::optional<double> gamma, double solve_ms,
                 const Certificate& active) {
  StepRecord r;
  r.t = st.step;
  r.mode = st.mode;
  r.gamma = gamma;
  r.V = weighted_norm_sq(x, active.P);
  r.stage_cost = cfg.weights.stage_cost(x, u);
  r.solve_ms = solve_ms;
  r.u = u;
  r.x = x;
  r.margin_u = constraint_margin(u, cfg.constraints.S_u);
  r.margin_x = constraint_margin(x, cfg.constraints.S_x);
  st.history.push_back(std::move(r));
  st.active_certs.push_back(active);
}

Eigen::VectorXd step_impl(ControllerState& st, const Eigen::VectorXd& x_t,
                          const MpcConfig& cfg, bool adaptive,
                          bool freeze_immediately) {
  if (st.mode == Mode::STATIC) {
    const Certificate& cert = *st.frozen;
    Eigen::VectorXd u = cert.F * x_t;
    record_step(st, x_t, u, cfg, std::nullopt, 0.0, cert);
    ++st.step;
    st.prev_x = x_t;
    st.prev_u = u;
    return u;
  }

  if (adaptive && st.step >= 1 && st.prev_x && st.prev_u) {
    bool capped = cfg.max_online_blocks >= 0 &&
                  st.set.online_count() >= cfg.max_online_blocks;
    if (!capped) {
      st.set = st.set.push_online(*st.prev_x, *st.prev_u, x_t);
    }
  }

  SdpProblem prob =
      adaptive ? assemble_adaptive(st.set, x_t, cfg.weights, cfg.constraints,
                                   cfg.c, cfg.solver)
               : assemble_robust(st.set, x_t, cfg.weights, cfg.constraints,
                                 cfg.c, cfg.solver);
  SdpSolution sol = solve(prob, cfg.solver);
  if (sol.status != SolveStatus::OPTIMAL) {
    std::ostringstream why;
    why << "synthesis at step " << st.step << " ended "
        << (sol.status == SolveStatus::INFEASIBLE ? "infeasible" : "without a solution")
        << " (" << sol.message << ", " << sol.iterations << " iterations)";
    if (st.step == 0) throw InitialInfeasible(why.str());
    throw SolverFailed(why.str());
  }
  // No gain is applied without an independent feasibility re-check of the
  // solution it came from.
  VerificationReport audit = verify_solution(prob, sol, cfg.solver.feas_tol);
  if (!audit.pass) {
    std::ostringstream why;
    why << "synthesis at step " << st.step
        << " produced a solution that failed its re-check:\n"
        << audit.text();
    if (st.step == 0) throw InitialInfeasible(why.str());
    throw SolverFailed(why.str());
  }
  Certificate cert = extract_certificate(sol);
  const double theta = cfg.rpi_threshold(st.set);

  Eigen::VectorXd u;
  if (sol.gamma <= theta || freeze_immediately) {
    // Inside the invariance region: freeze the previous step's certificate
    // and stop re-optimizing. At step 0 there is no previous certificate, so
    // the current one is frozen; for the receding schemes that means the
    // invariance hypothesis already held at the start.
    if (st.step == 0 || !st.last_cert) {
      st.frozen = cert;
      st.immediate_freeze = !freeze_immediately;
    } else {
      st.frozen = *st.last_cert;
    }
    st.mode = Mode::STATIC;
    u = st.frozen->F * x_t;
    record_step(st, x_t, u, cfg, sol.gamma, sol.solve_ms, *st.frozen);
  } else {
    u = cert.F * x_t;
    record_step(st, x_t, u, cfg, sol.gamma, sol.solve_ms, cert);
  }
  st.last_cert = cert;
  ++st.step;
  st.prev_x = x_t;
  st.prev_u = u;
  return u;
}

}  // namespace

double MpcConfig::rpi_threshold(const ConsistencySet& set) const {
  const double qmin = min_eigenvalue(weights.Q);
  const double gmin = 1.0 / max_eigenvalue(SymMatrix(set.noise_shape_inv()));
  return c * c / (qmin * gmin);
}

bool StepRecord::operator==(const StepRecord& o) const {
  auto opt_eq = [](const std::optional<double>& a,
                   const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a.has_value() || *a == *b;
  };
  return t == o.t && mode == o.mode && opt_eq(gamma, o.gamma) && V == o.V &&
         stage_cost == o.stage_cost && solve_ms == o.solve_ms && u == o.u &&
         x == o.x && margin_u == o.margin_u && margin_x == o.margin_x;
}

void RunLog::to_csv(const std::string& path) const {
  std::ostringstream out;
  out << "t,mode,gamma,V,stage_cost,solve_ms";
  for (int i = 0; i < m; ++i) out << ",u_" << i;
  for (int i = 0; i < n; ++i) out << ",x_" << i;
  out << ",margin_u,margin_x\n";
  for (const auto& r : rows) {
    out << r.t << "," << (r.mode == Mode::RECEDING ? "RECEDING" : "STATIC")
        << ",";
    if (r.gamma) out << csv::format(*r.gamma);
    out << "," << csv::format(r.V) << "," << csv::format(r.stage_cost) << ","
        << csv::format(r.solve_ms);
    for (int i = 0; i < m; ++i) out << "," << csv::format(r.u(i));
    for (int i = 0; i < n; ++i) out << "," << csv::format(r.x(i));
    out << "," << csv::format(r.margin_u) << "," << csv::format(r.margin_x)
        << "\n";
  }
  csv::write_file(path, out.str());
}

RunLog RunLog::from_csv(const std::string& path) {
  auto lines = csv::read_lines(path);
  if (lines.empty()) throw ConfigError(path + ": empty run log");
  auto header = csv::split(lines[0]);
  int m = 0, n = 0;
  for (const auto& hcell : header) {
    if (hcell.rfind("u_", 0) == 0) ++m;
    if (hcell.rfind("x_", 0) == 0) ++n;
  }
  if (m < 1 || n < 1 || header.size() != static_cast<size_t>(8 + m + n)) {
    throw ConfigError(path + ": malformed run log header");
  }
  RunLog log;
  log.n = n;
  log.m = m;
  for (size_t row = 1; row < lines.size(); ++row) {
    auto cells = csv::split(lines[row]);
    if (cells.size() != header.size()) {
      throw ConfigError(path + ": wrong cell count in row " +
                        std::to_string(row));
    }
    StepRecord r;
    auto need = [&](const std::string& cell, const char* what) {
      auto v = csv::parse_cell(cell, what);
      if (!v) throw ConfigError(path + ": missing " + what);
      return *v;
    };
    r.t = static_cast<int>(need(cells[0], "t"));
    if (cells[1] == "RECEDING") {
      r.mode = Mode::RECEDING;
    } else if (cells[1] == "STATIC") {
      r.mode = Mode::STATIC;
    } else {
      throw ConfigError(path + ": unknown mode '" + cells[1] + "'");
    }
    r.gamma = csv::parse_cell(cells[2], "gamma");
    r.V = need(cells[3], "V");
    r.stage_cost = need(cells[4], "stage_cost");
    r.solve_ms = need(cells[5], "solve_ms");
    r.u = Eigen::VectorXd(m);
    for (int i = 0; i < m; ++i) r.u(i) = need(cells[6 + i], "u");
    r.x = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) r.x(i) = need(cells[6 + m + i], "x");
    r.margin_u = need(cells[6 + m + n], "margin_u");
    r.margin_x = need(cells[7 + m + n], "margin_x");
    log.rows.push_back(std::move(r));
  }
  return log;
}

ControllerState ControllerState::initial(ConsistencySet offline_set) {
  ControllerState st;
  st.set = std::move(offline_set);
  return st;
}

Eigen::VectorXd robust_step(ControllerState& st, const Eigen::VectorXd& x_t,
                            const MpcConfig& cfg) {
  return step_impl(st, x_t, cfg, false, false);
}

Eigen::VectorXd adaptive_step(ControllerState& st, const Eigen::VectorXd& x_t,
                              const MpcConfig& cfg) {
  return step_impl(st, x_t, cfg, true, false);
}

ClosedLoopResult run_closed_loop(const LtiPlant& plant, const MpcConfig& cfg,
                                 Scheme scheme, const Eigen::VectorXd& x0,
                                 int steps, NoiseSampler& noise,
                                 const ConsistencySet& offline_set) {
  if (steps < 0) throw ConfigError("run_closed_loop: negative step count");
  if (x0.size() != plant.n()) {
    throw DimError("run_closed_loop: x0 does not match the plant");
  }
  if (offline_set.n() != plant.n() || offline_set.m() != plant.m()) {
    throw DimError("run_closed_loop: consistency set does not match the plant");
  }
  ControllerState st = ControllerState::initial(offline_set);
  Eigen::VectorXd x = x0;
  for (int t = 0; t < steps; ++t) {
    Eigen::VectorXd u;
    switch (scheme) {
      case Scheme::ROBUST:
        u = step_impl(st, x, cfg, false, false);
        break;
      case Scheme::ADAPTIVE:
        u = step_impl(st, x, cfg, true, false);
        break;
      case Scheme::STATIC_FROM_T0:
        u = step_impl(st, x, cfg, false, t == 0);
        break;
    }
    Eigen::VectorXd w = noise.sample();
    x = plant.A * x + plant.B * u + w;
    if (!x.allFinite() || x.norm() > kDivergenceLimit) {
      throw Diverged("closed loop diverged after step " + std::to_string(t));
    }
  }
  ClosedLoopResult res;
  res.log.n = plant.n();
  res.log.m = plant.m();
  res.log.rows = std::move(st.history);
  res.certs = std::move(st.active_certs);
  st.history.clear();
  st.active_certs.clear();
  res.rpi_entry_step = std::nullopt;
  for (const auto& r : res.log.rows) {
    if (r.mode == Mode::STATIC) {
      res.rpi_entry_step = r.t;
      break;
    }
  }
  res.final_state = std::move(st);
  return res;
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ROBUST:
      return "ROBUST";
    case Scheme::ADAPTIVE:
      return "ADAPTIVE";
    case Scheme::STATIC_FROM_T0:
      return "STATIC_FROM_T0";
  }
  return "UNKNOWN";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "ROBUST") return Scheme::ROBUST;
  if (name == "ADAPTIVE") return Scheme::ADAPTIVE;
  if (name == "STATIC_FROM_T0") return Scheme::STATIC_FROM_T0;
  throw ConfigError("unknown scheme '" + name + "'");
}

}  // namespace ddmpc

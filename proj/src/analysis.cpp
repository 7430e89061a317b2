#include "ddmpc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ddmpc/csv.hpp"
#include "ddmpc/errors.hpp"
#include "ddmpc/kernels.hpp"
#include "ddmpc/rng.hpp"

namespace ddmpc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// lambda_max of (A+BF)' P (A+BF) - P + Q + F' R F, the inequality the
// certificate promises over the whole consistency set.
double contraction_eig(const MatrixXd& A, const MatrixXd& B,
                       const Certificate& cert, const CostWeights& w) {
  MatrixXd Acl = A + B * cert.F;
  MatrixXd expr = Acl.transpose() * cert.P.mat() * Acl - cert.P.mat() +
                  w.Q.mat() + cert.F.transpose() * w.R.mat() * cert.F;
  return max_eigenvalue(expr);
}

}  // namespace

bool AuditReport::pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return true;
}

void AuditReport::add(const std::string& check, double margin,
                      double tolerance) {
  rows.push_back(AuditRow{check, margin, tolerance, margin >= 0.0});
}

void AuditReport::merge(const AuditReport& other) {
  for (const auto& r : other.rows) rows.push_back(r);
}

std::string AuditReport::text() const {
  std::ostringstream out;
  out << title << "\n";
  for (const auto& r : rows) {
    out << (r.pass ? "pass" : "FAIL") << "  " << r.check
        << "  margin=" << csv::format(r.margin)
        << "  tolerance=" << csv::format(r.tolerance) << "\n";
  }
  out << (pass() ? "PASS" : "FAIL") << "\n";
  return out.str();
}

std::string AuditReport::csv() const {
  std::ostringstream out;
  out << "check,margin,tolerance,pass\n";
  for (const auto& r : rows) {
    out << r.check << "," << csv::format(r.margin) << ","
        << csv::format(r.tolerance) << "," << (r.pass ? 1 : 0) << "\n";
  }
  return out.str();
}

NominalRollout nominal_rollout(const MatrixXd& A, const MatrixXd& B,
                               const Certificate& cert,
                               const CostWeights& weights, const VectorXd& x0,
                               double tail_rel, int max_horizon) {
  if (A.rows() != x0.size() || B.rows() != x0.size()) {
    throw DimError("nominal_rollout: model does not match the state");
  }
  MatrixXd Acl = A + B * cert.F;
  NominalRollout out;
  VectorXd x = x0;
  double target = tail_rel * std::max(cert.gamma, 1e-300);
  out.worst_decrease = -kInf;
  double v = weighted_norm_sq(x, cert.P);
  while (out.horizon < max_horizon) {
    out.tail = v;
    if (v <= target) {
      out.tail_ok = true;
      break;
    }
    VectorXd u = cert.F * x;
    double stage = weights.stage_cost(x, u);
    out.cost += stage;
    x = Acl * x;
    double v_next = weighted_norm_sq(x, cert.P);
    out.worst_decrease = std::max(out.worst_decrease, v_next + stage - v);
    v = v_next;
    ++out.horizon;
  }
  out.tail = v;
  if (v <= target) out.tail_ok = true;
  if (out.horizon == 0) out.worst_decrease = 0.0;
  return out;
}

AuditReport verify_certificate(const Certificate& cert,
                               const ConsistencySet& set,
                               const CostWeights& weights, double c,
                               const MatrixXd& A_center,
                               const MatrixXd& B_center, const VectorXd& x_t,
                               const SampleAuditOptions& opt) {
  auto models = set.sample_members(A_center, B_center, opt.samples, opt.seed,
                                   0.0);
  std::vector<double> lmax(models.size(), 0.0);
  kernels::for_each_index(
      static_cast<int>(models.size()), opt.parallel, [&](int i) {
        lmax[i] = contraction_eig(models[i].first, models[i].second, cert,
                                  weights);
      });
  double worst = -kInf;
  for (double v : lmax) worst = std::max(worst, v);

  AuditReport rep;
  rep.title = "certificate soundness (" + std::to_string(models.size()) +
              " sampled models)";
  rep.add("contraction_strict_worst_model", -opt.strictness - worst,
          opt.strictness);
  rep.add("state_weight_below_P",
          min_eigenvalue(MatrixXd(cert.P.mat() - weights.Q.mat())) +
              opt.sandwich_tol,
          opt.sandwich_tol);
  rep.add("P_below_c",
          opt.sandwich_tol -
              max_eigenvalue(MatrixXd(
                  cert.P.mat() -
                  c * MatrixXd::Identity(cert.P.dim(), cert.P.dim()))),
          opt.sandwich_tol);
  rep.add("anchor_value_below_gamma",
          cert.gamma + opt.anchor_tol - weighted_norm_sq(x_t, cert.P),
          opt.anchor_tol);
  return rep;
}

AuditReport verify_cost_bound(const Certificate& cert,
                              const ConsistencySet& set,
                              const CostWeights& weights,
                              const MatrixXd& A_center,
                              const MatrixXd& B_center, const VectorXd& x_t,
                              const SampleAuditOptions& opt) {
  auto models = set.sample_members(A_center, B_center, opt.samples, opt.seed,
                                   0.0);
  std::vector<NominalRollout> rolls(models.size());
  kernels::for_each_index(
      static_cast<int>(models.size()), opt.parallel, [&](int i) {
        rolls[i] = nominal_rollout(models[i].first, models[i].second, cert,
                                   weights, x_t, opt.tail_rel);
      });
  double worst_cost_margin = kInf;
  double worst_decrease = -kInf;
  double worst_tail_margin = kInf;
  for (const auto& r : rolls) {
    worst_cost_margin =
        std::min(worst_cost_margin, cert.gamma + opt.cost_tol - r.cost);
    worst_decrease = std::max(worst_decrease, r.worst_decrease);
    worst_tail_margin =
        std::min(worst_tail_margin, opt.tail_rel * cert.gamma - r.tail);
  }
  double decrease_tol = 1e-9 * std::max(1.0, cert.gamma);

  AuditReport rep;
  rep.title = "worst-case cost bound (" + std::to_string(models.size()) +
              " sampled models)";
  rep.add("rollout_cost_below_gamma", worst_cost_margin, opt.cost_tol);
  rep.add("rollout_value_decrease", decrease_tol - worst_decrease,
          decrease_tol);
  rep.add("rollout_tail_vanishes", worst_tail_margin, 0.0);
  return rep;
}

AuditReport verify_sprocedure_constraints(const Certificate& cert,
                                          const ConstraintSet& constraints,
                                          int samples, std::uint64_t seed,
                                          double tol) {
  const int n = cert.P.dim();
  MatrixXd P_half = sqrt_factor(cert.P);
  Eigen::LLT<MatrixXd> llt(P_half);  // P_half is SPD since P is
  if (llt.info() != Eigen::Success) {
    throw NotPsd("verify_sprocedure_constraints: P is not positive definite");
  }
  Rng rng(seed);
  double worst_u = kInf;
  double worst_x = kInf;
  for (int k = 0; k < samples; ++k) {
    VectorXd dir(n);
    double norm = 0.0;
    do {
      for (int i = 0; i < n; ++i) dir(i) = rng.normal();
      norm = dir.norm();
    } while (norm < 1e-300);
    dir /= norm;
    VectorXd x = std::sqrt(cert.gamma) * llt.solve(dir);
    VectorXd u = cert.F * x;
    worst_u = std::min(
        worst_u, 1.0 - std::sqrt(weighted_norm_sq(u, constraints.S_u)));
    if (constraints.state_constrained()) {
      worst_x = std::min(
          worst_x, 1.0 - std::sqrt(weighted_norm_sq(x, constraints.S_x)));
    }
  }
  if (!constraints.state_constrained()) worst_x = 1.0;

  AuditReport rep;
  rep.title = "constraint certificates on the value-level set (" +
              std::to_string(samples) + " boundary states)";
  rep.add("boundary_input_within_limits", worst_u + tol, tol);
  rep.add("boundary_state_within_limits", worst_x + tol, tol);
  rep.add("input_shape_inequality",
          min_eigenvalue(MatrixXd(cert.H.mat() -
                                  cert.L.transpose() * constraints.S_u.mat() *
                                      cert.L)) +
              kStrictMargin,
          kStrictMargin);
  double state_shape = 1.0;
  if (constraints.state_constrained()) {
    state_shape = min_eigenvalue(MatrixXd(
                      cert.H.mat() - cert.H.mat() * constraints.S_x.mat() *
                                         cert.H.mat())) +
                  kStrictMargin;
  }
  rep.add("state_shape_inequality", state_shape, kStrictMargin);
  return rep;
}

LqrSolution lqr_oracle(const MatrixXd& A, const MatrixXd& B,
                       const CostWeights& weights, double step_tol,
                       int max_iter) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || weights.Q.dim() != n ||
      weights.R.dim() != m) {
    throw DimError("lqr_oracle: inconsistent shapes");
  }
  MatrixXd P = weights.Q.mat();
  LqrSolution out;
  for (int it = 0; it < max_iter; ++it) {
    MatrixXd BtP = B.transpose() * P;
    MatrixXd gain_den = weights.R.mat() + BtP * B;
    Eigen::LLT<MatrixXd> llt(gain_den);
    if (llt.info() != Eigen::Success) {
      throw NotStabilizable("lqr_oracle: R + B'PB lost definiteness");
    }
    MatrixXd K = llt.solve(BtP * A);  // u = -K x
    MatrixXd Pn = weights.Q.mat() + A.transpose() * P * A -
                  A.transpose() * P * B * K;
    Pn = 0.5 * (Pn + Pn.transpose()).eval();
    double step = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (!P.allFinite() || P.cwiseAbs().maxCoeff() > 1e16) {
      throw NotStabilizable("lqr_oracle: Riccati iteration diverged");
    }
    if (step <= step_tol) {
      out.P = SymMatrix(P);
      out.F = -K;
      out.iterations = it + 1;
      return out;
    }
  }
  throw NotStabilizable("lqr_oracle: no convergence within iteration budget");
}

Metrics closed_loop_metrics(const RunLog& log) {
  Metrics m;
  m.worst_margin = kInf;
  int solved = 0;
  double ms = 0.0;
  for (const auto& r : log.rows) {
    m.total_cost += r.stage_cost;
    if (r.gamma) {
      ++solved;
      ms += r.solve_ms;
    }
    m.worst_margin = std::min({m.worst_margin, r.margin_u, r.margin_x});
    if (!m.rpi_entry_step && r.mode == Mode::STATIC) {
      m.rpi_entry_step = r.t;
    }
  }
  if (solved > 0) m.mean_solve_ms = ms / solved;
  if (log.rows.empty()) m.worst_margin = 0.0;
  return m;
}

AuditReport audit_closed_loop(const RunLog& log,
                              const std::vector<Certificate>& certs,
                              const MpcConfig& cfg, double theta, double tol) {
  if (certs.size() != log.rows.size()) {
    throw DimError("audit_closed_loop: one certificate per logged step needed");
  }
  AuditReport rep;
  rep.title = "closed-loop guarantees (" + std::to_string(log.rows.size()) +
              " steps)";
  const double rho = 1.0 - min_eigenvalue(cfg.weights.Q) / cfg.c;

  double feas = 1.0;
  bool seen_static = false;
  double terminal = 1.0;
  double value_consistency = kInf;
  double margin_consistency = kInf;
  double prior_cert_margin = kInf;
  double reopt_margin = kInf;
  double rpi_margin = kInf;
  double input_margin = kInf;
  double state_margin = kInf;

  for (size_t i = 0; i < log.rows.size(); ++i) {
    const StepRecord& r = log.rows[i];
    if (r.mode == Mode::RECEDING) {
      if (seen_static) terminal = -1.0;
      if (!r.gamma) feas = -1.0;
    } else {
      seen_static = true;
    }
    double v = weighted_norm_sq(r.x, certs[i].P);
    value_consistency =
        std::min(value_consistency, 1e-6 * (1.0 + std::abs(r.V)) -
                                        std::abs(v - r.V));
    double mu = 1.0 - std::sqrt(std::max(0.0, weighted_norm_sq(r.u, cfg.constraints.S_u)));
    double mx = cfg.constraints.state_constrained()
                    ? 1.0 - std::sqrt(std::max(0.0, weighted_norm_sq(r.x, cfg.constraints.S_x)))
                    : 1.0;
    margin_consistency = std::min(
        margin_consistency,
        1e-9 - std::max(std::abs(mu - r.margin_u), std::abs(mx - r.margin_x)));
    input_margin = std::min(input_margin, mu + tol);
    state_margin = std::min(state_margin, mx + tol);
    if (r.mode == Mode::STATIC) {
      rpi_margin = std::min(rpi_margin, theta + tol - v);
    }
    if (r.mode == Mode::RECEDING && i + 1 < log.rows.size()) {
      const StepRecord& next = log.rows[i + 1];
      double v_next_prior = weighted_norm_sq(next.x, certs[i].P);
      prior_cert_margin =
          std::min(prior_cert_margin,
                   rho * (r.V - theta) + tol - (v_next_prior - theta));
      if (next.mode == Mode::RECEDING) {
        reopt_margin = std::min(
            reopt_margin, rho * (r.V - theta) + tol - (next.V - theta));
      }
    }
  }

  if (log.rows.empty()) {
    value_consistency = margin_consistency = prior_cert_margin = reopt_margin =
        rpi_margin = input_margin = state_margin = 0.0;
  } else {
    auto finite_or = [](double v, double fallback) {
      return v == kInf ? fallback : v;
    };
    prior_cert_margin = finite_or(prior_cert_margin, 0.0);
    reopt_margin = finite_or(reopt_margin, 0.0);
    rpi_margin = finite_or(rpi_margin, 0.0);
  }

  rep.add("recursive_feasibility", feas, 0.0);
  rep.add("logged_values_match_certificates", value_consistency, 1e-6);
  rep.add("logged_margins_match_states", margin_consistency, 1e-9);
  rep.add("value_decrease_prior_certificate", prior_cert_margin, tol);
  rep.add("value_decrease_across_reoptimization", reopt_margin, tol);
  rep.add("invariance_after_freeze", rpi_margin, tol);
  rep.add("static_mode_is_terminal", terminal, 0.0);
  rep.add("input_constraint_margins", input_margin, tol);
  rep.add("state_constraint_margins", state_margin, tol);
  return rep;
}

std::vector<Certificate> replay_certificates(const RunLog& log,
                                             const ConsistencySet& offline_set,
                                             const MpcConfig& cfg,
                                             Scheme scheme) {
  std::vector<Certificate> certs;
  certs.reserve(log.rows.size());
  ConsistencySet set = offline_set;
  std::optional<Certificate> last_solved;
  std::optional<Certificate> frozen;
  for (size_t i = 0; i < log.rows.size(); ++i) {
    const StepRecord& r = log.rows[i];
    std::optional<Certificate> solved_here;
    if (r.gamma) {
      if (scheme == Scheme::ADAPTIVE && i >= 1) {
        bool capped = cfg.max_online_blocks >= 0 &&
                      set.online_count() >= cfg.max_online_blocks;
        if (!capped) {
          set = set.push_online(log.rows[i - 1].x, log.rows[i - 1].u, r.x);
        }
      }
      SdpProblem prob =
          scheme == Scheme::ADAPTIVE
              ? assemble_adaptive(set, r.x, cfg.weights, cfg.constraints,
                                  cfg.c, cfg.solver)
              : assemble_robust(set, r.x, cfg.weights, cfg.constraints, cfg.c,
                                cfg.solver);
      SdpSolution sol = solve(prob, cfg.solver);
      if (sol.status != SolveStatus::OPTIMAL) {
        throw SolverFailed("replay_certificates: solve failed at logged step " +
                           std::to_string(r.t) + ": " + sol.message);
      }
      if (!verify_solution(prob, sol, cfg.solver.feas_tol).pass) {
        throw SolverFailed(
            "replay_certificates: re-derived solution failed its re-check at "
            "logged step " +
            std::to_string(r.t));
      }
      solved_here = extract_certificate(sol);
    }
    if (r.mode == Mode::RECEDING) {
      if (!solved_here) {
        throw SolverFailed(
            "replay_certificates: receding step without a logged gamma");
      }
      certs.push_back(*solved_here);
      last_solved = solved_here;
    } else {
      if (!frozen) {
        frozen = last_solved ? last_solved : solved_here;
        if (!frozen) {
          throw SolverFailed(
              "replay_certificates: static step before any synthesis");
        }
      }
      certs.push_back(*frozen);
      if (solved_here) last_solved = solved_here;
    }
  }
  return certs;
}

}  // namespace ddmpc

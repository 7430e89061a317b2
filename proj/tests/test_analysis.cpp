#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "ddmpc/analysis.hpp"
#include "ddmpc/controller.hpp"
#include "ddmpc/errors.hpp"
#include "ddmpc/plant.hpp"

using namespace ddmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Solved {
  Scenario sc;
  DataRecord data;
  ConsistencySet set;
  MpcConfig cfg;
  Certificate cert;
  MatrixXd A_ls, B_ls;

  explicit Solved(double c_override = 0.0) : sc(builtin_scenario("SCALAR")) {
    if (c_override > 0.0) sc.c = c_override;
    MatrixXd U = excitation_inputs(1, sc.T_f, sc.input_low, sc.input_high, 2);
    NoiseSampler noise(sc.plant.G, NoiseKind::UNIFORM_BALL, 3);
    data = simulate(sc.plant, sc.x0, U, noise);
    set = ConsistencySet::build_offline(data, MultiplierMode::FULL_MULTIPLIERS);
    cfg.c = sc.c;
    cfg.weights = sc.weights;
    cfg.constraints = sc.constraints;
    SdpSolution sol = solve(assemble_robust(set, sc.x0, sc.weights,
                                            sc.constraints, sc.c, {}),
                            {});
    REQUIRE(sol.status == SolveStatus::OPTIMAL);
    cert = extract_certificate(sol);
    auto ls = least_squares_model(data);
    A_ls = ls.first;
    B_ls = ls.second;
    REQUIRE(set.is_member(A_ls, B_ls));
  }
};

}  // namespace

TEST_CASE("riccati oracle reproduces the frozen scalar reference") {
  // Independent closed-form values for a = 1.1, b = 0.5, q = 1, r = 0.1.
  CostWeights w = CostWeights::make(
      SymMatrix(MatrixXd::Identity(1, 1)),
      SymMatrix(MatrixXd::Identity(1, 1) * 0.1));
  MatrixXd A(1, 1), B(1, 1);
  A << 1.1;
  B << 0.5;
  LqrSolution lqr = lqr_oracle(A, B, w);
  CHECK(lqr.P(0, 0) == doctest::Approx(1.3749249666086376).epsilon(1e-12));
  CHECK(lqr.F(0, 0) == doctest::Approx(-1.7042043936756253).epsilon(1e-12));
  CHECK(A(0, 0) + B(0, 0) * lqr.F(0, 0) ==
        doctest::Approx(0.24789780316218736).epsilon(1e-10));
}

TEST_CASE("riccati oracle decouples a diagonal system") {
  // For A = diag(a), B = I, Q = R = I, each mode solves
  // p^2 + p (1 - 1 - a^2) - 1 = 0 independently.
  MatrixXd A = MatrixXd::Zero(2, 2);
  A(0, 0) = 0.5;
  A(1, 1) = 0.8;
  CostWeights w = CostWeights::make(SymMatrix(MatrixXd::Identity(2, 2)),
                                    SymMatrix(MatrixXd::Identity(2, 2)));
  LqrSolution lqr = lqr_oracle(A, MatrixXd::Identity(2, 2), w);
  for (int i = 0; i < 2; ++i) {
    double a = A(i, i);
    double p = (a * a + std::sqrt(a * a * a * a + 4.0)) / 2.0;
    CHECK(lqr.P(i, i) == doctest::Approx(p).epsilon(1e-10));
  }
  CHECK(std::abs(lqr.P(0, 1)) < 1e-10);
}

TEST_CASE("riccati oracle rejects an uncontrollable unstable mode") {
  MatrixXd A(1, 1), B(1, 1);
  A << 2.0;
  B << 0.0;
  CostWeights w = CostWeights::make(SymMatrix(MatrixXd::Identity(1, 1)),
                                    SymMatrix(MatrixXd::Identity(1, 1)));
  CHECK_THROWS_AS(lqr_oracle(A, B, w), NotStabilizable);
}

TEST_CASE("nominal rollout matches the geometric closed form") {
  // Acl = 0.5, F = 0: cost from x0 = 1 is sum 0.25^k = 4/3.
  Certificate cert;
  cert.F = MatrixXd::Zero(1, 1);
  cert.P = SymMatrix(MatrixXd::Identity(1, 1) * 2.0);
  cert.gamma = 2.0;
  cert.H = SymMatrix(MatrixXd::Identity(1, 1));
  cert.L = MatrixXd::Zero(1, 1);
  CostWeights w = CostWeights::make(SymMatrix(MatrixXd::Identity(1, 1)),
                                    SymMatrix(MatrixXd::Identity(1, 1)));
  MatrixXd A(1, 1), B(1, 1);
  A << 0.5;
  B << 1.0;
  VectorXd x0(1);
  x0 << 1.0;
  NominalRollout roll = nominal_rollout(A, B, cert, w, x0);
  CHECK(roll.cost == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
  CHECK(roll.tail_ok);
  CHECK(roll.worst_decrease < 0.0);  // V strictly decreases along this loop
  CHECK(roll.tail <= 1e-9 * cert.gamma);
}

TEST_CASE("audit reports render and aggregate") {
  AuditReport rep;
  rep.title = "demo";
  rep.add("good", 0.5, 1e-6);
  CHECK(rep.pass());
  rep.add("bad", -0.1, 1e-6);
  CHECK_FALSE(rep.pass());
  CHECK(rep.text().find("FAIL") != std::string::npos);
  CHECK(rep.csv().find("check,margin,tolerance,pass") == 0);
  AuditReport other;
  other.add("third", 1.0, 0.0);
  rep.merge(other);
  CHECK(rep.rows.size() == 3);
}

TEST_CASE("solved scalar certificate passes every soundness audit") {
  Solved f;
  SampleAuditOptions opt;
  opt.samples = 60;
  AuditReport cert_rep = verify_certificate(f.cert, f.set, f.cfg.weights,
                                            f.cfg.c, f.A_ls, f.B_ls, f.sc.x0,
                                            opt);
  CHECK(cert_rep.pass());
  AuditReport cost_rep = verify_cost_bound(f.cert, f.set, f.cfg.weights,
                                           f.A_ls, f.B_ls, f.sc.x0, opt);
  CHECK(cost_rep.pass());
  AuditReport sproc = verify_sprocedure_constraints(f.cert, f.cfg.constraints,
                                                    200, 5);
  CHECK(sproc.pass());
}

TEST_CASE("corrupted certificates are rejected by the audits") {
  Solved f;
  SampleAuditOptions opt;
  opt.samples = 60;

  Certificate half_p = f.cert;
  half_p.P = SymMatrix(MatrixXd(0.5 * f.cert.P.mat()));
  AuditReport r1 = verify_certificate(half_p, f.set, f.cfg.weights, f.cfg.c,
                                      f.A_ls, f.B_ls, f.sc.x0, opt);
  AuditReport r2 = verify_cost_bound(half_p, f.set, f.cfg.weights, f.A_ls,
                                     f.B_ls, f.sc.x0, opt);
  CHECK_FALSE((r1.pass() && r2.pass()));

  Certificate wild_f = f.cert;
  wild_f.F = 10.0 * f.cert.F;
  AuditReport r3 = verify_certificate(wild_f, f.set, f.cfg.weights, f.cfg.c,
                                      f.A_ls, f.B_ls, f.sc.x0, opt);
  AuditReport r4 = verify_sprocedure_constraints(wild_f, f.cfg.constraints,
                                                 200, 5);
  CHECK_FALSE((r3.pass() && r4.pass()));
}

TEST_CASE("boundary states of the level set respect the constraints") {
  Solved f;
  AuditReport rep = verify_sprocedure_constraints(f.cert, f.cfg.constraints,
                                                  500, 11);
  REQUIRE(rep.pass());
  // The input margin row must be a genuine minimum over draws, not slack.
  bool found = false;
  for (const auto& row : rep.rows) {
    if (row.check == "boundary_input_within_limits") {
      found = true;
      CHECK(row.margin < 1.0 + 1e-6);  // inputs actually approach the limit
    }
  }
  CHECK(found);
}

TEST_CASE("closed-loop audit passes on an honest run and catches tampering") {
  Solved f(500.0);  // freezes mid-run, exercising every audit family
  NoiseSampler noise(f.sc.plant.G, NoiseKind::UNIFORM_BALL, 12);
  ClosedLoopResult res = run_closed_loop(f.sc.plant, f.cfg, Scheme::ROBUST,
                                         f.sc.x0, 20, noise, f.set);
  double theta = f.cfg.rpi_threshold(f.set);
  AuditReport rep = audit_closed_loop(res.log, res.certs, f.cfg, theta);
  CHECK(rep.pass());

  // Tamper with one logged state mid-run.
  RunLog bad = res.log;
  bad.rows[5].x *= 10.0;
  AuditReport rep_bad = audit_closed_loop(bad, res.certs, f.cfg, theta);
  CHECK_FALSE(rep_bad.pass());

  // Tampered stage margin.
  RunLog bad2 = res.log;
  bad2.rows[3].margin_u += 0.5;
  AuditReport rep_bad2 = audit_closed_loop(bad2, res.certs, f.cfg, theta);
  CHECK_FALSE(rep_bad2.pass());
}

TEST_CASE("replayed certificates reproduce the live run") {
  Solved f(500.0);
  NoiseSampler noise(f.sc.plant.G, NoiseKind::UNIFORM_BALL, 13);
  for (Scheme scheme : {Scheme::ROBUST, Scheme::ADAPTIVE,
                        Scheme::STATIC_FROM_T0}) {
    NoiseSampler fresh(f.sc.plant.G, NoiseKind::UNIFORM_BALL, 13);
    ClosedLoopResult res = run_closed_loop(f.sc.plant, f.cfg, scheme, f.sc.x0,
                                           15, fresh, f.set);
    std::vector<Certificate> replay =
        replay_certificates(res.log, f.set, f.cfg, scheme);
    REQUIRE(replay.size() == res.certs.size());
    for (size_t i = 0; i < replay.size(); ++i) {
      CHECK(replay[i].gamma ==
            doctest::Approx(res.certs[i].gamma).epsilon(1e-9));
      CHECK((replay[i].P.mat() - res.certs[i].P.mat()).cwiseAbs().maxCoeff() <
            1e-9 * (1.0 + res.certs[i].P.mat().cwiseAbs().maxCoeff()));
    }
    AuditReport rep = audit_closed_loop(res.log, replay, f.cfg,
                                        f.cfg.rpi_threshold(f.set));
    CHECK(rep.pass());
  }
}

TEST_CASE("metrics summarize a run") {
  Solved f(500.0);
  NoiseSampler noise(f.sc.plant.G, NoiseKind::UNIFORM_BALL, 14);
  ClosedLoopResult res = run_closed_loop(f.sc.plant, f.cfg, Scheme::ROBUST,
                                         f.sc.x0, 15, noise, f.set);
  Metrics m = closed_loop_metrics(res.log);
  double total = 0.0;
  for (const auto& r : res.log.rows) total += r.stage_cost;
  CHECK(m.total_cost == doctest::Approx(total));
  CHECK(m.rpi_entry_step == res.rpi_entry_step);
  CHECK(m.worst_margin <= 1.0);
}

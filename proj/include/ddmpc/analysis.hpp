#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ddmpc/consistency.hpp"
#include "ddmpc/controller.hpp"
#include "ddmpc/numerics.hpp"
#include "ddmpc/sdp.hpp"

namespace ddmpc {

// One audit line. Every check is phrased as "expression <= bound"; margin is
// bound - expression, so nonnegative passes. tolerance records the slack that
// was already folded into the bound.
struct AuditRow {
  std::string check;
  double margin = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct AuditReport {
  std::string title;
  std::vector<AuditRow> rows;

  bool pass() const;
  void add(const std::string& check, double margin, double tolerance);
  void merge(const AuditReport& other);
  std::string text() const;
  std::string csv() const;  // header: check,margin,tolerance,pass
};

// Noise-free rollout x+ = (A + B F) x with the certified value function:
// runs until ||x||_P^2 <= tail_rel * gamma or max_horizon steps.
struct NominalRollout {
  double cost = 0.0;
  int horizon = 0;
  double tail = 0.0;        // ||x_H||_P^2 at the stopping point
  bool tail_ok = false;
  double worst_decrease = 0.0;  // max over k of V(x_{k+1}) + stage_k - V(x_k)
};

NominalRollout nominal_rollout(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B,
                               const Certificate& cert,
                               const CostWeights& weights,
                               const Eigen::VectorXd& x0,
                               double tail_rel = 1e-9,
                               int max_horizon = 200000);

struct SampleAuditOptions {
  int samples = 100;
  std::uint64_t seed = 1;
  double strictness = 1e-9;   // required margin of the contraction inequality
  double sandwich_tol = 1e-8;
  double anchor_tol = 1e-6;
  double cost_tol = 1e-6;
  double tail_rel = 1e-9;
  bool parallel = true;
};

// Soundness of a certificate over the consistency set: samples models around
// the given center (interior and near-boundary), and checks on every sample
// that (A+BF)' P (A+BF) - P + Q + F'RF stays below -strictness, plus the
// global bounds Q <= P, P <= cI, ||x_t||_P^2 <= gamma.
AuditReport verify_certificate(const Certificate& cert,
                               const ConsistencySet& set,
                               const CostWeights& weights, double c,
                               const Eigen::MatrixXd& A_center,
                               const Eigen::MatrixXd& B_center,
                               const Eigen::VectorXd& x_t,
                               const SampleAuditOptions& opt = {});

// Rolls out the nominal closed loop for sampled models and checks the cost
// bound cost <= gamma + cost_tol, the per-step value decrease, and tail decay.
AuditReport verify_cost_bound(const Certificate& cert,
                              const ConsistencySet& set,
                              const CostWeights& weights,
                              const Eigen::MatrixXd& A_center,
                              const Eigen::MatrixXd& B_center,
                              const Eigen::VectorXd& x_t,
                              const SampleAuditOptions& opt = {});

// Samples states on the boundary of {x : ||x||_P^2 = gamma} (whitened
// directions mapped through P^{-1/2}) and checks the input and state
// constraints the certificate promises there.
AuditReport verify_sprocedure_constraints(const Certificate& cert,
                                          const ConstraintSet& constraints,
                                          int samples, std::uint64_t seed,
                                          double tol = 1e-6);

// Discounted-free infinite-horizon LQR via Riccati fixed-point iteration,
// u = F x convention. Throws NotStabilizable when the iteration does not
// settle.
struct LqrSolution {
  SymMatrix P;
  Eigen::MatrixXd F;
  int iterations = 0;
};

LqrSolution lqr_oracle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                       const CostWeights& weights, double step_tol = 1e-12,
                       int max_iter = 1000000);

struct Metrics {
  double total_cost = 0.0;
  double mean_solve_ms = 0.0;  // over steps that ran a synthesis
  std::optional<int> rpi_entry_step;
  double worst_margin = 0.0;
};

Metrics closed_loop_metrics(const RunLog& log);

// Trajectory-level guarantees of one closed-loop run: recursive feasibility,
// the value decrease toward the invariance threshold measured both in the
// prior step's certificate and across re-optimizations, invariance once the
// controller froze, and pointwise constraint satisfaction.
AuditReport audit_closed_loop(const RunLog& log,
                              const std::vector<Certificate>& certs,
                              const MpcConfig& cfg, double theta,
                              double tol = 1e-6);

// Re-derives the per-step certificates of a logged run by replaying its
// states through the synthesis problems (pushing logged transitions when the
// run was adaptive). Lets file-based audits work from the CSV artifacts
// alone. Throws SolverFailed if any replayed solve fails.
std::vector<Certificate> replay_certificates(const RunLog& log,
                                             const ConsistencySet& offline_set,
                                             const MpcConfig& cfg,
                                             Scheme scheme);

}  // namespace ddmpc

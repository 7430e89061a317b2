#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ddmpc/conic.hpp"
#include "ddmpc/consistency.hpp"
#include "ddmpc/numerics.hpp"

namespace ddmpc {

struct SolverOptions {
  double feas_tol = 1e-8;       // absolute, on lambda_min of each block
  double rel_gap = 1e-6;
  double strict_margin = kStrictMargin;  // strict LMIs become <= -margin I
  double gamma_min = 1e-12;     // gamma > 0 becomes gamma >= gamma_min
  int max_iter = 200;
  bool parallel = true;
  bool verbose = false;
};

// Decision variables, in a fixed order: gamma, the upper triangle of H
// (column major), L row major, then the offline multipliers tau and online
// multipliers delta.
struct VariableLayout {
  int n = 0;
  int m = 0;
  int n_tau = 0;
  int n_delta = 0;

  int gamma() const { return 0; }
  int h(int i, int j) const;  // requires i <= j
  int l(int r, int c) const;
  int tau(int k) const;
  int delta(int k) const;
  int count() const;
  std::string name(int idx) const;
};

// One synthesis problem instance: minimize gamma subject to
//  - the anchor ellipsoid containing the current state,
//  - the S-procedure contraction inequality over the consistency set,
//  - nonnegative multipliers,
//  - input and state constraint shaping,
//  - a positive lower bound on gamma.
// Affine in all variables; `blocks` is the executable form handed to the
// conic backend.
struct SdpProblem {
  VariableLayout vars;
  conic::Problem conic;
  Eigen::VectorXd x_t;
  MultiplierMode mode = MultiplierMode::FULL_MULTIPLIERS;
  double c = 0.0;
  double strict_margin = kStrictMargin;
};

using SolveStatus = conic::SolveStatus;

struct SdpSolution {
  SolveStatus status = SolveStatus::NUMERICAL_FAILURE;
  double gamma = 0.0;
  SymMatrix H;
  Eigen::MatrixXd L;
  Eigen::VectorXd tau;
  Eigen::VectorXd delta;
  Eigen::VectorXd raw;
  double max_violation = 0.0;
  double gap = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  double solve_ms = 0.0;
  std::string message;
};

// State-feedback certificate recovered from a solved instance: F = L H^{-1},
// P = gamma H^{-1}. For every model in the consistency set,
// (A+BF)' P (A+BF) - P + Q + F' R F < 0 and the cost from x_t is at most
// ||x_t||_P^2 <= gamma.
struct Certificate {
  Eigen::MatrixXd F;
  SymMatrix P;
  double gamma = 0.0;
  SymMatrix H;
  Eigen::MatrixXd L;
};

// Offline multipliers only. Online blocks present in the set are ignored.
SdpProblem assemble_robust(const ConsistencySet& set, const Eigen::VectorXd& x_t,
                           const CostWeights& weights,
                           const ConstraintSet& constraints, double c,
                           const SolverOptions& opt = {});

// Offline multipliers plus one multiplier per online block.
SdpProblem assemble_adaptive(const ConsistencySet& set,
                             const Eigen::VectorXd& x_t,
                             const CostWeights& weights,
                             const ConstraintSet& constraints, double c,
                             const SolverOptions& opt = {});

SdpSolution solve(const SdpProblem& problem, const SolverOptions& opt = {});

Certificate extract_certificate(const SdpSolution& solution);

struct ConstraintCheck {
  std::string name;
  double min_eig = 0.0;
  bool pass = false;
};

struct VerificationReport {
  std::vector<ConstraintCheck> checks;
  double worst = 0.0;  // most negative block eigenvalue
  bool pass = false;
  std::string text() const;
};

// Process-wide tally of solution re-checks. End-to-end audits use it to show
// that every accepted solution went through verify_solution and none failed.
struct VerificationStats {
  std::uint64_t checks = 0;
  std::uint64_t failures = 0;
};
VerificationStats verification_stats();

// Replays the solution through the stored constraint data, independent of
// the solver path. A block passes when lambda_min >= -10 * feas_tol.
VerificationReport verify_solution(const SdpProblem& problem,
                                   const SdpSolution& solution,
                                   double feas_tol = 1e-8);

// Human-readable layout of the assembled problem: variables, blocks, which
// variables touch which block.
std::string debug_dump(const SdpProblem& problem);

// Second-difference probe: evaluates every block at random points and checks
// the affine identity S(a) + S(b) = 2 S((a+b)/2). Guards the assembly against
// accidental value dependence.
bool validate_affine(const SdpProblem& problem, std::uint64_t seed);

}  // namespace ddmpc

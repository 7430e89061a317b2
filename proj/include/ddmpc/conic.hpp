#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ddmpc::conic {

// One linear matrix inequality block: S_b(y) = constant + sum_k y_{vars[k]} *
// coeffs[k] must be positive semidefinite. Coefficient matrices are symmetric
// and dense; dim 1 covers scalar bounds.
struct BlockLmi {
  std::string name;
  int dim = 0;
  Eigen::MatrixXd constant;
  std::vector<int> vars;
  std::vector<Eigen::MatrixXd> coeffs;
};

// minimize cost' y  subject to  S_b(y) PSD for every block.
struct Problem {
  int num_vars = 0;
  Eigen::VectorXd cost;
  std::vector<BlockLmi> blocks;
};

enum class SolveStatus { OPTIMAL, INFEASIBLE, MAX_ITER, NUMERICAL_FAILURE };

struct Options {
  int max_iter = 200;
  // Absolute bound on -lambda_min(S_b(y)) demanded of a returned OPTIMAL y.
  double feas_tol = 1e-8;
  // Relative objective gap |primal - dual| demanded of a returned OPTIMAL y.
  double rel_gap = 1e-6;
  // Relative dual residual demanded of a returned OPTIMAL y.
  double dual_tol = 1e-8;
  // Once progress stalls at the numerical floor, a candidate that still
  // meets feas_tol and rel_gap exactly is accepted with the dual residual
  // within this factor of dual_tol. Feasibility and gap are never relaxed.
  double stall_dual_relax = 100.0;
  // Normalized certificate quality required to declare infeasibility.
  double infeas_tol = 1e-6;
  double step_frac = 0.99;
  bool parallel = true;
  bool verbose = false;
};

struct Result {
  SolveStatus status = SolveStatus::NUMERICAL_FAILURE;
  Eigen::VectorXd y;
  double objective = 0.0;
  int iterations = 0;
  // max over blocks of max(0, -lambda_min(S_b(y))), measured on the problem
  // as given, not on the internally scaled copy.
  double max_violation = 0.0;
  double gap = 0.0;
  double dual_residual = 0.0;
  std::string message;
};

// Primal-dual path-following method with Nesterov-Todd scaling on the
// homogeneous self-dual embedding, so infeasible problems are detected by
// certificate rather than by iteration cap.
Result solve(const Problem& p, const Options& opt = {});

// True constraint violation of a candidate point, max over blocks.
double max_violation(const Problem& p, const Eigen::VectorXd& y);

// Throws InvalidProblem when shapes are inconsistent, a variable touches no
// block, or data is non-finite.
void validate(const Problem& p);

}  // namespace ddmpc::conic

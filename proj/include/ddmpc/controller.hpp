#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ddmpc/consistency.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/sdp.hpp"

namespace ddmpc {

enum class Scheme { ROBUST, ADAPTIVE, STATIC_FROM_T0 };
enum class Mode { RECEDING, STATIC };

struct MpcConfig {
  double c = 0.0;
  CostWeights weights;
  ConstraintSet constraints;
  MultiplierMode multiplier_mode = MultiplierMode::FULL_MULTIPLIERS;
  SolverOptions solver;
  // Online samples admitted into the adaptive problem; negative = unlimited.
  int max_online_blocks = -1;

  // Radius of the set the controller treats as robustly invariant:
  // c^2 / (lambda_min(Q) * lambda_min(G)). Recomputed on every call, never
  // cached.
  double rpi_threshold(const ConsistencySet& set) const;
};

struct StepRecord {
  int t = 0;
  Mode mode = Mode::RECEDING;
  std::optional<double> gamma;  // set when a synthesis ran this step
  double V = 0.0;               // ||x||_P^2 in the step's active certificate
  double stage_cost = 0.0;
  double solve_ms = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd x;
  double margin_u = 0.0;  // 1 - ||u||_{S_u}; negative means violated
  double margin_x = 0.0;  // 1 - ||x||_{S_x}; 1 when unconstrained

  bool operator==(const StepRecord& o) const;
};

struct RunLog {
  int n = 0;
  int m = 0;
  std::vector<StepRecord> rows;

  void to_csv(const std::string& path) const;
  static RunLog from_csv(const std::string& path);
  bool operator==(const RunLog& o) const = default;
};

struct ControllerState {
  Mode mode = Mode::RECEDING;
  int step = 0;
  ConsistencySet set;
  std::optional<Certificate> frozen;     // gain applied in STATIC mode
  std::optional<Certificate> last_cert;  // most recent solved certificate
  bool immediate_freeze = false;  // first solve already landed at/below the
                                  // invariance threshold
  std::optional<Eigen::VectorXd> prev_x;
  std::optional<Eigen::VectorXd> prev_u;
  std::vector<StepRecord> history;
  std::vector<Certificate> active_certs;  // per step, the certificate in force

  static ControllerState initial(ConsistencySet offline_set);
};

// One receding-horizon step: solves the synthesis problem at x_t unless the
// controller has switched to the frozen terminal gain, applies the resulting
// input, and appends a record. Throws InitialInfeasible when the very first
// solve fails, SolverFailed on later failures.
Eigen::VectorXd robust_step(ControllerState& st, const Eigen::VectorXd& x_t,
                            const MpcConfig& cfg);

// Same, but pushes the just-observed transition into the consistency set
// before solving (from step 1 on, until the online cap) and keeps one
// multiplier per online sample.
Eigen::VectorXd adaptive_step(ControllerState& st, const Eigen::VectorXd& x_t,
                              const MpcConfig& cfg);

struct ClosedLoopResult {
  RunLog log;
  std::vector<Certificate> certs;  // certificate in force at each step
  ControllerState final_state;
  std::optional<int> rpi_entry_step;  // first step logged STATIC
};

// Runs `steps` closed-loop steps of the chosen scheme against the true plant,
// starting from x0, drawing one disturbance per step. STATIC_FROM_T0 solves
// once at t=0 and applies that gain forever.
ClosedLoopResult run_closed_loop(const LtiPlant& plant, const MpcConfig& cfg,
                                 Scheme scheme, const Eigen::VectorXd& x0,
                                 int steps, NoiseSampler& noise,
                                 const ConsistencySet& offline_set);

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

}  // namespace ddmpc

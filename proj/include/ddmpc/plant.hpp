#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>

#include "ddmpc/numerics.hpp"
#include "ddmpc/rng.hpp"

namespace ddmpc {

// Discrete-time LTI plant x+ = A x + B u + w with the disturbance known only
// through the bound ||w||_G <= 1, G positive definite.
struct LtiPlant {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  SymMatrix G;

  static LtiPlant make(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                       const SymMatrix& G);
  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
};

enum class NoiseKind { UNIFORM_BALL, BOUNDARY, ZERO };

// Draws disturbances from the ellipsoid ||w||_G <= 1. UNIFORM_BALL is uniform
// over the ellipsoid volume, BOUNDARY uniform over its surface image (unit
// G-norm), ZERO is exact zero. Same seed, same sequence, any platform.
class NoiseSampler {
 public:
  NoiseSampler(const SymMatrix& G, NoiseKind kind, std::uint64_t seed);

  Eigen::VectorXd sample();
  NoiseKind kind() const { return kind_; }
  int dim() const { return n_; }

 private:
  int n_;
  NoiseKind kind_;
  Eigen::MatrixXd shape_;  // G^{-1/2}, maps the unit ball onto the ellipsoid
  Rng rng_;
};

// Input-state trajectory of length T: U is m x T, X is n x (T+1). The noise
// that generated it is kept when known so oracles can reconstruct residuals.
struct DataRecord {
  Eigen::MatrixXd U;
  Eigen::MatrixXd X;
  SymMatrix G;
  std::optional<Eigen::MatrixXd> W;  // n x T, realized disturbances

  static DataRecord make(const Eigen::MatrixXd& U, const Eigen::MatrixXd& X,
                         const SymMatrix& G,
                         std::optional<Eigen::MatrixXd> W = std::nullopt);
  int length() const { return static_cast<int>(U.cols()); }
  int n() const { return static_cast<int>(X.rows()); }
  int m() const { return static_cast<int>(U.rows()); }

  // CSV layout: header t,u_0..u_{m-1},x_0..x_{n-1}; one row per step and a
  // final row holding the terminal state with empty input cells. G and noise
  // are not part of the table; callers attach them on load.
  void to_csv(const std::string& path) const;
  static DataRecord from_csv(const std::string& path, const SymMatrix& G);
};

// Runs the plant for inputs U (m x T) from x0, drawing one disturbance per
// step. Throws Diverged if any state leaves the finite range.
DataRecord simulate(const LtiPlant& plant, const Eigen::VectorXd& x0,
                    const Eigen::MatrixXd& U, NoiseSampler& noise);

// A complete experiment description.
struct Scenario {
  std::string name;
  LtiPlant plant;
  CostWeights weights;
  ConstraintSet constraints;
  Eigen::VectorXd x0;
  double c = 0.0;       // cost-shaping constant, > lambda_min(Q)
  int T_f = 0;          // offline samples to collect
  int steps = 0;        // closed-loop horizon
  double input_low = 0.0;
  double input_high = 0.0;  // excitation range for data collection
};

// Built-in scenarios: "SUSPENSION" (quarter-car active suspension, n=4, m=1)
// and "SCALAR" (unstable first-order system). Throws ConfigError for other
// names.
Scenario builtin_scenario(const std::string& name);

// Excitation inputs for data collection, uniform over the scenario range.
Eigen::MatrixXd excitation_inputs(int m, int T, double lo, double hi,
                                  std::uint64_t seed);

// Ordinary least-squares estimate (A, B) from a trajectory; the natural
// interior point of the consistency set when the noise stayed in its ball.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> least_squares_model(
    const DataRecord& data);

// FNV-1a over the canonical text of the plant matrices; lets artifacts name
// the plant they came from without storing it.
std::string plant_fingerprint(const LtiPlant& plant);

}  // namespace ddmpc

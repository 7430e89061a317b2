#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "ddmpc/plant.hpp"

namespace ddmpc {

enum class BlockSource { OFFLINE, ONLINE };

// How offline blocks enter the synthesis problem: one multiplier per sample,
// or all offline blocks summed under a single multiplier.
enum class MultiplierMode { FULL_MULTIPLIERS, COMMON_MULTIPLIER };

// One quadratic matrix inequality [I A B] D [I A B]' >= 0 cut from a single
// transition (x, u, x+). D is (2n+m) x (2n+m); a model (A,B) satisfies the
// block exactly when its one-step residual x+ - A x - B u has G-norm <= 1.
struct QmiBlock {
  SymMatrix D;
  BlockSource source = BlockSource::OFFLINE;
  int sample_index = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd x_next;

  static QmiBlock from_transition(const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& x_next,
                                  const Eigen::MatrixXd& G_inv,
                                  BlockSource source, int sample_index);

  // lambda_min of [I A B] D [I A B]' for a candidate model.
  double evaluate(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const;
};

// Set of models consistent with all recorded transitions: the intersection of
// the per-sample QMIs. Value type; online pushes share the existing blocks.
class ConsistencySet {
 public:
  static ConsistencySet build_offline(
      const DataRecord& data,
      MultiplierMode mode = MultiplierMode::FULL_MULTIPLIERS);

  // New set with one more block from an online transition. The receiver is
  // unchanged.
  ConsistencySet push_online(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& x_next) const;

  bool is_member(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                 double tol = kPsdTol) const;

  int n() const { return n_; }
  int m() const { return m_; }
  MultiplierMode mode() const { return mode_; }
  int size() const { return static_cast<int>(blocks_.size()); }
  int offline_count() const { return offline_count_; }
  int online_count() const { return size() - offline_count_; }
  const QmiBlock& block(int i) const { return *blocks_[i]; }
  const std::vector<std::shared_ptr<const QmiBlock>>& blocks() const {
    return blocks_;
  }

  // Sum of all offline D blocks, for the common-multiplier relaxation.
  SymMatrix summed_offline() const;

  // G^{-1}, the ellipsoid shape the blocks were built with.
  const Eigen::MatrixXd& noise_shape_inv() const { return G_inv_; }

  // Models from the set: even slots are interior (accepted Gaussian
  // perturbations of the center with adaptive step), odd slots sit within 1%
  // of the boundary along a random ray (geometric grow + bisection). Every
  // returned model passes is_member at `tol`. The center must be a member.
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> sample_members(
      const Eigen::MatrixXd& A_center, const Eigen::MatrixXd& B_center,
      int count, std::uint64_t seed, double tol = kPsdTol) const;

  // An empty set: matches no plant (n() == m() == 0) and holds no blocks.
  // Exists so holders like ControllerState have a well-defined initial value.
  ConsistencySet() = default;

 private:
  int n_ = 0;
  int m_ = 0;
  MultiplierMode mode_ = MultiplierMode::FULL_MULTIPLIERS;
  int offline_count_ = 0;
  Eigen::MatrixXd G_inv_;
  std::vector<std::shared_ptr<const QmiBlock>> blocks_;
};

}  // namespace ddmpc

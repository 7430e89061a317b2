#include "ddmpc/consistency.hpp"

#include <cmath>
#include <string>

#include "ddmpc/errors.hpp"
#include "ddmpc/rng.hpp"

namespace ddmpc {

QmiBlock QmiBlock::from_transition(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& x_next,
                                   const Eigen::MatrixXd& G_inv,
                                   BlockSource source, int sample_index) {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(u.size());
  if (x_next.size() != n || G_inv.rows() != n || G_inv.cols() != n) {
    throw DimError("QmiBlock: inconsistent dimensions");
  }
  // V = [I x+; 0 -x; 0 -u], D = V diag(G^{-1}, -1) V'. For any (A,B),
  // [I A B] D [I A B]' = G^{-1} - r r' with r = x+ - A x - B u.
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(2 * n + m, n + 1);
  V.topLeftCorner(n, n).setIdentity();
  V.block(0, n, n, 1) = x_next;
  V.block(n, n, n, 1) = -x;
  V.block(2 * n, n, m, 1) = -u;
  Eigen::MatrixXd core = Eigen::MatrixXd::Zero(n + 1, n + 1);
  core.topLeftCorner(n, n) = G_inv;
  core(n, n) = -1.0;
  QmiBlock b;
  b.D = SymMatrix(V * core * V.transpose());
  b.source = source;
  b.sample_index = sample_index;
  b.x = x;
  b.u = u;
  b.x_next = x_next;
  return b;
}

double QmiBlock::evaluate(const Eigen::MatrixXd& A,
                          const Eigen::MatrixXd& B) const {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(u.size());
  if (A.rows() != n || A.cols() != n || B.rows() != n || B.cols() != m) {
    throw DimError("QmiBlock::evaluate: model has wrong shape");
  }
  Eigen::MatrixXd J(n, 2 * n + m);
  J.leftCols(n).setIdentity();
  J.middleCols(n, n) = A;
  J.rightCols(m) = B;
  return min_eigenvalue(Eigen::MatrixXd(J * D.mat() * J.transpose()));
}

ConsistencySet ConsistencySet::build_offline(const DataRecord& data,
                                             MultiplierMode mode) {
  if (min_eigenvalue(data.G) <= 0.0) {
    throw NotPsd("ConsistencySet: G must be positive definite");
  }
  ConsistencySet set;
  set.n_ = data.n();
  set.m_ = data.m();
  set.mode_ = mode;
  set.G_inv_ = spd_inverse(data.G, "ConsistencySet G");
  const int T = data.length();
  set.blocks_.reserve(T);
  for (int t = 0; t < T; ++t) {
    set.blocks_.push_back(std::make_shared<const QmiBlock>(
        QmiBlock::from_transition(data.X.col(t), data.U.col(t),
                                  data.X.col(t + 1), set.G_inv_,
                                  BlockSource::OFFLINE, t)));
  }
  set.offline_count_ = T;
  return set;
}

ConsistencySet ConsistencySet::push_online(const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& x_next) const {
  if (x.size() != n_ || x_next.size() != n_ || u.size() != m_) {
    throw DimError("push_online: transition has wrong dimensions");
  }
  ConsistencySet out = *this;
  out.blocks_.push_back(std::make_shared<const QmiBlock>(
      QmiBlock::from_transition(x, u, x_next, G_inv_, BlockSource::ONLINE,
                                online_count())));
  return out;
}

bool ConsistencySet::is_member(const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B, double tol) const {
  for (const auto& b : blocks_) {
    if (b->evaluate(A, B) < -tol) return false;
  }
  return true;
}

SymMatrix ConsistencySet::summed_offline() const {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2 * n_ + m_, 2 * n_ + m_);
  for (const auto& b : blocks_) {
    if (b->source == BlockSource::OFFLINE) sum += b->D.mat();
  }
  return SymMatrix(sum);
}

std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>
ConsistencySet::sample_members(const Eigen::MatrixXd& A_center,
                               const Eigen::MatrixXd& B_center, int count,
                               std::uint64_t seed, double tol) const {
  if (!is_member(A_center, B_center, tol)) {
    throw NotInSet("sample_members: center model is not in the set");
  }
  Rng rng(seed);
  std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> out;
  out.reserve(count);

  auto draw_direction = [&]() {
    Eigen::MatrixXd dA(n_, n_), dB(n_, m_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) dA(i, j) = rng.normal();
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j) dB(i, j) = rng.normal();
    double norm = std::sqrt(dA.squaredNorm() + dB.squaredNorm());
    if (norm < 1e-300) norm = 1.0;
    dA /= norm;
    dB /= norm;
    return std::make_pair(dA, dB);
  };

  double scale =
      1.0 + std::sqrt(A_center.squaredNorm() + B_center.squaredNorm());
  double sigma = 0.1 * scale;

  for (int k = 0; k < count; ++k) {
    if (k % 2 == 0) {
      // Interior: Gaussian perturbation, step adapted toward steady accepts.
      bool placed = false;
      for (int trial = 0; trial < 10000 && !placed; ++trial) {
        auto [dA, dB] = draw_direction();
        double r = sigma * std::fabs(rng.normal());
        Eigen::MatrixXd A = A_center + r * dA;
        Eigen::MatrixXd B = B_center + r * dB;
        if (is_member(A, B, tol)) {
          out.emplace_back(std::move(A), std::move(B));
          sigma = std::min(sigma * 1.2, 1e6 * scale);
          placed = true;
        } else {
          sigma = std::max(sigma * 0.7, 1e-13 * scale);
        }
      }
      if (!placed) out.emplace_back(A_center, B_center);
    } else {
      // Boundary: grow along a ray until outside, then shrink the bracket to
      // within 1% and keep the inner endpoint.
      auto [dA, dB] = draw_direction();
      double lo = 0.0;
      double hi = std::max(sigma, 1e-12 * scale);
      bool exited = false;
      for (int g = 0; g < 64; ++g) {
        if (!is_member(A_center + hi * dA, B_center + hi * dB, tol)) {
          exited = true;
          break;
        }
        lo = hi;
        hi *= 2.0;
      }
      if (!exited) {
        // Ray never leaves the set; settle for the farthest member found.
        out.emplace_back(A_center + lo * dA, B_center + lo * dB);
        continue;
      }
      for (int it = 0; it < 80 && (hi - lo) > 0.01 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        if (is_member(A_center + mid * dA, B_center + mid * dB, tol)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      out.emplace_back(A_center + lo * dA, B_center + lo * dB);
    }
  }
  return out;
}

}  // namespace ddmpc

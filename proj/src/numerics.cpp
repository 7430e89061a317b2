#include "ddmpc/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace ddmpc {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidMatrix(std::string(what) + ": non-finite entries");
  }
}

SymMatrix::SymMatrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw DimError("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                   std::to_string(m.cols()));
  }
  require_finite(m, "SymMatrix");
  m_ = 0.5 * (m + m.transpose());
  // Mirror the upper triangle so (i,j) and (j,i) are the same double, not
  // merely close.
  for (int j = 0; j < m_.cols(); ++j) {
    for (int i = 0; i < j; ++i) {
      m_(j, i) = m_(i, j);
    }
  }
}

SymMatrix SymMatrix::identity(int n) {
  return SymMatrix(Eigen::MatrixXd::Identity(n, n));
}

SymMatrix SymMatrix::zero(int n) {
  return SymMatrix(Eigen::MatrixXd::Zero(n, n));
}

SymMatrix SymMatrix::diagonal(const Eigen::VectorXd& d) {
  return SymMatrix(Eigen::MatrixXd(d.asDiagonal()));
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_of(const Eigen::MatrixXd& m,
                                                      bool vectors) {
  require_finite(m, "eigenvalue computation");
  Eigen::MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.compute(s, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw InvalidMatrix("eigenvalue computation failed to converge");
  }
  return es;
}

}  // namespace

double min_eigenvalue(const SymMatrix& m) { return min_eigenvalue(m.mat()); }
double max_eigenvalue(const SymMatrix& m) { return max_eigenvalue(m.mat()); }

double min_eigenvalue(const Eigen::MatrixXd& m) {
  return eig_of(m, false).eigenvalues().minCoeff();
}

double max_eigenvalue(const Eigen::MatrixXd& m) {
  return eig_of(m, false).eigenvalues().maxCoeff();
}

bool is_psd(const SymMatrix& m, double tol) { return is_psd(m.mat(), tol); }

bool is_psd(const Eigen::MatrixXd& m, double tol) {
  return min_eigenvalue(m) >= -tol;
}

bool is_strictly_negative(const Eigen::MatrixXd& m, double margin) {
  return max_eigenvalue(m) <= -margin;
}

Eigen::MatrixXd sqrt_factor(const SymMatrix& m) {
  auto es = eig_of(m.mat(), true);
  Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -kPsdTol) {
    throw NotPsd("sqrt_factor: matrix has eigenvalue " +
                 std::to_string(ev.minCoeff()));
  }
  Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd s =
      es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return SymMatrix(s).mat();
}

double weighted_norm_sq(const Eigen::VectorXd& x, const SymMatrix& w) {
  if (x.size() != w.dim()) {
    throw DimError("weighted_norm_sq: vector of size " +
                   std::to_string(x.size()) + " against " +
                   std::to_string(w.dim()) + "-dim weight");
  }
  require_finite(x, "weighted_norm_sq");
  return x.dot(w.mat() * x);
}

Eigen::MatrixXd spd_inverse(const SymMatrix& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m.mat());
  if (llt.info() != Eigen::Success) {
    throw NotPsd(std::string(what) + ": not positive definite");
  }
  Eigen::MatrixXd inv =
      llt.solve(Eigen::MatrixXd::Identity(m.dim(), m.dim()));
  return SymMatrix(inv).mat();
}

CostWeights CostWeights::make(const SymMatrix& Q, const SymMatrix& R) {
  if (min_eigenvalue(Q) <= 0.0) {
    throw NotPsd("CostWeights: Q must be positive definite");
  }
  if (min_eigenvalue(R) <= 0.0) {
    throw NotPsd("CostWeights: R must be positive definite");
  }
  CostWeights w;
  w.Q = Q;
  w.R = R;
  w.M_Q = sqrt_factor(Q);
  w.M_R = sqrt_factor(R);
  return w;
}

double CostWeights::stage_cost(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) const {
  return weighted_norm_sq(x, Q) + weighted_norm_sq(u, R);
}

ConstraintSet ConstraintSet::make(const SymMatrix& S_u, const SymMatrix& S_x) {
  if (min_eigenvalue(S_u) <= 0.0) {
    throw NotPsd("ConstraintSet: S_u must be positive definite");
  }
  ConstraintSet cs;
  cs.S_u = S_u;
  cs.S_x = S_x;
  if (cs.state_constrained() && min_eigenvalue(S_x) <= 0.0) {
    throw NotPsd(
        "ConstraintSet: S_x must be positive definite or exactly zero");
  }
  return cs;
}

bool ConstraintSet::state_constrained() const {
  return S_x.dim() > 0 && S_x.mat().cwiseAbs().maxCoeff() > 0.0;
}

}  // namespace ddmpc

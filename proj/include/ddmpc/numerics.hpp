#pragma once

#include <Eigen/Dense>

#include "ddmpc/errors.hpp"

namespace ddmpc {

// Default tolerance on eigenvalue checks of "is this PSD".
inline constexpr double kPsdTol = 1e-9;
// Strict matrix inequalities M < 0 are realized as M <= -kStrictMargin * I.
inline constexpr double kStrictMargin = 1e-8;

// Square matrix whose storage is exactly symmetric: entry (i,j) and (j,i)
// are the same double, enforced at construction by mirroring the averaged
// upper triangle. Eliminates the usual drift where A and A' differ in the
// last bits after a chain of products.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Eigen::MatrixXd& m);

  static SymMatrix identity(int n);
  static SymMatrix zero(int n);
  static SymMatrix diagonal(const Eigen::VectorXd& d);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Eigen::MatrixXd m_;
};

// Smallest / largest eigenvalue of a symmetric matrix. Throws InvalidMatrix
// on non-finite entries.
double min_eigenvalue(const SymMatrix& m);
double max_eigenvalue(const SymMatrix& m);
double min_eigenvalue(const Eigen::MatrixXd& m);  // symmetrizes first
double max_eigenvalue(const Eigen::MatrixXd& m);

bool is_psd(const SymMatrix& m, double tol = kPsdTol);
bool is_psd(const Eigen::MatrixXd& m, double tol = kPsdTol);

// lambda_max(M) <= -margin, the executable meaning of M < 0 here.
bool is_strictly_negative(const Eigen::MatrixXd& m, double margin = kStrictMargin);

// Symmetric PSD square root via eigendecomposition: returns S with S*S = M
// and S = S'. Fixed convention; Cholesky is deliberately not used so the
// factor of a diagonal matrix is diagonal. Throws NotPsd if
// lambda_min(M) < -kPsdTol; smaller negative eigenvalues are clamped to 0.
Eigen::MatrixXd sqrt_factor(const SymMatrix& m);

// x' * W * x with shape checking.
double weighted_norm_sq(const Eigen::VectorXd& x, const SymMatrix& w);

// Inverse of a symmetric positive definite matrix. Throws NotPsd when the
// Cholesky factorization fails.
Eigen::MatrixXd spd_inverse(const SymMatrix& m, const char* what);

void require_finite(const Eigen::MatrixXd& m, const char* what);

// Stage-cost weights together with their fixed square-root factors, so the
// quadratic cost can enter linear matrix inequalities as [M_R*L; M_Q*H].
struct CostWeights {
  SymMatrix Q;          // state weight, PD
  SymMatrix R;          // input weight, PD
  Eigen::MatrixXd M_Q;  // sqrt_factor(Q)
  Eigen::MatrixXd M_R;  // sqrt_factor(R)

  static CostWeights make(const SymMatrix& Q, const SymMatrix& R);
  double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

// Ellipsoidal input and state constraints ||u||_{S_u} <= 1, ||x||_{S_x} <= 1.
// S_u must be PD; S_x may be zero (no state constraint) or PD.
struct ConstraintSet {
  SymMatrix S_u;
  SymMatrix S_x;

  static ConstraintSet make(const SymMatrix& S_u, const SymMatrix& S_x);
  bool state_constrained() const;
};

}  // namespace ddmpc

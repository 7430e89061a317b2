#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "ddmpc/errors.hpp"
#include "ddmpc/numerics.hpp"
#include "ddmpc/rng.hpp"

using namespace ddmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_square(int n, Rng& rng) {
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) M(i, j) = rng.normal();
  }
  return M;
}

// Eigenvalues of a symmetric 2x2 from the characteristic polynomial, kept
// separate from the library path on purpose.
std::pair<double, double> eig2(double a, double b, double d) {
  double tr = a + d;
  double det = a * d - b * b;
  double disc = std::sqrt(tr * tr / 4.0 - det);
  return {tr / 2.0 - disc, tr / 2.0 + disc};
}

}  // namespace

TEST_CASE("SymMatrix symmetrizes and mirrors exactly") {
  MatrixXd M(2, 2);
  M << 1.0, 0.3, 0.7, 2.0;
  SymMatrix S(M);
  CHECK(S(0, 1) == S(1, 0));
  CHECK(S(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(S(0, 0) == 1.0);
  CHECK(S.dim() == 2);
}

TEST_CASE("symmetric eigenvalue bounds match the characteristic polynomial") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3),
           d = rng.uniform(-3, 3);
    MatrixXd M(2, 2);
    M << a, b, b, d;
    auto [lo, hi] = eig2(a, b, d);
    CHECK(min_eigenvalue(M) == doctest::Approx(lo).epsilon(1e-9));
    CHECK(max_eigenvalue(M) == doctest::Approx(hi).epsilon(1e-9));
  }
}

TEST_CASE("eigenvalue bound on a pinned 3x3") {
  // Tridiagonal [2 -1; -1 2 -1; -1 2]: eigenvalues 2 - sqrt(2), 2, 2 + sqrt(2).
  MatrixXd M(3, 3);
  M << 2, -1, 0, -1, 2, -1, 0, -1, 2;
  CHECK(min_eigenvalue(M) == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
  CHECK(max_eigenvalue(M) == doctest::Approx(2.0 + std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("min_eigenvalue rejects non-finite input") {
  MatrixXd M = MatrixXd::Zero(2, 2);
  M(0, 0) = std::nan("");
  CHECK_THROWS_AS(min_eigenvalue(M), InvalidMatrix);
}

TEST_CASE("is_psd honors the tolerance boundary") {
  MatrixXd M = MatrixXd::Identity(2, 2);
  M(1, 1) = -0.5e-9;
  CHECK(is_psd(SymMatrix(M)));            // within default 1e-9
  M(1, 1) = -1e-6;
  CHECK_FALSE(is_psd(SymMatrix(M)));
  CHECK(is_psd(SymMatrix(M), 1e-5));
}

TEST_CASE("sqrt_factor squares back and rejects indefinite input") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd R = random_square(3, rng);
    SymMatrix M(MatrixXd(R * R.transpose() + MatrixXd::Identity(3, 3)));
    MatrixXd S = sqrt_factor(M);
    CHECK((S * S - M.mat()).cwiseAbs().maxCoeff() < 1e-10);
  }
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(0, 0) = -1.0;
  CHECK_THROWS_AS(sqrt_factor(SymMatrix(bad)), NotPsd);
  // Tiny negative eigenvalues are rounding noise and get clamped.
  bad(0, 0) = -1e-12;
  MatrixXd S = sqrt_factor(SymMatrix(bad));
  CHECK(S(0, 0) == 0.0);
}

TEST_CASE("spd_inverse round trips and rejects singular matrices") {
  MatrixXd M(2, 2);
  M << 4, 1, 1, 3;
  MatrixXd Minv = spd_inverse(SymMatrix(M), "test");
  CHECK((M * Minv - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  MatrixXd sing = MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(spd_inverse(SymMatrix(sing), "test"), NotPsd);
}

TEST_CASE("weighted_norm_sq agrees with the explicit quadratic form") {
  MatrixXd W(2, 2);
  W << 2, 1, 1, 3;
  VectorXd x(2);
  x << 1, -2;
  // [1 -2] W [1; -2] = 2 - 2 - 2 + 12 = 10
  CHECK(weighted_norm_sq(x, SymMatrix(W)) == doctest::Approx(10.0));
}

TEST_CASE("cost weights demand positive definite Q and R") {
  SymMatrix Q(MatrixXd::Identity(2, 2));
  SymMatrix R(MatrixXd::Identity(1, 1));
  CostWeights w = CostWeights::make(Q, R);
  VectorXd x(2), u(1);
  x << 2, 0;
  u << 3;
  CHECK(w.stage_cost(x, u) == doctest::Approx(13.0));
  CHECK_THROWS_AS(CostWeights::make(SymMatrix(MatrixXd::Zero(2, 2)), R),
                  NotPsd);
}

TEST_CASE("constraint set allows an all-zero state shape") {
  SymMatrix Su(MatrixXd::Identity(1, 1));
  ConstraintSet cs = ConstraintSet::make(Su, SymMatrix(MatrixXd::Zero(2, 2)));
  CHECK_FALSE(cs.state_constrained());
  ConstraintSet with_state =
      ConstraintSet::make(Su, SymMatrix(MatrixXd::Identity(2, 2)));
  CHECK(with_state.state_constrained());
  MatrixXd indef = MatrixXd::Identity(2, 2);
  indef(0, 0) = -1;
  CHECK_THROWS_AS(ConstraintSet::make(Su, SymMatrix(indef)), NotPsd);
}

TEST_CASE("square root weight factors reproduce the stage cost") {
  // M_Q' M_Q = Q must hold for the synthesis blocks to encode the cost.
  MatrixXd Q(2, 2);
  Q << 5, 1, 1, 2;
  CostWeights w = CostWeights::make(SymMatrix(Q),
                                    SymMatrix(MatrixXd::Identity(1, 1) * 0.1));
  CHECK((w.M_Q.transpose() * w.M_Q - Q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((w.M_R.transpose() * w.M_R -
         MatrixXd::Identity(1, 1) * 0.1).cwiseAbs().maxCoeff() < 1e-14);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <vector>

#include "ddmpc/kernels.hpp"
#include "ddmpc/rng.hpp"

using namespace ddmpc;
using Eigen::MatrixXd;
using kernels::BlockLayout;
using kernels::ScaleItem;

namespace {

MatrixXd random_sym(int n, Rng& rng) {
  MatrixXd M(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      M(i, j) = rng.normal();
      M(j, i) = M(i, j);
    }
  }
  return M;
}

}  // namespace

TEST_CASE("svec preserves the trace inner product") {
  Rng rng(2);
  for (int n : {1, 2, 5, 9}) {
    MatrixXd A = random_sym(n, rng);
    MatrixXd B = random_sym(n, rng);
    std::vector<double> va(kernels::svec_len(n)), vb(kernels::svec_len(n));
    kernels::svec_into(A, va.data());
    kernels::svec_into(B, vb.data());
    double dot = 0.0;
    for (size_t i = 0; i < va.size(); ++i) dot += va[i] * vb[i];
    CHECK(dot == doctest::Approx((A * B).trace()).epsilon(1e-12));

    MatrixXd back(n, n);
    kernels::unsvec_into(va.data(), n, back);
    CHECK((back - A).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("svec index layout is column-major upper triangle") {
  MatrixXd A(3, 3);
  A << 1, 2, 4, 2, 3, 5, 4, 5, 6;
  std::vector<double> v(6);
  kernels::svec_into(A, v.data());
  const double r2 = std::sqrt(2.0);
  CHECK(v[0] == 1.0);        // (0,0)
  CHECK(v[1] == 2.0 * r2);   // (0,1)
  CHECK(v[2] == 3.0);        // (1,1)
  CHECK(v[3] == 4.0 * r2);   // (0,2)
  CHECK(v[4] == 5.0 * r2);   // (1,2)
  CHECK(v[5] == 6.0);        // (2,2)
}

TEST_CASE("parallel congruence scaling is bitwise identical to serial") {
  Rng rng(10);
  std::vector<BlockLayout> layout;
  std::vector<MatrixXd> maps;
  int offset = 0;
  for (int dim : {3, 1, 7, 1, 1, 4, 2}) {
    layout.push_back(BlockLayout{dim, offset});
    offset += kernels::svec_len(dim);
    MatrixXd R(dim, dim);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) R(i, j) = rng.normal();
    }
    maps.push_back(R * R.transpose() + MatrixXd::Identity(dim, dim) * 0.1);
  }
  const int cols = 37;
  std::vector<ScaleItem> items;
  for (int b = 0; b < static_cast<int>(layout.size()); ++b) {
    for (int c = 0; c < cols; ++c) items.push_back(ScaleItem{b, c});
  }
  MatrixXd in(offset, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < offset; ++i) in(i, j) = rng.normal();
  }
  MatrixXd out_s = MatrixXd::Zero(offset, cols);
  MatrixXd out_p = MatrixXd::Zero(offset, cols);
  kernels::scale_columns_serial(layout, maps, items, in, out_s);
  kernels::scale_columns_parallel(layout, maps, items, in, out_p);
  CHECK(out_s == out_p);  // bitwise, not approximate

  // Spot-check one block against the direct congruence.
  MatrixXd S(3, 3), expect(3, 3);
  kernels::unsvec_into(in.col(5).data(), 3, S);
  expect = maps[0] * S * maps[0];
  MatrixXd got(3, 3);
  kernels::unsvec_into(out_s.col(5).data(), 3, got);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scaling skips items not listed and leaves zeros") {
  std::vector<BlockLayout> layout{BlockLayout{2, 0}, BlockLayout{2, 3}};
  std::vector<MatrixXd> maps{MatrixXd::Identity(2, 2) * 2.0,
                             MatrixXd::Identity(2, 2) * 3.0};
  std::vector<ScaleItem> items{ScaleItem{0, 0}};  // only block 0, column 0
  MatrixXd in = MatrixXd::Ones(6, 2);
  MatrixXd out = MatrixXd::Zero(6, 2);
  kernels::scale_columns_serial(layout, maps, items, in, out);
  CHECK(out(0, 0) == 4.0);   // 2 * 1 * 2
  CHECK(out(3, 0) == 0.0);   // block 1 untouched
  CHECK(out(0, 1) == 0.0);   // column 1 untouched
}

TEST_CASE("parallel gram product is bitwise identical to serial") {
  Rng rng(20);
  MatrixXd L(83, 29), R(83, 31);
  for (int i = 0; i < L.size(); ++i) L.data()[i] = rng.normal();
  for (int i = 0; i < R.size(); ++i) R.data()[i] = rng.normal();
  MatrixXd out_s(29, 31), out_p(29, 31);
  kernels::gram_columns_serial(L, R, out_s);
  kernels::gram_columns_parallel(L, R, out_p);
  CHECK(out_s == out_p);
  CHECK((out_s - L.transpose() * R).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("for_each_index touches every slot exactly once") {
  for (bool parallel : {false, true}) {
    std::vector<std::atomic<int>> hits(257);
    for (auto& h : hits) h = 0;
    kernels::for_each_index(257, parallel, [&](int i) { hits[i]++; });
    for (auto& h : hits) CHECK(h == 1);
  }
}

#include "ddmpc/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ddmpc/errors.hpp"

namespace ddmpc::kernels {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2 = 0.7071067811865476;

// Shared body so the serial and parallel scale paths are the same code.
inline void scale_one(const BlockLayout& lay, const Eigen::MatrixXd& map,
                      const Eigen::MatrixXd& in, Eigen::MatrixXd& out,
                      int col, Eigen::MatrixXd& S, Eigen::MatrixXd& T) {
  unsvec_into(in.col(col).data() + lay.offset, lay.dim, S);
  T.noalias() = map * S;
  S.noalias() = T * map.transpose();
  svec_into(S, out.col(col).data() + lay.offset);
}
}  // namespace

int svec_len(int dim) { return dim * (dim + 1) / 2; }

void svec_into(const Eigen::MatrixXd& M, double* out) {
  const int d = static_cast<int>(M.rows());
  int k = 0;
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < j; ++i) out[k++] = kSqrt2 * M(i, j);
    out[k++] = M(j, j);
  }
}

void unsvec_into(const double* in, int dim, Eigen::MatrixXd& M) {
  M.resize(dim, dim);
  int k = 0;
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < j; ++i) {
      double v = kInvSqrt2 * in[k++];
      M(i, j) = v;
      M(j, i) = v;
    }
    M(j, j) = in[k++];
  }
}

void scale_columns_serial(const std::vector<BlockLayout>& layout,
                          const std::vector<Eigen::MatrixXd>& maps,
                          const std::vector<ScaleItem>& items,
                          const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
  Eigen::MatrixXd S, T;
  for (const auto& it : items) {
    scale_one(layout[it.block], maps[it.block], in, out, it.col, S, T);
  }
}

void scale_columns_parallel(const std::vector<BlockLayout>& layout,
                            const std::vector<Eigen::MatrixXd>& maps,
                            const std::vector<ScaleItem>& items,
                            const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
#ifdef _OPENMP
  const int count = static_cast<int>(items.size());
#pragma omp parallel
  {
    Eigen::MatrixXd S, T;
#pragma omp for schedule(static)
    for (int k = 0; k < count; ++k) {
      const auto& it = items[k];
      scale_one(layout[it.block], maps[it.block], in, out, it.col, S, T);
    }
  }
#else
  scale_columns_serial(layout, maps, items, in, out);
#endif
}

void gram_columns_serial(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs,
                         Eigen::MatrixXd& out) {
  out.resize(lhs.cols(), rhs.cols());
  for (int j = 0; j < rhs.cols(); ++j) {
    out.col(j).noalias() = lhs.transpose() * rhs.col(j);
  }
}

void gram_columns_parallel(const Eigen::MatrixXd& lhs,
                           const Eigen::MatrixXd& rhs, Eigen::MatrixXd& out) {
#ifdef _OPENMP
  out.resize(lhs.cols(), rhs.cols());
  const int cols = static_cast<int>(rhs.cols());
#pragma omp parallel for schedule(static)
  for (int j = 0; j < cols; ++j) {
    out.col(j).noalias() = lhs.transpose() * rhs.col(j);
  }
#else
  gram_columns_serial(lhs, rhs, out);
#endif
}

void for_each_index(int count, bool parallel,
                    const std::function<void(int)>& fn) {
  if (count < 0) throw DimError("for_each_index: negative count");
#ifdef _OPENMP
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
#else
  (void)parallel;
#endif
  for (int i = 0; i < count; ++i) fn(i);
}

bool parallel_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace ddmpc::kernels

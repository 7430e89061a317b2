#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace ddmpc::kernels {

// Symmetric vectorization with sqrt(2) scaling of off-diagonal entries, so
// svec(A) . svec(B) equals <A, B> = trace(A' B). Upper triangle, column by
// column: index of (i, j), i <= j, is j(j+1)/2 + i.
int svec_len(int dim);
void svec_into(const Eigen::MatrixXd& M, double* out);
void unsvec_into(const double* in, int dim, Eigen::MatrixXd& M);

// Placement of one PSD block inside the stacked svec vector.
struct BlockLayout {
  int dim = 0;
  int offset = 0;  // first svec index of this block
};

// One unit of congruence work: block `block` of column `col`.
struct ScaleItem {
  int block = 0;
  int col = 0;
};

// For every item, reads the block segment of column `col` from `in` as a
// symmetric matrix S and writes svec(map_b * S * map_b') to the same place in
// `out`. Segments not covered by any item must be zeroed by the caller.
// Items touch disjoint regions, so the parallel variant is bitwise identical
// to the serial one.
void scale_columns_serial(const std::vector<BlockLayout>& layout,
                          const std::vector<Eigen::MatrixXd>& maps,
                          const std::vector<ScaleItem>& items,
                          const Eigen::MatrixXd& in, Eigen::MatrixXd& out);
void scale_columns_parallel(const std::vector<BlockLayout>& layout,
                            const std::vector<Eigen::MatrixXd>& maps,
                            const std::vector<ScaleItem>& items,
                            const Eigen::MatrixXd& in, Eigen::MatrixXd& out);

// out = lhs' * rhs, computed column by column so the parallel variant
// matches the serial one bitwise.
void gram_columns_serial(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs,
                         Eigen::MatrixXd& out);
void gram_columns_parallel(const Eigen::MatrixXd& lhs,
                           const Eigen::MatrixXd& rhs, Eigen::MatrixXd& out);

// Runs fn(i) for i in [0, count). fn must confine its writes to slot i of
// whatever it fills, which keeps the parallel path deterministic.
void for_each_index(int count, bool parallel, const std::function<void(int)>& fn);

// True when the build can actually run the parallel variants.
bool parallel_available();

}  // namespace ddmpc::kernels

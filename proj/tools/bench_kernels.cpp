// Times the parallel kernels against their serial references on workloads
// shaped like the real solver: the per-column congruence scaling and Gram
// product that dominate one interior-point iteration of the largest builtin
// synthesis problem, plus a batch of closed-loop model audits.

#include <chrono>
#include <cstdio>
#include <vector>

#include "ddmpc/analysis.hpp"
#include "ddmpc/consistency.hpp"
#include "ddmpc/kernels.hpp"
#include "ddmpc/numerics.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/rng.hpp"

using namespace ddmpc;
using kernels::BlockLayout;
using kernels::ScaleItem;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

Eigen::MatrixXd random_spd(int n, Rng& rng) {
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) M(i, j) = rng.normal();
  }
  return M * M.transpose() + Eigen::MatrixXd::Identity(n, n);
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms,
            bool equal) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              equal ? "outputs identical" : "OUTPUTS DIFFER");
}

}  // namespace

int main() {
  std::printf("parallel runtime available: %s\n",
              kernels::parallel_available() ? "yes" : "no");

  // Block structure of the full-multiplier synthesis problem for the largest
  // builtin scenario: one 5x5 anchor, one 18x18 contraction block, two 5x5
  // shape blocks, 200 scalar multiplier bounds, and the scalar cost floor.
  Rng rng(7);
  std::vector<BlockLayout> layout;
  std::vector<Eigen::MatrixXd> maps;
  int offset = 0;
  auto push_block = [&](int dim) {
    layout.push_back(BlockLayout{dim, offset});
    offset += kernels::svec_len(dim);
    maps.push_back(random_spd(dim, rng));
  };
  push_block(5);
  push_block(18);
  push_block(5);
  push_block(5);
  for (int i = 0; i < 201; ++i) push_block(1);

  const int cols = 215;  // decision variables of that problem
  std::vector<ScaleItem> items;
  for (int b = 0; b < static_cast<int>(layout.size()); ++b) {
    for (int c = 0; c < cols; ++c) items.push_back(ScaleItem{b, c});
  }
  Eigen::MatrixXd in(offset, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < offset; ++i) in(i, j) = rng.normal();
  }
  Eigen::MatrixXd out_s = Eigen::MatrixXd::Zero(offset, cols);
  Eigen::MatrixXd out_p = Eigen::MatrixXd::Zero(offset, cols);

  double t_scale_s = time_best_of(5, [&] {
    kernels::scale_columns_serial(layout, maps, items, in, out_s);
  });
  double t_scale_p = time_best_of(5, [&] {
    kernels::scale_columns_parallel(layout, maps, items, in, out_p);
  });
  report("congruence scaling", t_scale_s, t_scale_p, out_s == out_p);

  Eigen::MatrixXd gram_s(cols, cols);
  Eigen::MatrixXd gram_p(cols, cols);
  double t_gram_s = time_best_of(5, [&] {
    kernels::gram_columns_serial(out_s, out_s, gram_s);
  });
  double t_gram_p = time_best_of(5, [&] {
    kernels::gram_columns_parallel(out_p, out_p, gram_p);
  });
  report("gram product", t_gram_s, t_gram_p, gram_s == gram_p);

  // Batch audit: evaluate the certified contraction inequality on a bundle of
  // sampled models, the hot loop of every soundness check.
  Scenario sc = builtin_scenario("SUSPENSION");
  Eigen::MatrixXd U = excitation_inputs(sc.plant.m(), sc.T_f, sc.input_low,
                                        sc.input_high, 11);
  NoiseSampler noise(sc.plant.G, NoiseKind::UNIFORM_BALL, 12);
  DataRecord data = simulate(sc.plant, sc.x0, U, noise);
  ConsistencySet set =
      ConsistencySet::build_offline(data, MultiplierMode::FULL_MULTIPLIERS);
  auto models = set.sample_members(sc.plant.A, sc.plant.B, 256, 13, 0.0);

  // Stand-in certificate: any stabilizing P, F pair exercises the same code.
  LqrSolution lqr = lqr_oracle(sc.plant.A, sc.plant.B, sc.weights);
  Certificate cert;
  cert.F = lqr.F;
  cert.P = lqr.P;
  cert.H = SymMatrix(Eigen::MatrixXd(lqr.P.mat().inverse()));
  cert.L = lqr.F * cert.H.mat();
  cert.gamma = 1.0;

  std::vector<double> eig_s(models.size()), eig_p(models.size());
  auto audit_into = [&](bool parallel, std::vector<double>& out) {
    kernels::for_each_index(
        static_cast<int>(models.size()), parallel, [&](int i) {
          const auto& [A, B] = models[i];
          Eigen::MatrixXd Acl = A + B * cert.F;
          Eigen::MatrixXd expr = Acl.transpose() * cert.P.mat() * Acl -
                                 cert.P.mat() + sc.weights.Q.mat() +
                                 cert.F.transpose() * sc.weights.R.mat() *
                                     cert.F;
          out[i] = max_eigenvalue(expr);
        });
  };
  double t_audit_s = time_best_of(5, [&] { audit_into(false, eig_s); });
  double t_audit_p = time_best_of(5, [&] { audit_into(true, eig_p); });
  report("batch model audit", t_audit_s, t_audit_p, eig_s == eig_p);
  return 0;
}

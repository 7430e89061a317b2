#include "ddmpc/sdp.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>

#include "ddmpc/errors.hpp"
#include "ddmpc/rng.hpp"

namespace ddmpc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Adds v at (r,c) and its mirror, so scalar placements keep the matrix
// symmetric without a final symmetrization pass.
void put(MatrixXd& M, int r, int c, double v) {
  M(r, c) += v;
  if (r != c) M(c, r) += v;
}

struct Builder {
  VariableLayout vars;
  conic::Problem p;

  void add_block(conic::BlockLmi b) { p.blocks.push_back(std::move(b)); }
};

// Coefficient matrices of one block, accumulated per variable.
struct BlockAccum {
  std::string name;
  int dim;
  MatrixXd constant;
  std::vector<MatrixXd> per_var;  // indexed by variable, dense while building
  std::vector<bool> used;

  BlockAccum(std::string nm, int d, int num_vars)
      : name(std::move(nm)),
        dim(d),
        constant(MatrixXd::Zero(d, d)),
        per_var(),
        used(num_vars, false) {
    per_var.resize(num_vars);
  }

  MatrixXd& coeff(int var) {
    if (!used[var]) {
      per_var[var] = MatrixXd::Zero(dim, dim);
      used[var] = true;
    }
    return per_var[var];
  }

  conic::BlockLmi finish() const {
    conic::BlockLmi b;
    b.name = name;
    b.dim = dim;
    b.constant = constant;
    for (size_t v = 0; v < per_var.size(); ++v) {
      if (used[v]) {
        b.vars.push_back(static_cast<int>(v));
        b.coeffs.push_back(per_var[v]);
      }
    }
    return b;
  }
};

SdpProblem assemble(const ConsistencySet& set, const VectorXd& x_t,
                    const CostWeights& weights, const ConstraintSet& cons,
                    double c, const SolverOptions& opt, bool adaptive) {
  const int n = set.n();
  const int m = set.m();
  if (x_t.size() != n) {
    throw DimError("assemble: x_t has dimension " + std::to_string(x_t.size()) +
                   ", expected " + std::to_string(n));
  }
  require_finite(x_t, "assemble x_t");
  if (weights.Q.dim() != n || weights.R.dim() != m) {
    throw DimError("assemble: cost weights do not match the set dimensions");
  }
  if (cons.S_u.dim() != m) {
    throw DimError("assemble: S_u does not match the input dimension");
  }
  if (cons.state_constrained() && cons.S_x.dim() != n) {
    throw DimError("assemble: S_x does not match the state dimension");
  }
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ConfigError("assemble: c must be positive and finite");
  }
  const double qmin = min_eigenvalue(weights.Q);
  if (!(c > qmin)) {
    throw CTooSmall("assemble: c = " + std::to_string(c) +
                    " must exceed lambda_min(Q) = " + std::to_string(qmin) +
                    "; the synthesis problem is infeasible for such c");
  }
  if (set.size() < 1 || set.offline_count() < 1) {
    throw DimError("assemble: consistency set holds no offline samples");
  }

  // Offline multipliers: one per block, or one for the summed block.
  const bool common = set.mode() == MultiplierMode::COMMON_MULTIPLIER;
  std::vector<const QmiBlock*> offline;
  std::vector<const QmiBlock*> online;
  for (int i = 0; i < set.size(); ++i) {
    const QmiBlock& b = set.block(i);
    (b.source == BlockSource::OFFLINE ? offline : online).push_back(&b);
  }

  SdpProblem out;
  out.vars.n = n;
  out.vars.m = m;
  out.vars.n_tau = common ? 1 : static_cast<int>(offline.size());
  out.vars.n_delta = adaptive ? static_cast<int>(online.size()) : 0;
  out.x_t = x_t;
  out.mode = set.mode();
  out.c = c;
  out.strict_margin = opt.strict_margin;

  const VariableLayout& V = out.vars;
  const int K = V.count();
  out.conic.num_vars = K;
  out.conic.cost = VectorXd::Zero(K);
  out.conic.cost(V.gamma()) = 1.0;

  const int p = 2 * n + m;   // rows of the data blocks
  const int q = n;
  const int r = m + n;
  const int dim_c = p + q + r;

  // Anchor: [[1, x'],[x, H]] >= 0 keeps ||x_t||_P^2 <= gamma.
  {
    BlockAccum a("anchor", n + 1, K);
    a.constant(0, 0) = 1.0;
    for (int i = 0; i < n; ++i) {
      a.constant(0, 1 + i) = x_t(i);
      a.constant(1 + i, 0) = x_t(i);
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i <= j; ++i) {
        put(a.coeff(V.h(i, j)), 1 + i, 1 + j, 1.0);
      }
    }
    out.conic.blocks.push_back(a.finish());
  }

  // Contraction: the S-procedure block inequality, strict, flipped so the
  // solver sees -(LMI) - margin I >= 0.
  {
    BlockAccum a("contraction", dim_c, K);
    // gamma: (1/c) I in the leading n rows, -I in the trailing m+n rows.
    {
      MatrixXd& Cg = a.coeff(V.gamma());
      for (int i = 0; i < n; ++i) Cg(i, i) += 1.0 / c;
      for (int i = 0; i < r; ++i) Cg(p + q + i, p + q + i) -= 1.0;
    }
    // H: -H top left, H at rows n..2n against the middle block, -H in the
    // middle block, and M_Q H inside the cost factor column.
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i <= j; ++i) {
        MatrixXd& Ch = a.coeff(V.h(i, j));
        put(Ch, i, j, -1.0);
        put(Ch, p + i, p + j, -1.0);
        if (i == j) {
          put(Ch, n + i, p + i, 1.0);
        } else {
          put(Ch, n + i, p + j, 1.0);
          put(Ch, n + j, p + i, 1.0);
        }
        for (int aa = 0; aa < n; ++aa) {
          if (i == j) {
            put(Ch, p + q + m + aa, p + i, weights.M_Q(aa, i));
          } else {
            put(Ch, p + q + m + aa, p + j, weights.M_Q(aa, i));
            put(Ch, p + q + m + aa, p + i, weights.M_Q(aa, j));
          }
        }
      }
    }
    // L: rows 2n..2n+m against the middle block, and M_R L inside the cost
    // factor column.
    for (int rr = 0; rr < m; ++rr) {
      for (int cc = 0; cc < n; ++cc) {
        MatrixXd& Cl = a.coeff(V.l(rr, cc));
        put(Cl, 2 * n + rr, p + cc, 1.0);
        for (int aa = 0; aa < m; ++aa) {
          put(Cl, p + q + aa, p + cc, weights.M_R(aa, rr));
        }
      }
    }
    // Multipliers scale the data blocks in the top-left corner.
    if (common) {
      a.coeff(V.tau(0)).topLeftCorner(p, p) += set.summed_offline().mat();
    } else {
      for (size_t k = 0; k < offline.size(); ++k) {
        a.coeff(V.tau(static_cast<int>(k))).topLeftCorner(p, p) +=
            offline[k]->D.mat();
      }
    }
    if (adaptive) {
      for (size_t k = 0; k < online.size(); ++k) {
        a.coeff(V.delta(static_cast<int>(k))).topLeftCorner(p, p) +=
            online[k]->D.mat();
      }
    }
    conic::BlockLmi b = a.finish();
    b.constant = -b.constant;
    b.constant.diagonal().array() -= opt.strict_margin;
    for (auto& Cm : b.coeffs) Cm = -Cm;
    out.conic.blocks.push_back(std::move(b));
  }

  // Multiplier nonnegativity.
  for (int k = 0; k < V.n_tau; ++k) {
    BlockAccum a("tau_" + std::to_string(k) + "_nonneg", 1, K);
    a.coeff(V.tau(k))(0, 0) = 1.0;
    out.conic.blocks.push_back(a.finish());
  }
  for (int k = 0; k < V.n_delta; ++k) {
    BlockAccum a("delta_" + std::to_string(k) + "_nonneg", 1, K);
    a.coeff(V.delta(k))(0, 0) = 1.0;
    out.conic.blocks.push_back(a.finish());
  }

  // gamma >= gamma_min.
  {
    BlockAccum a("gamma_lower", 1, K);
    a.constant(0, 0) = -opt.gamma_min;
    a.coeff(V.gamma())(0, 0) = 1.0;
    out.conic.blocks.push_back(a.finish());
  }

  // Input shaping: [[H, L'],[L, S_u^{-1}]] >= 0.
  {
    BlockAccum a("input_shape", n + m, K);
    a.constant.bottomRightCorner(m, m) = spd_inverse(cons.S_u, "S_u");
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i <= j; ++i) put(a.coeff(V.h(i, j)), i, j, 1.0);
    }
    for (int rr = 0; rr < m; ++rr) {
      for (int cc = 0; cc < n; ++cc) {
        put(a.coeff(V.l(rr, cc)), n + rr, cc, 1.0);
      }
    }
    out.conic.blocks.push_back(a.finish());
  }

  // State shaping: [[H, H],[H, S_x^{-1}]] >= 0, omitted when there is no
  // state constraint.
  if (cons.state_constrained()) {
    BlockAccum a("state_shape", 2 * n, K);
    a.constant.bottomRightCorner(n, n) = spd_inverse(cons.S_x, "S_x");
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i <= j; ++i) {
        MatrixXd& Ch = a.coeff(V.h(i, j));
        put(Ch, i, j, 1.0);
        if (i == j) {
          put(Ch, i, n + i, 1.0);
        } else {
          put(Ch, i, n + j, 1.0);
          put(Ch, j, n + i, 1.0);
        }
      }
    }
    out.conic.blocks.push_back(a.finish());
  }

  conic::validate(out.conic);
  return out;
}

}  // namespace

int VariableLayout::h(int i, int j) const {
  if (i > j || j >= n || i < 0) throw DimError("VariableLayout::h: bad index");
  return 1 + j * (j + 1) / 2 + i;
}

int VariableLayout::l(int r, int c) const {
  if (r < 0 || r >= m || c < 0 || c >= n) {
    throw DimError("VariableLayout::l: bad index");
  }
  return 1 + n * (n + 1) / 2 + r * n + c;
}

int VariableLayout::tau(int k) const {
  if (k < 0 || k >= n_tau) throw DimError("VariableLayout::tau: bad index");
  return 1 + n * (n + 1) / 2 + m * n + k;
}

int VariableLayout::delta(int k) const {
  if (k < 0 || k >= n_delta) throw DimError("VariableLayout::delta: bad index");
  return 1 + n * (n + 1) / 2 + m * n + n_tau + k;
}

int VariableLayout::count() const {
  return 1 + n * (n + 1) / 2 + m * n + n_tau + n_delta;
}

std::string VariableLayout::name(int idx) const {
  if (idx == 0) return "gamma";
  int base = 1;
  int nh = n * (n + 1) / 2;
  if (idx < base + nh) {
    int t = idx - base;
    int j = 0;
    while ((j + 1) * (j + 2) / 2 <= t) ++j;
    int i = t - j * (j + 1) / 2;
    return "h_" + std::to_string(i) + "_" + std::to_string(j);
  }
  base += nh;
  if (idx < base + m * n) {
    int t = idx - base;
    return "l_" + std::to_string(t / n) + "_" + std::to_string(t % n);
  }
  base += m * n;
  if (idx < base + n_tau) {
    return "tau_" + std::to_string(idx - base);
  }
  base += n_tau;
  if (idx < base + n_delta) {
    return "delta_" + std::to_string(idx - base);
  }
  throw DimError("VariableLayout::name: index out of range");
}

SdpProblem assemble_robust(const ConsistencySet& set, const VectorXd& x_t,
                           const CostWeights& weights,
                           const ConstraintSet& constraints, double c,
                           const SolverOptions& opt) {
  return assemble(set, x_t, weights, constraints, c, opt, false);
}

SdpProblem assemble_adaptive(const ConsistencySet& set, const VectorXd& x_t,
                             const CostWeights& weights,
                             const ConstraintSet& constraints, double c,
                             const SolverOptions& opt) {
  return assemble(set, x_t, weights, constraints, c, opt, true);
}

SdpSolution solve(const SdpProblem& problem, const SolverOptions& opt) {
  conic::Options copt;
  copt.max_iter = opt.max_iter;
  copt.feas_tol = opt.feas_tol;
  copt.rel_gap = opt.rel_gap;
  copt.parallel = opt.parallel;
  copt.verbose = opt.verbose;

  auto t0 = std::chrono::steady_clock::now();
  conic::Result r = conic::solve(problem.conic, copt);
  auto t1 = std::chrono::steady_clock::now();

  SdpSolution sol;
  sol.status = r.status;
  sol.iterations = r.iterations;
  sol.max_violation = r.max_violation;
  sol.gap = r.gap;
  sol.dual_residual = r.dual_residual;
  sol.message = r.message;
  sol.solve_ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();
  sol.raw = r.y;

  const VariableLayout& V = problem.vars;
  if (r.y.size() == V.count()) {
    sol.gamma = r.y(V.gamma());
    MatrixXd H = MatrixXd::Zero(V.n, V.n);
    for (int j = 0; j < V.n; ++j) {
      for (int i = 0; i <= j; ++i) {
        H(i, j) = r.y(V.h(i, j));
        H(j, i) = H(i, j);
      }
    }
    sol.H = SymMatrix(H);
    sol.L = MatrixXd::Zero(V.m, V.n);
    for (int rr = 0; rr < V.m; ++rr) {
      for (int cc = 0; cc < V.n; ++cc) {
        sol.L(rr, cc) = r.y(V.l(rr, cc));
      }
    }
    sol.tau = VectorXd::Zero(V.n_tau);
    for (int k = 0; k < V.n_tau; ++k) sol.tau(k) = r.y(V.tau(k));
    sol.delta = VectorXd::Zero(V.n_delta);
    for (int k = 0; k < V.n_delta; ++k) sol.delta(k) = r.y(V.delta(k));
  }
  return sol;
}

Certificate extract_certificate(const SdpSolution& solution) {
  if (solution.status != SolveStatus::OPTIMAL) {
    throw NoSolution("extract_certificate: solve status is not optimal: " +
                     solution.message);
  }
  if (solution.H.dim() < 1) {
    throw NoSolution("extract_certificate: solution carries no H");
  }
  MatrixXd Hinv = spd_inverse(solution.H, "certificate H");
  Certificate cert;
  cert.F = solution.L * Hinv;
  cert.P = SymMatrix(solution.gamma * Hinv);
  cert.gamma = solution.gamma;
  cert.H = solution.H;
  cert.L = solution.L;
  if (min_eigenvalue(cert.P) <= 0.0) {
    throw NoSolution("extract_certificate: P is not positive definite");
  }
  return cert;
}

std::string VerificationReport::text() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.pass ? "pass" : "FAIL") << "  " << c.name
        << "  min_eig=" << c.min_eig << "\n";
  }
  out << (pass ? "all blocks satisfied" : "violations present")
      << ", worst=" << worst << "\n";
  return out.str();
}

namespace {
std::atomic<std::uint64_t> g_verify_checks{0};
std::atomic<std::uint64_t> g_verify_failures{0};
}  // namespace

VerificationStats verification_stats() {
  return {g_verify_checks.load(), g_verify_failures.load()};
}

VerificationReport verify_solution(const SdpProblem& problem,
                                   const SdpSolution& solution,
                                   double feas_tol) {
  if (solution.raw.size() != problem.vars.count()) {
    throw DimError("verify_solution: solution does not match the problem");
  }
  VerificationReport rep;
  rep.worst = 0.0;
  rep.pass = true;
  for (const auto& b : problem.conic.blocks) {
    MatrixXd S = b.constant;
    for (size_t k = 0; k < b.vars.size(); ++k) {
      S += solution.raw(b.vars[k]) * b.coeffs[k];
    }
    ConstraintCheck chk;
    chk.name = b.name;
    chk.min_eig = min_eigenvalue(S);
    chk.pass = chk.min_eig >= -10.0 * feas_tol;
    rep.worst = std::min(rep.worst, chk.min_eig);
    rep.pass = rep.pass && chk.pass;
    rep.checks.push_back(std::move(chk));
  }
  ++g_verify_checks;
  if (!rep.pass) ++g_verify_failures;
  return rep;
}

std::string debug_dump(const SdpProblem& problem) {
  std::ostringstream out;
  const VariableLayout& V = problem.vars;
  out << "variables: " << V.count() << "\n";
  for (int k = 0; k < V.count(); ++k) {
    out << "  [" << k << "] " << V.name(k) << "\n";
  }
  out << "objective: minimize " << V.name(V.gamma()) << "\n";
  out << "mode: "
      << (problem.mode == MultiplierMode::FULL_MULTIPLIERS ? "full multipliers"
                                                           : "common multiplier")
      << "\n";
  out << "strict margin: " << problem.strict_margin << "\n";
  out << "blocks: " << problem.conic.blocks.size() << "\n";
  for (const auto& b : problem.conic.blocks) {
    out << "  " << b.name << " dim " << b.dim << " touches";
    for (int v : b.vars) out << " " << V.name(v);
    out << "\n";
  }
  return out.str();
}

bool validate_affine(const SdpProblem& problem, std::uint64_t seed) {
  Rng rng(seed);
  const int K = problem.vars.count();
  for (int trial = 0; trial < 4; ++trial) {
    VectorXd a(K), b(K);
    for (int i = 0; i < K; ++i) a(i) = rng.normal();
    for (int i = 0; i < K; ++i) b(i) = rng.normal();
    VectorXd mid = 0.5 * (a + b);
    for (const auto& blk : problem.conic.blocks) {
      auto eval = [&](const VectorXd& y) {
        MatrixXd S = blk.constant;
        for (size_t k = 0; k < blk.vars.size(); ++k) {
          S += y(blk.vars[k]) * blk.coeffs[k];
        }
        return S;
      };
      MatrixXd lhs = eval(a) + eval(b) - 2.0 * eval(mid);
      double scale = 1.0 + eval(a).cwiseAbs().maxCoeff() +
                     eval(b).cwiseAbs().maxCoeff();
      if (lhs.cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
    }
  }
  return true;
}

}  // namespace ddmpc

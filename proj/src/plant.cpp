#include "ddmpc/plant.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>

#include "ddmpc/csv.hpp"
#include "ddmpc/errors.hpp"

namespace ddmpc {

namespace {

constexpr double kDivergenceLimit = 1e12;

}  // namespace

LtiPlant LtiPlant::make(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const SymMatrix& G) {
  if (A.rows() != A.cols()) {
    throw DimError("LtiPlant: A must be square");
  }
  if (B.rows() != A.rows()) {
    throw DimError("LtiPlant: B has " + std::to_string(B.rows()) +
                   " rows, expected " + std::to_string(A.rows()));
  }
  if (G.dim() != A.rows()) {
    throw DimError("LtiPlant: G must match the state dimension");
  }
  require_finite(A, "LtiPlant A");
  require_finite(B, "LtiPlant B");
  if (min_eigenvalue(G) <= 0.0) {
    throw NotPsd("LtiPlant: G must be positive definite");
  }
  return LtiPlant{A, B, G};
}

NoiseSampler::NoiseSampler(const SymMatrix& G, NoiseKind kind,
                           std::uint64_t seed)
    : n_(G.dim()), kind_(kind), rng_(seed) {
  if (min_eigenvalue(G) <= 0.0) {
    throw NotPsd("NoiseSampler: G must be positive definite");
  }
  shape_ = sqrt_factor(SymMatrix(spd_inverse(G, "NoiseSampler G")));
}

Eigen::VectorXd NoiseSampler::sample() {
  if (kind_ == NoiseKind::ZERO) {
    return Eigen::VectorXd::Zero(n_);
  }
  Eigen::VectorXd dir(n_);
  double norm = 0.0;
  do {
    for (int i = 0; i < n_; ++i) dir(i) = rng_.normal();
    norm = dir.norm();
  } while (norm < 1e-300);
  dir /= norm;
  double radius = 1.0;
  if (kind_ == NoiseKind::UNIFORM_BALL) {
    radius = std::pow(rng_.uniform01(), 1.0 / n_);
  }
  return shape_ * (radius * dir);
}

DataRecord DataRecord::make(const Eigen::MatrixXd& U, const Eigen::MatrixXd& X,
                            const SymMatrix& G,
                            std::optional<Eigen::MatrixXd> W) {
  if (U.cols() < 1) {
    throw DimError("DataRecord: need at least one sample");
  }
  if (X.cols() != U.cols() + 1) {
    throw DimError("DataRecord: X must have exactly one more column than U");
  }
  if (G.dim() != X.rows()) {
    throw DimError("DataRecord: G must match the state dimension");
  }
  require_finite(U, "DataRecord U");
  require_finite(X, "DataRecord X");
  if (W) {
    if (W->rows() != X.rows() || W->cols() != U.cols()) {
      throw DimError("DataRecord: W must be n x T");
    }
    require_finite(*W, "DataRecord W");
  }
  return DataRecord{U, X, G, std::move(W)};
}

void DataRecord::to_csv(const std::string& path) const {
  std::ostringstream out;
  out << "t";
  for (int i = 0; i < m(); ++i) out << ",u_" << i;
  for (int i = 0; i < n(); ++i) out << ",x_" << i;
  out << "\n";
  const int T = length();
  for (int t = 0; t <= T; ++t) {
    out << t;
    for (int i = 0; i < m(); ++i) {
      out << ",";
      if (t < T) out << csv::format(U(i, t));
    }
    for (int i = 0; i < n(); ++i) {
      out << "," << csv::format(X(i, t));
    }
    out << "\n";
  }
  csv::write_file(path, out.str());
}

DataRecord DataRecord::from_csv(const std::string& path, const SymMatrix& G) {
  auto lines = csv::read_lines(path);
  if (lines.size() < 3) {
    throw ConfigError(path + ": too short for a data record");
  }
  auto header = csv::split(lines[0]);
  int m = 0, n = 0;
  for (size_t i = 1; i < header.size(); ++i) {
    if (header[i].rfind("u_", 0) == 0) {
      ++m;
    } else if (header[i].rfind("x_", 0) == 0) {
      ++n;
    } else {
      throw ConfigError(path + ": unexpected column '" + header[i] + "'");
    }
  }
  if (m < 1 || n < 1 || header.size() != static_cast<size_t>(1 + m + n)) {
    throw ConfigError(path + ": malformed header");
  }
  const int T = static_cast<int>(lines.size()) - 2;
  Eigen::MatrixXd U(m, T);
  Eigen::MatrixXd X(n, T + 1);
  for (int t = 0; t <= T; ++t) {
    auto cells = csv::split(lines[1 + t]);
    if (cells.size() != header.size()) {
      throw ConfigError(path + ": row " + std::to_string(t) +
                        " has wrong cell count");
    }
    auto tv = csv::parse_cell(cells[0], path.c_str());
    if (!tv || *tv != t) {
      throw ConfigError(path + ": rows must be numbered consecutively");
    }
    for (int i = 0; i < m; ++i) {
      auto v = csv::parse_cell(cells[1 + i], path.c_str());
      if (t < T) {
        if (!v) throw ConfigError(path + ": missing input at step " +
                                  std::to_string(t));
        U(i, t) = *v;
      } else if (v) {
        throw ConfigError(path + ": terminal row must have empty input cells");
      }
    }
    for (int i = 0; i < n; ++i) {
      auto v = csv::parse_cell(cells[1 + m + i], path.c_str());
      if (!v) throw ConfigError(path + ": missing state at step " +
                                std::to_string(t));
      X(i, t) = *v;
    }
  }
  return DataRecord::make(U, X, G);
}

DataRecord simulate(const LtiPlant& plant, const Eigen::VectorXd& x0,
                    const Eigen::MatrixXd& U, NoiseSampler& noise) {
  if (x0.size() != plant.n()) {
    throw DimError("simulate: x0 has wrong dimension");
  }
  if (U.rows() != plant.m()) {
    throw DimError("simulate: U has wrong input dimension");
  }
  if (noise.dim() != plant.n()) {
    throw DimError("simulate: noise dimension mismatch");
  }
  require_finite(x0, "simulate x0");
  require_finite(U, "simulate U");
  const int T = static_cast<int>(U.cols());
  if (T < 1) {
    throw DimError("simulate: need at least one input");
  }
  Eigen::MatrixXd X(plant.n(), T + 1);
  Eigen::MatrixXd W(plant.n(), T);
  X.col(0) = x0;
  for (int t = 0; t < T; ++t) {
    W.col(t) = noise.sample();
    X.col(t + 1) = plant.A * X.col(t) + plant.B * U.col(t) + W.col(t);
    if (!X.col(t + 1).allFinite() || X.col(t + 1).norm() > kDivergenceLimit) {
      throw Diverged("simulate: state diverged at step " + std::to_string(t));
    }
  }
  return DataRecord::make(U, X, plant.G, W);
}

Scenario builtin_scenario(const std::string& name) {
  if (name == "SUSPENSION") {
    Eigen::MatrixXd A(4, 4);
    A << 0.809, 0.009, 0.0, 0.0,
        -36.93, 0.8, 0.0, 0.0,
        0.191, -0.009, 1.0, 0.01,
        0.0, 0.0, 0.0, 1.0;
    Eigen::MatrixXd B(4, 1);
    B << 0.0005, 0.0935, -0.005, -0.01;
    SymMatrix G(1e8 * Eigen::MatrixXd::Identity(4, 4));
    Scenario s;
    s.name = name;
    s.plant = LtiPlant::make(A, B, G);
    s.weights = CostWeights::make(
        SymMatrix(100.0 * Eigen::MatrixXd::Identity(4, 4)),
        SymMatrix(Eigen::MatrixXd::Identity(1, 1)));
    Eigen::VectorXd sx(4);
    sx << 2500.0, 1.0, 400.0, 1.0;
    s.constraints = ConstraintSet::make(
        SymMatrix(0.25 * Eigen::MatrixXd::Identity(1, 1)),
        SymMatrix::diagonal(sx));
    s.x0 = Eigen::VectorXd(4);
    s.x0 << -0.01, -0.5, 0.03, 0.1;
    s.c = 5e5;
    s.T_f = 200;
    s.steps = 150;
    s.input_low = -5.0;
    s.input_high = 5.0;
    return s;
  }
  if (name == "SCALAR") {
    Eigen::MatrixXd A(1, 1), B(1, 1);
    A << 1.1;
    B << 0.5;
    SymMatrix G(1e8 * Eigen::MatrixXd::Identity(1, 1));
    Scenario s;
    s.name = name;
    s.plant = LtiPlant::make(A, B, G);
    s.weights =
        CostWeights::make(SymMatrix(Eigen::MatrixXd::Identity(1, 1)),
                          SymMatrix(0.1 * Eigen::MatrixXd::Identity(1, 1)));
    s.constraints = ConstraintSet::make(
        SymMatrix(0.25 * Eigen::MatrixXd::Identity(1, 1)),
        SymMatrix(0.25 * Eigen::MatrixXd::Identity(1, 1)));
    s.x0 = Eigen::VectorXd(1);
    s.x0 << -1.0;
    s.c = 50.0;
    s.T_f = 20;
    s.steps = 20;
    s.input_low = -5.0;
    s.input_high = 5.0;
    return s;
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

Eigen::MatrixXd excitation_inputs(int m, int T, double lo, double hi,
                                  std::uint64_t seed) {
  if (m < 1 || T < 1) {
    throw DimError("excitation_inputs: m and T must be positive");
  }
  if (!(lo < hi)) {
    throw ConfigError("excitation_inputs: empty range");
  }
  Rng rng(seed);
  Eigen::MatrixXd U(m, T);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < m; ++i) {
      U(i, t) = rng.uniform(lo, hi);
    }
  }
  return U;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> least_squares_model(
    const DataRecord& data) {
  const int n = data.n();
  const int m = data.m();
  const int T = data.length();
  Eigen::MatrixXd Z(n + m, T);
  Z.topRows(n) = data.X.leftCols(T);
  Z.bottomRows(m) = data.U;
  Eigen::MatrixXd Xp = data.X.rightCols(T);
  // Minimizes ||Xp - Theta Z||_F over Theta = [A B].
  Eigen::MatrixXd Theta =
      Z.transpose().colPivHouseholderQr().solve(Xp.transpose()).transpose();
  return {Theta.leftCols(n), Theta.rightCols(m)};
}

std::string plant_fingerprint(const LtiPlant& plant) {
  std::ostringstream text;
  auto dump = [&text](const char* tag, const Eigen::MatrixXd& M) {
    text << tag << ":" << M.rows() << "x" << M.cols() << ":";
    for (int i = 0; i < M.rows(); ++i) {
      for (int j = 0; j < M.cols(); ++j) {
        text << csv::format(M(i, j)) << ",";
      }
    }
  };
  dump("A", plant.A);
  dump("B", plant.B);
  dump("G", plant.G.mat());
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace ddmpc

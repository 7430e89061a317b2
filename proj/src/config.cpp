#include "ddmpc/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "ddmpc/csv.hpp"
#include "ddmpc/errors.hpp"

namespace ddmpc {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Recursive descent over "[a,b]" / "[[a,b],[c,d]]".
class ArrayScanner {
 public:
  ArrayScanner(const std::string& key, const std::string& text)
      : key_(key), s_(text) {}

  std::vector<std::vector<double>> matrix() {
    skip();
    expect('[');
    std::vector<std::vector<double>> rows;
    skip();
    if (peek() == '[') {
      while (true) {
        rows.push_back(row());
        skip();
        if (!consume(',')) break;
      }
    } else if (peek() != ']') {
      rows.push_back(items());
    }
    expect(']');
    skip();
    if (pos_ != s_.size()) fail("trailing characters after array");
    if (rows.empty()) fail("empty array");
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) fail("ragged rows");
    }
    return rows;
  }

 private:
  std::vector<double> row() {
    expect('[');
    auto vals = items();
    expect(']');
    return vals;
  }

  std::vector<double> items() {
    std::vector<double> vals;
    while (true) {
      vals.push_back(number());
      if (!consume(',')) break;
    }
    if (vals.empty()) fail("empty row");
    return vals;
  }

  double number() {
    skip();
    size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
           s_[pos_] != '[') {
      ++pos_;
    }
    auto v = csv::parse_cell(trim(s_.substr(start, pos_ - start)));
    if (!v) fail("expected a number");
    return *v;
  }

  void skip() {
    while (pos_ < s_.size() &&
           std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      ++pos_;
    }
  }

  char peek() {
    skip();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  bool consume(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  [[noreturn]] void fail(const std::string& what) {
    throw ConfigError("config key '" + key_ + "': " + what + " in '" + s_ +
                      "'");
  }

  const std::string& key_;
  const std::string& s_;
  size_t pos_ = 0;
};

std::string format_matrix(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r > 0) out += ", ";
    out += "[";
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ", ";
      out += csv::format(m(r, c));
    }
    out += "]";
  }
  out += "]";
  return out;
}

std::string format_vector(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += csv::format(v(i));
  }
  out += "]";
  return out;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    }
    for (const auto& [k, v] : kv.entries_) {
      if (k == key) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": duplicate key '" + key + "'");
      }
    }
    kv.put(key, std::move(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool KeyValueFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& KeyValueFile::raw(const std::string& key) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == key) {
      read_[i] = true;
      return entries_[i].second;
    }
  }
  throw ConfigError("missing config key '" + key + "'");
}

std::string KeyValueFile::get_string(const std::string& key) const {
  return raw(key);
}

double KeyValueFile::get_double(const std::string& key) const {
  auto v = csv::parse_cell(raw(key));
  if (!v) throw ConfigError("config key '" + key + "' is not a number");
  return *v;
}

int KeyValueFile::get_int(const std::string& key) const {
  double v = get_double(key);
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("config key '" + key + "' is not an integer");
  }
  return i;
}

std::uint64_t KeyValueFile::get_u64(const std::string& key) const {
  const std::string& s = raw(key);
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key +
                      "' is not an unsigned integer: '" + s + "'");
  }
}

bool KeyValueFile::get_bool(const std::string& key) const {
  const std::string& s = raw(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + s + "'");
}

Eigen::VectorXd KeyValueFile::get_vector(const std::string& key) const {
  auto rows = ArrayScanner(key, raw(key)).matrix();
  if (rows.size() != 1) {
    throw ConfigError("config key '" + key + "' must be a flat [..] vector");
  }
  Eigen::VectorXd v(rows[0].size());
  for (size_t i = 0; i < rows[0].size(); ++i) v(static_cast<Eigen::Index>(i)) = rows[0][i];
  return v;
}

Eigen::MatrixXd KeyValueFile::get_matrix(const std::string& key) const {
  auto rows = ArrayScanner(key, raw(key)).matrix();
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
    }
  }
  return m;
}

void KeyValueFile::put(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
  read_.push_back(false);
}

void KeyValueFile::set_string(const std::string& key,
                              const std::string& value) {
  put(key, value);
}

void KeyValueFile::set_double(const std::string& key, double value) {
  put(key, csv::format(value));
}

void KeyValueFile::set_int(const std::string& key, long long value) {
  put(key, std::to_string(value));
}

void KeyValueFile::set_bool(const std::string& key, bool value) {
  put(key, value ? "true" : "false");
}

void KeyValueFile::set_vector(const std::string& key,
                              const Eigen::VectorXd& value) {
  put(key, format_vector(value));
}

void KeyValueFile::set_matrix(const std::string& key,
                              const Eigen::MatrixXd& value) {
  put(key, format_matrix(value));
}

std::vector<std::string> KeyValueFile::unread_keys() const {
  std::vector<std::string> out;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (!read_[i]) out.push_back(entries_[i].first);
  }
  return out;
}

std::string KeyValueFile::text() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

void KeyValueFile::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file '" + path + "'");
  out << text();
  if (!out) throw ConfigError("failed writing config file '" + path + "'");
}

MpcConfig ExperimentConfig::mpc() const {
  MpcConfig cfg;
  cfg.c = scenario.c;
  cfg.weights = scenario.weights;
  cfg.constraints = scenario.constraints;
  cfg.multiplier_mode = multipliers;
  cfg.solver = solver;
  cfg.max_online_blocks = max_online_blocks;
  return cfg;
}

ExperimentConfig default_experiment(const std::string& scenario_name) {
  ExperimentConfig cfg;
  cfg.scenario = builtin_scenario(scenario_name);
  return cfg;
}

ExperimentConfig parse_experiment(const std::string& text) {
  KeyValueFile kv = KeyValueFile::parse(text);
  std::string base = kv.has("scenario") ? kv.get_string("scenario")
                                        : std::string("SUSPENSION");
  ExperimentConfig cfg = default_experiment(base);

  Eigen::MatrixXd A = cfg.scenario.plant.A;
  Eigen::MatrixXd B = cfg.scenario.plant.B;
  Eigen::MatrixXd G = cfg.scenario.plant.G.mat();
  if (kv.has("plant.A")) A = kv.get_matrix("plant.A");
  if (kv.has("plant.B")) B = kv.get_matrix("plant.B");
  if (kv.has("plant.G")) G = kv.get_matrix("plant.G");
  cfg.scenario.plant = LtiPlant::make(A, B, SymMatrix(G));

  Eigen::MatrixXd Q = cfg.scenario.weights.Q.mat();
  Eigen::MatrixXd R = cfg.scenario.weights.R.mat();
  if (kv.has("mpc.Q")) Q = kv.get_matrix("mpc.Q");
  if (kv.has("mpc.R")) R = kv.get_matrix("mpc.R");
  cfg.scenario.weights = CostWeights::make(SymMatrix(Q), SymMatrix(R));

  Eigen::MatrixXd Su = cfg.scenario.constraints.S_u.mat();
  Eigen::MatrixXd Sx = cfg.scenario.constraints.S_x.mat();
  if (kv.has("mpc.S_u")) Su = kv.get_matrix("mpc.S_u");
  if (kv.has("mpc.S_x")) Sx = kv.get_matrix("mpc.S_x");
  cfg.scenario.constraints = ConstraintSet::make(SymMatrix(Su), SymMatrix(Sx));

  if (kv.has("mpc.c")) cfg.scenario.c = kv.get_double("mpc.c");
  if (kv.has("mpc.multipliers")) {
    cfg.multipliers = multiplier_from_name(kv.get_string("mpc.multipliers"));
  }
  if (kv.has("mpc.max_online_blocks")) {
    cfg.max_online_blocks = kv.get_int("mpc.max_online_blocks");
  }

  if (kv.has("sim.x0")) cfg.scenario.x0 = kv.get_vector("sim.x0");
  if (kv.has("sim.T_f")) cfg.scenario.T_f = kv.get_int("sim.T_f");
  if (kv.has("sim.steps")) cfg.scenario.steps = kv.get_int("sim.steps");
  if (kv.has("sim.input_low")) cfg.scenario.input_low = kv.get_double("sim.input_low");
  if (kv.has("sim.input_high")) cfg.scenario.input_high = kv.get_double("sim.input_high");
  if (kv.has("sim.noise")) cfg.noise = noise_from_name(kv.get_string("sim.noise"));
  if (kv.has("sim.scheme")) cfg.scheme = scheme_from_name(kv.get_string("sim.scheme"));
  if (kv.has("sim.seed")) cfg.seed = kv.get_u64("sim.seed");

  if (kv.has("solver.feas_tol")) cfg.solver.feas_tol = kv.get_double("solver.feas_tol");
  if (kv.has("solver.rel_gap")) cfg.solver.rel_gap = kv.get_double("solver.rel_gap");
  if (kv.has("solver.max_iter")) cfg.solver.max_iter = kv.get_int("solver.max_iter");
  if (kv.has("solver.parallel")) cfg.solver.parallel = kv.get_bool("solver.parallel");
  if (kv.has("solver.verbose")) cfg.solver.verbose = kv.get_bool("solver.verbose");

  if (kv.has("output.dir")) cfg.out_dir = kv.get_string("output.dir");

  if (cfg.scenario.x0.size() != cfg.scenario.plant.n()) {
    throw ConfigError("sim.x0 length does not match the plant state size");
  }
  if (cfg.scenario.T_f < 1) throw ConfigError("sim.T_f must be at least 1");
  if (cfg.scenario.steps < 1) throw ConfigError("sim.steps must be at least 1");
  if (!(cfg.scenario.input_low < cfg.scenario.input_high)) {
    throw ConfigError("sim.input_low must be below sim.input_high");
  }

  auto unknown = kv.unread_keys();
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) {
      if (!list.empty()) list += ", ";
      list += k;
    }
    throw ConfigError("unknown config keys: " + list);
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment(buf.str());
}

std::string write_experiment(const ExperimentConfig& cfg) {
  KeyValueFile kv;
  kv.set_string("scenario", cfg.scenario.name);
  kv.set_matrix("plant.A", cfg.scenario.plant.A);
  kv.set_matrix("plant.B", cfg.scenario.plant.B);
  kv.set_matrix("plant.G", cfg.scenario.plant.G.mat());
  kv.set_matrix("mpc.Q", cfg.scenario.weights.Q.mat());
  kv.set_matrix("mpc.R", cfg.scenario.weights.R.mat());
  kv.set_matrix("mpc.S_u", cfg.scenario.constraints.S_u.mat());
  kv.set_matrix("mpc.S_x", cfg.scenario.constraints.S_x.mat());
  kv.set_double("mpc.c", cfg.scenario.c);
  kv.set_string("mpc.multipliers", multiplier_name(cfg.multipliers));
  kv.set_int("mpc.max_online_blocks", cfg.max_online_blocks);
  kv.set_vector("sim.x0", cfg.scenario.x0);
  kv.set_int("sim.T_f", cfg.scenario.T_f);
  kv.set_int("sim.steps", cfg.scenario.steps);
  kv.set_double("sim.input_low", cfg.scenario.input_low);
  kv.set_double("sim.input_high", cfg.scenario.input_high);
  kv.set_string("sim.noise", noise_name(cfg.noise));
  kv.set_string("sim.scheme", scheme_name(cfg.scheme));
  kv.set_string("sim.seed", std::to_string(cfg.seed));
  kv.set_double("solver.feas_tol", cfg.solver.feas_tol);
  kv.set_double("solver.rel_gap", cfg.solver.rel_gap);
  kv.set_int("solver.max_iter", cfg.solver.max_iter);
  kv.set_bool("solver.parallel", cfg.solver.parallel);
  kv.set_bool("solver.verbose", cfg.solver.verbose);
  if (!cfg.out_dir.empty()) kv.set_string("output.dir", cfg.out_dir);
  return kv.text();
}

const char* noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::UNIFORM_BALL:
      return "UNIFORM_BALL";
    case NoiseKind::BOUNDARY:
      return "BOUNDARY";
    case NoiseKind::ZERO:
      return "ZERO";
  }
  return "UNKNOWN";
}

NoiseKind noise_from_name(const std::string& name) {
  if (name == "UNIFORM_BALL") return NoiseKind::UNIFORM_BALL;
  if (name == "BOUNDARY") return NoiseKind::BOUNDARY;
  if (name == "ZERO") return NoiseKind::ZERO;
  throw ConfigError("unknown noise kind '" + name + "'");
}

const char* multiplier_name(MultiplierMode mode) {
  return mode == MultiplierMode::FULL_MULTIPLIERS ? "FULL" : "COMMON";
}

MultiplierMode multiplier_from_name(const std::string& name) {
  if (name == "FULL") return MultiplierMode::FULL_MULTIPLIERS;
  if (name == "COMMON") return MultiplierMode::COMMON_MULTIPLIER;
  throw ConfigError("unknown multiplier mode '" + name + "'");
}

}  // namespace ddmpc

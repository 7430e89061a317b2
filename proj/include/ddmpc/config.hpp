#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddmpc/controller.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/sdp.hpp"

namespace ddmpc {

// Flat "key = value" file with # comments. Values are numbers, booleans,
// bare strings, or bracketed arrays ([1,2] vectors, [[1,2],[3,4]] row-major
// matrices). Numbers are rendered with shortest round-trip formatting so a
// write/parse cycle reproduces the exact doubles.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  Eigen::VectorXd get_vector(const std::string& key) const;
  Eigen::MatrixXd get_matrix(const std::string& key) const;

  void set_string(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, long long value);
  void set_bool(const std::string& key, bool value);
  void set_vector(const std::string& key, const Eigen::VectorXd& value);
  void set_matrix(const std::string& key, const Eigen::MatrixXd& value);

  // Keys never read through a getter; used to reject typos in config files.
  std::vector<std::string> unread_keys() const;

  std::string text() const;
  void save(const std::string& path) const;

 private:
  const std::string& raw(const std::string& key) const;
  void put(const std::string& key, std::string value);

  // Insertion-ordered so written files stay diffable.
  std::vector<std::pair<std::string, std::string>> entries_;
  mutable std::vector<bool> read_;
};

// Everything one experiment needs: the scenario (plant, weights, constraints,
// horizon), which controller scheme to run, noise model, seed, solver knobs,
// and where artifacts go.
struct ExperimentConfig {
  Scenario scenario;
  Scheme scheme = Scheme::ROBUST;
  NoiseKind noise = NoiseKind::UNIFORM_BALL;
  std::uint64_t seed = 1;
  MultiplierMode multipliers = MultiplierMode::FULL_MULTIPLIERS;
  int max_online_blocks = -1;
  SolverOptions solver;
  std::string out_dir;

  MpcConfig mpc() const;
};

// Built-in scenario with default run options.
ExperimentConfig default_experiment(const std::string& scenario_name);

// Parses a config file: "scenario" picks the builtin baseline, every other
// key overrides one field. Unknown keys are an error. ConfigError throughout.
ExperimentConfig parse_experiment(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);

// Writes every field explicitly, so the output parses back identically on
// its own, independent of builtin defaults.
std::string write_experiment(const ExperimentConfig& cfg);

const char* noise_name(NoiseKind kind);
NoiseKind noise_from_name(const std::string& name);
const char* multiplier_name(MultiplierMode mode);
MultiplierMode multiplier_from_name(const std::string& name);

}  // namespace ddmpc

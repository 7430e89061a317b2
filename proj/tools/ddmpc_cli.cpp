// Command-line front end: collect data, run closed-loop experiments, compare
// schemes, audit logged runs against their guarantees, and sweep the feasible
// noise bound.
//
// Exit codes: 0 success, 1 audit or run failure, 2 bad config or IO,
// 3 initial synthesis infeasible (including a cost cap c below lambda_min(Q)).

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ddmpc/analysis.hpp"
#include "ddmpc/config.hpp"
#include "ddmpc/consistency.hpp"
#include "ddmpc/controller.hpp"
#include "ddmpc/csv.hpp"
#include "ddmpc/errors.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/sdp.hpp"
#include "ddmpc/svg.hpp"

namespace fs = std::filesystem;
using namespace ddmpc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string scenario = "SUSPENSION";
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scheme;
  std::optional<double> c_value;
  std::optional<int> steps;
  std::optional<int> tf;
  std::optional<std::string> noise;
  std::optional<std::string> multipliers;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path,
                  "experiment config file (key = value lines)");
  cmd->add_option("--scenario", a.scenario,
                  "builtin scenario when no config is given (SUSPENSION, SCALAR)");
  cmd->add_option("--out", a.out_dir,
                  "output directory (default: $DDMPC_OUT or ./out)");
  cmd->add_option("--seed", a.seed, "root seed for excitation and noise");
  cmd->add_option("--scheme", a.scheme,
                  "controller scheme: ROBUST, ADAPTIVE, STATIC_FROM_T0");
  cmd->add_option("--c", a.c_value, "cost cap c (must exceed lambda_min(Q))");
  cmd->add_option("--steps", a.steps, "closed-loop steps");
  cmd->add_option("--tf", a.tf, "offline trajectory length");
  cmd->add_option("--noise", a.noise,
                  "disturbance model: UNIFORM_BALL, BOUNDARY, ZERO");
  cmd->add_option("--multipliers", a.multipliers,
                  "S-procedure multipliers: FULL or COMMON");
}

ExperimentConfig resolve(const CommonArgs& a) {
  ExperimentConfig cfg = a.config_path.empty()
                             ? default_experiment(a.scenario)
                             : load_experiment(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (a.scheme) cfg.scheme = scheme_from_name(*a.scheme);
  if (a.c_value) cfg.scenario.c = *a.c_value;
  if (a.steps) cfg.scenario.steps = *a.steps;
  if (a.tf) cfg.scenario.T_f = *a.tf;
  if (a.noise) cfg.noise = noise_from_name(*a.noise);
  if (a.multipliers) cfg.multipliers = multiplier_from_name(*a.multipliers);
  if (!a.out_dir.empty()) {
    cfg.out_dir = a.out_dir;
  } else if (cfg.out_dir.empty()) {
    const char* env = std::getenv("DDMPC_OUT");
    cfg.out_dir = env && *env ? env : "out";
  }
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory '" + cfg.out_dir +
                      "': " + ec.message());
  }
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

// Seed discipline: root seed drives excitation, root+1 the collection noise,
// root+2 the closed-loop noise. Keeps collect and run reproducible and
// independent.
DataRecord collect_data(const ExperimentConfig& cfg) {
  const Scenario& sc = cfg.scenario;
  Eigen::MatrixXd U =
      excitation_inputs(sc.plant.m(), sc.T_f, sc.input_low, sc.input_high,
                        cfg.seed);
  NoiseSampler noise(sc.plant.G, cfg.noise, cfg.seed + 1);
  return simulate(sc.plant, sc.x0, U, noise);
}

void write_collect_meta(const fs::path& dir, const ExperimentConfig& cfg,
                        const DataRecord& data) {
  KeyValueFile meta;
  meta.set_string("scenario", cfg.scenario.name);
  meta.set_string("plant_fingerprint", plant_fingerprint(cfg.scenario.plant));
  meta.set_string("seed", std::to_string(cfg.seed));
  meta.set_string("noise", noise_name(cfg.noise));
  meta.set_int("samples", data.length());
  meta.set_matrix("G", data.G.mat());
  meta.save((dir / "meta.cfg").string());
}

DataRecord load_or_collect(const ExperimentConfig& cfg,
                           const std::string& data_path, const fs::path& dir,
                           bool persist) {
  if (!data_path.empty()) {
    return DataRecord::from_csv(data_path, cfg.scenario.plant.G);
  }
  DataRecord data = collect_data(cfg);
  if (persist) {
    data.to_csv((dir / "data.csv").string());
    write_collect_meta(dir, cfg, data);
  }
  return data;
}

std::vector<svg::Series> state_series(const RunLog& log) {
  std::vector<svg::Series> out(log.n);
  for (int i = 0; i < log.n; ++i) out[i].label = "x_" + std::to_string(i);
  for (const auto& r : log.rows) {
    for (int i = 0; i < log.n; ++i) out[i].y.push_back(r.x(i));
  }
  return out;
}

std::vector<svg::Series> input_series(const RunLog& log) {
  std::vector<svg::Series> out(log.m);
  for (int i = 0; i < log.m; ++i) out[i].label = "u_" + std::to_string(i);
  for (const auto& r : log.rows) {
    for (int i = 0; i < log.m; ++i) out[i].y.push_back(r.u(i));
  }
  return out;
}

void write_run_plots(const fs::path& dir, const std::string& tag,
                     const RunLog& log, double theta) {
  svg::save((dir / ("states_" + tag + ".svg")).string(),
            svg::line_chart("closed-loop states (" + tag + ")", "step", "x",
                            state_series(log)));
  svg::save((dir / ("input_" + tag + ".svg")).string(),
            svg::line_chart("applied input (" + tag + ")", "step", "u",
                            input_series(log)));
  svg::Series v{"V = ||x||_P^2", {}};
  svg::Series g{"gamma*", {}};
  svg::Series th{"invariance threshold", {}};
  svg::Series cum{"cumulative stage cost", {}};
  double total = 0.0;
  for (const auto& r : log.rows) {
    v.y.push_back(r.V);
    g.y.push_back(r.gamma ? *r.gamma : std::nan(""));
    th.y.push_back(theta);
    total += r.stage_cost;
    cum.y.push_back(total);
  }
  svg::save((dir / ("value_" + tag + ".svg")).string(),
            svg::line_chart("certified value along the run (" + tag + ")",
                            "step", "log scale", {v, g, th}, true));
  svg::save((dir / ("cost_" + tag + ".svg")).string(),
            svg::line_chart("accumulated cost (" + tag + ")", "step", "cost",
                            {cum}));
}

void print_metrics(const std::string& tag, const RunLog& log) {
  Metrics m = closed_loop_metrics(log);
  std::cout << tag << ": total cost " << csv::format(m.total_cost)
            << ", mean solve " << csv::format(m.mean_solve_ms) << " ms";
  if (m.rpi_entry_step) {
    std::cout << ", froze at step " << *m.rpi_entry_step;
  } else {
    std::cout << ", never froze";
  }
  std::cout << ", worst constraint margin " << csv::format(m.worst_margin)
            << "\n";
}

int cmd_collect(const CommonArgs& args) {
  ExperimentConfig cfg = resolve(args);
  fs::path dir = prepare_out(cfg);
  DataRecord data = collect_data(cfg);
  data.to_csv((dir / "data.csv").string());
  write_collect_meta(dir, cfg, data);
  write_text(dir / "experiment.cfg", write_experiment(cfg));
  std::cout << "collected " << data.length() << " samples from scenario "
            << cfg.scenario.name << " into " << (dir / "data.csv").string()
            << "\n";
  return 0;
}

int cmd_run(const CommonArgs& args, const std::string& data_path) {
  ExperimentConfig cfg = resolve(args);
  fs::path dir = prepare_out(cfg);
  DataRecord data = load_or_collect(cfg, data_path, dir, true);
  ConsistencySet set = ConsistencySet::build_offline(data, cfg.multipliers);
  MpcConfig mpc = cfg.mpc();
  NoiseSampler noise(cfg.scenario.plant.G, cfg.noise, cfg.seed + 2);
  ClosedLoopResult res =
      run_closed_loop(cfg.scenario.plant, mpc, cfg.scheme, cfg.scenario.x0,
                      cfg.scenario.steps, noise, set);
  std::string tag = scheme_name(cfg.scheme);
  res.log.to_csv((dir / ("run_" + tag + ".csv")).string());
  write_run_plots(dir, tag, res.log, mpc.rpi_threshold(set));
  write_text(dir / "experiment.cfg", write_experiment(cfg));
  print_metrics(tag, res.log);
  std::cout << "log: " << (dir / ("run_" + tag + ".csv")).string() << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args, const std::string& data_path) {
  ExperimentConfig cfg = resolve(args);
  fs::path dir = prepare_out(cfg);
  DataRecord data = load_or_collect(cfg, data_path, dir, true);
  ConsistencySet set = ConsistencySet::build_offline(data, cfg.multipliers);
  MpcConfig mpc = cfg.mpc();
  double theta = mpc.rpi_threshold(set);

  std::ostringstream table;
  table << "scheme,total_cost,mean_solve_ms,rpi_entry_step,worst_margin,"
           "gamma_0\n";
  std::vector<svg::Series> costs;
  std::vector<svg::Series> values;
  for (Scheme scheme :
       {Scheme::ROBUST, Scheme::ADAPTIVE, Scheme::STATIC_FROM_T0}) {
    // Same disturbance sequence for every scheme, so costs are comparable.
    NoiseSampler noise(cfg.scenario.plant.G, cfg.noise, cfg.seed + 2);
    ClosedLoopResult res =
        run_closed_loop(cfg.scenario.plant, mpc, scheme, cfg.scenario.x0,
                        cfg.scenario.steps, noise, set);
    std::string tag = scheme_name(scheme);
    res.log.to_csv((dir / ("run_" + tag + ".csv")).string());
    write_run_plots(dir, tag, res.log, theta);
    print_metrics(tag, res.log);
    Metrics m = closed_loop_metrics(res.log);
    table << tag << "," << csv::format(m.total_cost) << ","
          << csv::format(m.mean_solve_ms) << ","
          << (m.rpi_entry_step ? std::to_string(*m.rpi_entry_step) : "") << ","
          << csv::format(m.worst_margin) << ","
          << (res.log.rows.front().gamma
                  ? csv::format(*res.log.rows.front().gamma)
                  : "")
          << "\n";
    svg::Series cum{tag, {}};
    double total = 0.0;
    for (const auto& r : res.log.rows) {
      total += r.stage_cost;
      cum.y.push_back(total);
    }
    costs.push_back(std::move(cum));
    svg::Series v{tag, {}};
    for (const auto& r : res.log.rows) v.y.push_back(r.V);
    values.push_back(std::move(v));
  }
  write_text(dir / "compare.csv", table.str());
  svg::save((dir / "compare_cost.svg").string(),
            svg::line_chart("accumulated cost by scheme", "step", "cost",
                            costs));
  svg::save((dir / "compare_value.svg").string(),
            svg::line_chart("certified value by scheme", "step", "log scale",
                            values, true));
  write_text(dir / "experiment.cfg", write_experiment(cfg));
  std::cout << "comparison table: " << (dir / "compare.csv").string() << "\n";
  return 0;
}

int cmd_audit(const CommonArgs& args, const std::string& data_path,
              const std::string& log_path) {
  ExperimentConfig cfg = resolve(args);
  fs::path dir = prepare_out(cfg);
  if (data_path.empty() || log_path.empty()) {
    throw ConfigError("audit needs --data and --log");
  }
  DataRecord data = DataRecord::from_csv(data_path, cfg.scenario.plant.G);
  RunLog log = RunLog::from_csv(log_path);
  ConsistencySet set = ConsistencySet::build_offline(data, cfg.multipliers);
  MpcConfig mpc = cfg.mpc();
  double theta = mpc.rpi_threshold(set);

  std::vector<Certificate> certs =
      replay_certificates(log, set, mpc, cfg.scheme);
  AuditReport report = audit_closed_loop(log, certs, mpc, theta);

  auto [A_ls, B_ls] = least_squares_model(data);
  if (set.is_member(A_ls, B_ls, kPsdTol) && !certs.empty()) {
    SampleAuditOptions opt;
    opt.seed = cfg.seed;
    opt.parallel = cfg.solver.parallel;
    report.merge(verify_certificate(certs.front(), set, mpc.weights, mpc.c,
                                    A_ls, B_ls, log.rows.front().x, opt));
    report.merge(verify_cost_bound(certs.front(), set, mpc.weights, A_ls, B_ls,
                                   log.rows.front().x, opt));
  } else {
    std::cout << "note: least-squares model is outside the consistency set; "
                 "skipping sampled-model checks\n";
  }
  if (!certs.empty()) {
    report.merge(verify_sprocedure_constraints(certs.front(), mpc.constraints,
                                               200, cfg.seed));
  }
  report.title = "audit of " + log_path;
  write_text(dir / "audit.txt", report.text());
  write_text(dir / "audit.csv", report.csv());
  std::cout << report.text();
  return report.pass() ? 0 : 1;
}

int cmd_sweep(const CommonArgs& args, const std::string& data_path) {
  ExperimentConfig cfg = resolve(args);
  fs::path dir = prepare_out(cfg);
  DataRecord data = load_or_collect(cfg, data_path, dir, true);
  MpcConfig mpc = cfg.mpc();
  const int n = cfg.scenario.plant.n();

  auto feasible = [&](double radius) -> std::optional<double> {
    SymMatrix G_probe(Eigen::MatrixXd::Identity(n, n) / (radius * radius));
    DataRecord probe = DataRecord::make(data.U, data.X, G_probe);
    ConsistencySet set = ConsistencySet::build_offline(probe, cfg.multipliers);
    SdpProblem prob = assemble_robust(set, cfg.scenario.x0, mpc.weights,
                                      mpc.constraints, mpc.c, mpc.solver);
    SdpSolution sol = solve(prob, mpc.solver);
    if (sol.status == SolveStatus::OPTIMAL) return sol.gamma;
    return std::nullopt;
  };

  double r_true =
      1.0 / std::sqrt(min_eigenvalue(cfg.scenario.plant.G));
  std::ostringstream table;
  table << "radius,feasible,gamma\n";
  auto probe_row = [&](double r, std::optional<double> g) {
    table << csv::format(r) << "," << (g ? 1 : 0) << ","
          << (g ? csv::format(*g) : "") << "\n";
    std::cout << "radius " << csv::format(r) << ": "
              << (g ? "feasible, gamma " + csv::format(*g) : "infeasible")
              << "\n";
  };

  double lo = r_true;
  auto g0 = feasible(lo);
  probe_row(lo, g0);
  if (!g0) {
    write_text(dir / "sweep.csv", table.str());
    std::cout << "synthesis already infeasible at the data's own noise "
                 "radius\n";
    return 1;
  }
  double hi = lo;
  bool found_infeasible = false;
  for (int k = 0; k < 40; ++k) {
    hi *= 2.0;
    auto g = feasible(hi);
    probe_row(hi, g);
    if (!g) {
      found_infeasible = true;
      break;
    }
    lo = hi;
  }
  if (found_infeasible) {
    while (hi - lo > 0.005 * hi) {
      double mid = 0.5 * (lo + hi);
      auto g = feasible(mid);
      probe_row(mid, g);
      if (g) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  double mag = std::pow(10.0, std::floor(std::log10(lo)) - 1.0);
  double rounded = std::round(lo / mag) * mag;
  write_text(dir / "sweep.csv", table.str());
  std::cout << "largest feasible noise radius: " << csv::format(rounded)
            << (found_infeasible ? "" : " (search cap, not a boundary)")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "data-driven min-max predictive control of an unknown linear plant"};
  app.require_subcommand(1);

  CommonArgs collect_args, run_args, compare_args, audit_args, sweep_args;
  std::string run_data, compare_data, audit_data, audit_log, sweep_data;

  CLI::App* collect =
      app.add_subcommand("collect", "simulate the plant and record data");
  add_common(collect, collect_args);

  CLI::App* run = app.add_subcommand("run", "run one closed-loop experiment");
  add_common(run, run_args);
  run->add_option("--data", run_data, "existing data CSV (else collects)");

  CLI::App* compare =
      app.add_subcommand("compare", "run all schemes on the same data");
  add_common(compare, compare_args);
  compare->add_option("--data", compare_data,
                      "existing data CSV (else collects)");

  CLI::App* audit = app.add_subcommand(
      "audit", "re-derive certificates for a logged run and check guarantees");
  add_common(audit, audit_args);
  audit->add_option("--data", audit_data, "data CSV the run was built on")
      ->required();
  audit->add_option("--log", audit_log, "run log CSV to audit")->required();

  CLI::App* sweep = app.add_subcommand(
      "sweep", "bisect the largest noise radius with feasible synthesis");
  add_common(sweep, sweep_args);
  sweep->add_option("--data", sweep_data, "existing data CSV (else collects)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (collect->parsed()) return cmd_collect(collect_args);
    if (run->parsed()) return cmd_run(run_args, run_data);
    if (compare->parsed()) return cmd_compare(compare_args, compare_data);
    if (audit->parsed()) return cmd_audit(audit_args, audit_data, audit_log);
    if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_data);
  } catch (const CTooSmall& e) {
    std::cerr << "error: " << e.what()
              << "\nthe cost cap c must exceed lambda_min(Q); pick a larger "
                 "--c\n";
    return 3;
  } catch (const InitialInfeasible& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

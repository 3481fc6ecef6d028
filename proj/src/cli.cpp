#include "nhidapbc/cli.hpp"

#include "nhidapbc/io.hpp"
#include "nhidapbc/log.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace nhidapbc {

namespace fs = std::filesystem;

namespace {

int severity(ExitCode code) {
  switch (code) {
    case ExitCode::ConfigError: return 4;
    case ExitCode::NumericalFailure: return 3;
    case ExitCode::NotConverged: return 2;
    case ExitCode::ValidationFailed: return 1;
    case ExitCode::Converged: return 0;
  }
  return 0;
}

void write_outputs(const Scenario& scenario, const RunResult& result, const fs::path& out_dir,
                   const Defaults& defaults) {
  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "trajectory.csv");
    write_trajectory_csv(scenario, result.log, csv);
  }
  {
    std::ofstream report(out_dir / "report.json");
    report << report_to_json(result.report, defaults_table(defaults)).dump(2) << '\n';
  }
  write_plot_data(scenario, result.log, out_dir / "plotdata");
}

}  // namespace

ExitCode run_scenario(const fs::path& path, const fs::path& out_dir, const RunOptions& options, std::ostream& err) {
  Defaults defaults;
  Scenario scenario;
  try {
    scenario = load_scenario(path, defaults);
    if (options.dt) {
      if (!(*options.dt > 0.0)) throw ScenarioError("--dt", "must be positive");
      scenario.integrator.dt = *options.dt;
    }
    if (options.t_final) {
      if (!(*options.t_final >= 0.0)) throw ScenarioError("--t-final", "must be non-negative");
      scenario.integrator.t_final = *options.t_final;
    }
  } catch (const ScenarioError& e) {
    err << path.string() << ": " << e.what() << '\n';
    return ExitCode::ConfigError;
  }

  log::info("running " + path.string());
  const RunResult result = run(scenario);
  try {
    write_outputs(scenario, result, out_dir, defaults);
  } catch (const std::exception& e) {
    err << out_dir.string() << ": " << e.what() << '\n';
    return ExitCode::ConfigError;
  }

  const auto& r = result.report;
  if (r.termination == "numerical_failure") {
    err << path.string() << ": numerical failure at t=" << r.final_time << ": " << r.diagnostic << '\n';
    return ExitCode::NumericalFailure;
  }
  if (!r.all_converged) {
    log::warn(path.string() + ": not converged at t=" + format_plain(r.final_time));
    return ExitCode::NotConverged;
  }
  log::info(path.string() + ": converged at t=" + format_plain(r.final_time));
  return ExitCode::Converged;
}

ExitCode run_command(const std::vector<fs::path>& paths, const fs::path& out_dir, const RunOptions& options,
                     std::ostream& err) {
  if (paths.empty()) return ExitCode::ConfigError;
  if (paths.size() == 1) return run_scenario(paths.front(), out_dir, options, err);

  std::vector<ExitCode> codes(paths.size(), ExitCode::Converged);
  std::vector<std::ostringstream> errors(paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < paths.size(); i = next++)
      codes[i] = run_scenario(paths[i], out_dir / paths[i].stem(), options, errors[i]);
  };
  const int jobs = std::clamp(options.jobs, 1, static_cast<int>(paths.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExitCode worst = ExitCode::Converged;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    err << errors[i].str();
    if (severity(codes[i]) > severity(worst)) worst = codes[i];
  }
  return worst;
}

ExitCode validate_agents(const std::vector<Agent>& agents, std::ostream& out, const ValidateSampling& sampling) {
  bool ok = true;
  out << std::scientific << std::setprecision(3);
  for (const auto& agent : agents) {
    const PcdStructure<double>* pcd = agent.pcd ? &*agent.pcd : nullptr;
    const PcdReport report = validate_pcd(agent.model, pcd, sampling.pcd);
    if (!report.applicable && report.checks.empty()) {
      out << agent.id << ": PCD n/a (" << report.note << ")\n";
    } else {
      if (!report.applicable) out << agent.id << ": " << report.note << '\n';
      for (const auto& c : report.checks) {
        out << agent.id << ": " << (c.pass ? "ok   " : "FAIL ") << c.name << "  max residual " << c.max_residual
            << '\n';
        ok = ok && c.pass;
      }
      if (!report.passed()) continue;
    }

    // Matching conditions along random states in both potential branches.
    std::mt19937_64 rng(sampling.pcd.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double kinetic = 0.0, potential = 0.0;
    try {
      for (int i = 0; i < sampling.matching_samples; ++i) {
        ReducedState<double> x;
        x.q = Eigen::VectorXd::NullaryExpr(agent.model.n, [&] { return 3.0 * u(rng); });
        x.p_tilde = Eigen::VectorXd::NullaryExpr(agent.model.reduced_dim(), [&] { return u(rng); });
        Eigen::VectorXd grad;
        if (pcd) {
          PotentialMode mode;
          mode.branch = i % 2 == 0 ? Branch::ConstrainedStabilization : Branch::UnconstrainedStabilization;
          grad = evaluate_desired_potential(*pcd, agent.cfg, mode, x.q, agent.goal).grad;
        } else {
          grad = evaluate_holonomic_potential(agent.cfg, x.q, agent.goal).grad;
        }
        const auto res = matching_residuals(agent.model, agent.cfg, x, grad);
        if (res.kinetic.size() > 0) kinetic = std::max(kinetic, res.kinetic.cwiseAbs().maxCoeff());
        if (res.potential.size() > 0) potential = std::max(potential, res.potential.cwiseAbs().maxCoeff());
      }
    } catch (const std::exception& e) {
      out << agent.id << ": FAIL matching: " << e.what() << '\n';
      ok = false;
      continue;
    }
    const bool pass = kinetic <= sampling.matching_tolerance && potential <= sampling.matching_tolerance;
    out << agent.id << ": " << (pass ? "ok   " : "FAIL ") << "matching conditions  max residual "
        << std::max(kinetic, potential) << '\n';
    ok = ok && pass;
  }
  out << std::defaultfloat;
  return ok ? ExitCode::Converged : ExitCode::ValidationFailed;
}

ExitCode validate_command(const fs::path& path, std::ostream& out, std::ostream& err) {
  Scenario scenario;
  try {
    scenario = load_scenario(path);
  } catch (const ScenarioError& e) {
    err << path.string() << ": " << e.what() << '\n';
    return ExitCode::ConfigError;
  }
  return validate_agents(scenario.agents, out);
}

}  // namespace nhidapbc

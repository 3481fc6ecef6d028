#pragma once

// Command implementations behind the nhidapbc executable.

#include "nhidapbc/scenario.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

namespace nhidapbc {

enum class ExitCode : int {
  Converged = 0,
  ValidationFailed = 1,
  NotConverged = 2,
  ConfigError = 3,
  NumericalFailure = 4,
};

struct RunOptions {
  std::optional<double> dt;
  std::optional<double> t_final;
  int jobs = 1;
};

/// Simulates one scenario and writes trajectory.csv, report.json and plotdata/
/// into `out_dir`.
ExitCode run_scenario(const std::filesystem::path& path, const std::filesystem::path& out_dir,
                      const RunOptions& options, std::ostream& err);

/// Runs every file; with more than one file each gets out_dir/<stem>. The
/// combined exit code is the most severe one (3 > 4 > 2 > 0).
ExitCode run_command(const std::vector<std::filesystem::path>& paths, const std::filesystem::path& out_dir,
                     const RunOptions& options, std::ostream& err);

struct ValidateSampling {
  PcdSampling pcd;
  int matching_samples = 200;
  double matching_tolerance = 1e-8;
};

/// PCD assumptions and matching residuals per agent, no simulation.
ExitCode validate_agents(const std::vector<Agent>& agents, std::ostream& out, const ValidateSampling& sampling = {});
ExitCode validate_command(const std::filesystem::path& path, std::ostream& out, std::ostream& err);

}  // namespace nhidapbc

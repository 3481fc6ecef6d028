#include "nhidapbc/cli.hpp"

#include <iostream>

#include "CLI11.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Distributed IDA-PBC simulator for nonholonomic agents"};
  app.require_subcommand(1);

  std::vector<std::filesystem::path> scenarios;
  std::filesystem::path out_dir;
  double dt = 0.0, t_final = 0.0;
  nhidapbc::RunOptions options;

  auto* run = app.add_subcommand("run", "simulate scenarios and write outputs");
  run->add_option("scenario", scenarios, "scenario JSON files")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory")->required();
  auto* dt_opt = run->add_option("--dt", dt, "override the integrator step [s]");
  auto* tf_opt = run->add_option("--t-final", t_final, "override the simulated duration [s]");
  run->add_option("--jobs", options.jobs, "scenario files run concurrently")->check(CLI::PositiveNumber);

  std::filesystem::path validate_path;
  auto* validate = app.add_subcommand("validate", "check decomposition assumptions and matching conditions");
  validate->add_option("scenario", validate_path, "scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(nhidapbc::ExitCode::ConfigError);
  }

  if (*run) {
    if (*dt_opt) options.dt = dt;
    if (*tf_opt) options.t_final = t_final;
    return static_cast<int>(nhidapbc::run_command(scenarios, out_dir, options, std::cerr));
  }
  return static_cast<int>(nhidapbc::validate_command(validate_path, std::cout, std::cerr));
}

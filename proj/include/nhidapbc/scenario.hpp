#pragma once

// Scenario files (JSON) and the defaults applied to anything they leave out.

#include "nhidapbc/sim.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace nhidapbc {

/// Parse or validation failure. `where` is "line:column" for syntax errors
/// and a field path such as agents[1].q0 for validation errors.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Values used when a scenario does not set a parameter.
struct Defaults {
  double dt = 1e-3;
  double t_final = 60.0;
  int log_every = 10;
  double weight_scale = 1.0;  // Q_s, Q_r, K_v = scale * identity
  double s_threshold = 1e-2;
  double sdot_threshold = 1e-2;
  double eta = 1.0;
  double rho0 = 1.0;
  double safety_radius = 0.3;
  double diff_drive_mass = 1.0;
  double diff_drive_inertia = 0.1;
  double gravity = 9.81;
};

nlohmann::json defaults_table(const Defaults& d = {});

Scenario scenario_from_json(const nlohmann::json& doc, const Defaults& defaults = {});
Scenario parse_scenario(const std::string& text, const Defaults& defaults = {});
Scenario load_scenario(const std::filesystem::path& path, const Defaults& defaults = {});

}  // namespace nhidapbc

#pragma once

// Deterministic fixed-step simulation of a team of agents under the
// distributed IDA-PBC law. Each step advances every agent's reduced
// dynamics with RK4; modes are held constant during the step and the switch
// supervisor runs once afterwards.

#include "nhidapbc/coop.hpp"
#include "nhidapbc/pcdpot.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nhidapbc {

struct Agent {
  std::string id;
  AgentKind kind = AgentKind::DiffDrive;
  MechanicalModel<double> model;
  std::optional<PcdStructure<double>> pcd;  // empty for holonomic agents
  CoopMap<double> coop;
  ControllerConfig<double> cfg;
  GoalSpec<double> goal;
  Eigen::VectorXd q0;
  Eigen::VectorXd p_tilde0;

  bool holonomic() const { return !pcd.has_value(); }
};

struct IntegratorSettings {
  double dt = 1e-3;
  double t_final = 60.0;
  int log_every = 10;
  bool stop_on_convergence = true;
};

struct CollisionSettings {
  bool enabled = false;
  double eta = 1.0;
  double rho0 = 1.0;
  double safety_radius = 0.3;
};

struct Scenario {
  std::string name;
  IntegratorSettings integrator;
  std::vector<Agent> agents;
  CoopGraph graph;
  CollisionSettings collision;
};

struct AgentState {
  Eigen::VectorXd q;
  Eigen::VectorXd p_tilde;
  PotentialMode mode;
};

struct ScenarioState {
  double t = 0.0;
  std::vector<AgentState> agents;
};

/// Thrown for NaN/Inf states, constraint drift past the abort level or
/// agents colliding; run() turns it into a numerical-failure report.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kConstraintWarnLevel = 1e-6;
inline constexpr double kConstraintAbortLevel = 1e-3;

/// Controls, rates and energies of every agent at one state.
struct Evaluation {
  std::vector<Eigen::VectorXd> tau;
  std::vector<ReducedRates<double>> rates;
  std::vector<double> h_d;  // per agent: kinetic + goal potential
  std::vector<Eigen::Vector3d> z;
  double coupling_energy = 0.0;
  double repulsive_energy = 0.0;

  double total_energy() const;
};

ScenarioState initial_state(const Scenario& scenario);
Evaluation evaluate(const Scenario& scenario, const ScenarioState& state);
ScenarioState step(const Scenario& scenario, const ScenarioState& state, double dt);

/// Mode flag written to logs: 1 or 2 for decomposed agents, 0 for holonomic ones.
int mode_flag(const Agent& agent, const AgentState& state);
bool agent_converged(const Scenario& scenario, const ScenarioState& state, std::size_t agent);

struct AgentSample {
  int mode = 0;
  Eigen::VectorXd q;
  Eigen::VectorXd p_tilde;
  Eigen::VectorXd tau;
  Eigen::Vector3d z = Eigen::Vector3d::Zero();
  double h_d = 0.0;
  double constraint_viol = 0.0;
};

struct LogSample {
  double t = 0.0;
  double total_energy = 0.0;
  std::vector<AgentSample> agents;
};

struct TrajectoryLog {
  std::vector<std::string> agent_ids;
  std::vector<LogSample> samples;
};

struct Violation {
  std::string kind;  // constraint_drift, energy_increase, separation
  double t = 0.0;
  std::string agent;
  double value = 0.0;
};

struct AgentReport {
  std::string id;
  std::string kind;
  bool converged = false;
  int final_mode = 0;
  std::optional<double> final_s_error;
  std::optional<double> final_r_error;
  double final_speed = 0.0;
  std::optional<double> switch_time;
};

struct RunReport {
  std::string scenario;
  std::string termination;  // converged, t_final, numerical_failure
  std::string diagnostic;
  bool all_converged = false;
  double final_time = 0.0;
  long steps = 0;
  double dt = 0.0;
  std::vector<AgentReport> agents;
  double max_constraint_violation = 0.0;
  double max_energy_increase = 0.0;
  std::optional<double> min_distance;
  ConsensusMetrics consensus;
  double wall_clock_s = 0.0;
  std::vector<Violation> violations;
};

struct RunResult {
  TrajectoryLog log;
  RunReport report;
  ScenarioState final_state;
};

RunResult run(const Scenario& scenario);

struct MonitorSettings {
  double constraint_drift = kConstraintAbortLevel;
  double energy_increase = 1e-6;
  std::optional<double> safety_radius;
};

std::vector<Violation> monitors(const TrajectoryLog& log, const MonitorSettings& settings = {});

}  // namespace nhidapbc

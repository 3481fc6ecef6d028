#include "nhidapbc/sim.hpp"

#include "nhidapbc/integrator.hpp"
#include "nhidapbc/log.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace nhidapbc {

namespace {

Eigen::VectorXd configuration_rate(const Agent& agent, const AgentState& state) {
  const Eigen::MatrixXd S = agent.model.annihilator(state.q);
  const Eigen::MatrixXd Mt = S.transpose() * agent.model.mass(state.q) * S;
  return S * Mt.llt().solve(state.p_tilde);
}

std::size_t packed_size(const Scenario& scenario) {
  std::size_t size = 0;
  for (const auto& a : scenario.agents)
    size += static_cast<std::size_t>(a.model.n + a.model.reduced_dim());
  return size;
}

Eigen::VectorXd pack(const Scenario& scenario, const ScenarioState& state) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(packed_size(scenario)));
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    const auto& s = state.agents[i];
    x.segment(offset, s.q.size()) = s.q;
    offset += s.q.size();
    x.segment(offset, s.p_tilde.size()) = s.p_tilde;
    offset += s.p_tilde.size();
  }
  return x;
}

void unpack(const Scenario& scenario, const Eigen::VectorXd& x, ScenarioState& state) {
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    const auto& model = scenario.agents[i].model;
    state.agents[i].q = x.segment(offset, model.n);
    offset += model.n;
    state.agents[i].p_tilde = x.segment(offset, model.reduced_dim());
    offset += model.reduced_dim();
  }
}

double pair_repulsion(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const CollisionSettings& c) {
  const Eigen::VectorXd other = b;
  const auto field = apf_repulsive<double>(Eigen::VectorXd(a), std::span<const Eigen::VectorXd>(&other, 1),
                                           c.eta, c.rho0);
  return field.energy;
}

double constraint_residual(const Agent& agent, const AgentState& state) {
  if (agent.model.k == 0) return 0.0;
  const Eigen::VectorXd p = reconstruct_full_momenta(agent.model, state.q, state.p_tilde);
  return constraint_violation(agent.model, FullState<double>{state.q, p}).cwiseAbs().maxCoeff();
}

double min_pair_distance(const std::vector<Eigen::Vector3d>& z) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = i + 1; j < z.size(); ++j) best = std::min(best, (z[i] - z[j]).norm());
  return best;
}

}  // namespace

double Evaluation::total_energy() const {
  double sum = coupling_energy + repulsive_energy;
  for (double h : h_d) sum += h;
  return sum;
}

ScenarioState initial_state(const Scenario& scenario) {
  ScenarioState state;
  state.agents.reserve(scenario.agents.size());
  for (const auto& a : scenario.agents) state.agents.push_back({a.q0, a.p_tilde0, PotentialMode{}});
  return state;
}

int mode_flag(const Agent& agent, const AgentState& state) {
  if (agent.holonomic()) return 0;
  return static_cast<int>(state.mode.branch);
}

Evaluation evaluate(const Scenario& scenario, const ScenarioState& state) {
  const std::size_t count = scenario.agents.size();
  Evaluation ev;
  ev.tau.resize(count);
  ev.rates.resize(count);
  ev.h_d.resize(count);
  ev.z.resize(count);
  for (std::size_t i = 0; i < count; ++i) ev.z[i] = scenario.agents[i].coop.z(state.agents[i].q);

  const std::span<const Eigen::Vector3d> zs(ev.z);
  if (!scenario.graph.edges().empty()) ev.coupling_energy = coupling_potential<double>(scenario.graph, zs);

  const auto& collision = scenario.collision;
  if (collision.enabled)
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = i + 1; j < count; ++j) ev.repulsive_energy += pair_repulsion(ev.z[i], ev.z[j], collision);

  std::vector<Eigen::VectorXd> others;
  for (std::size_t i = 0; i < count; ++i) {
    const Agent& agent = scenario.agents[i];
    const AgentState& st = state.agents[i];

    Eigen::Vector3d grad_z = -coupling_force_z<double>(scenario.graph, i, zs);
    double external_energy = incident_coupling_potential<double>(scenario.graph, i, zs);
    if (collision.enabled && count > 1) {
      others.clear();
      for (std::size_t j = 0; j < count; ++j)
        if (j != i) others.emplace_back(ev.z[j]);
      const auto field = apf_repulsive<double>(Eigen::VectorXd(ev.z[i]), others, collision.eta, collision.rho0);
      grad_z += field.grad;
      external_energy += field.energy;
    }
    const Eigen::VectorXd grad_q = agent.coop.jacobian(st.q).transpose() * grad_z;

    DesiredPotential<double> potential;
    if (agent.pcd) {
      const ExternalField<double> external{external_energy, agent.pcd->s_of(grad_q)};
      potential = evaluate_desired_potential(*agent.pcd, agent.cfg, st.mode, st.q, agent.goal, &external);
    } else {
      const ExternalField<double> external{external_energy, grad_q};
      potential = evaluate_holonomic_potential(agent.cfg, st.q, agent.goal, &external);
    }

    const ReducedState<double> rstate{st.q, st.p_tilde};
    ev.tau[i] = control_law(agent.model, agent.cfg, rstate, potential.grad);
    ev.rates[i] = reduced_rhs(agent.model, rstate, ev.tau[i]);
    ev.h_d[i] = desired_hamiltonian(agent.model, agent.cfg, rstate, potential.goal_value);
  }
  return ev;
}

ScenarioState step(const Scenario& scenario, const ScenarioState& state, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step size must be positive");
  ScenarioState scratch = state;
  const auto rhs = [&](const Eigen::VectorXd& x) {
    unpack(scenario, x, scratch);
    const Evaluation ev = evaluate(scenario, scratch);
    Eigen::VectorXd dx(x.size());
    Eigen::Index offset = 0;
    for (const auto& r : ev.rates) {
      dx.segment(offset, r.q_dot.size()) = r.q_dot;
      offset += r.q_dot.size();
      dx.segment(offset, r.p_tilde_dot.size()) = r.p_tilde_dot;
      offset += r.p_tilde_dot.size();
    }
    return dx;
  };

  const Eigen::VectorXd next = rk4_step(rhs, pack(scenario, state), dt);
  if (!next.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite state after step at t=" << state.t;
    throw NumericalFailure(msg.str());
  }

  ScenarioState out = state;
  unpack(scenario, next, out);
  out.t = state.t + dt;
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    const Agent& agent = scenario.agents[i];
    if (!agent.pcd) continue;
    auto& st = out.agents[i];
    const Eigen::VectorXd s_dot = agent.pcd->s_of(configuration_rate(agent, st));
    st.mode = switch_supervisor(st.mode, agent.pcd->s_of(st.q), agent.goal.s_star, s_dot, agent.cfg, out.t);
  }
  return out;
}

bool agent_converged(const Scenario& scenario, const ScenarioState& state, std::size_t i) {
  const Agent& agent = scenario.agents[i];
  const AgentState& st = state.agents[i];
  const double tol = agent.cfg.s_threshold;
  const double speed_tol = agent.cfg.sdot_threshold;
  const Eigen::VectorXd q_dot = configuration_rate(agent, st);
  if (q_dot.norm() >= speed_tol) return false;

  if (agent.goal.s_star) {
    if (agent.pcd) {
      if (st.mode.branch != Branch::UnconstrainedStabilization) return false;
      if ((agent.pcd->s_of(st.q) - *agent.goal.s_star).norm() >= tol) return false;
      if (agent.goal.r_star && (agent.pcd->r_of(st.q) - *agent.goal.r_star).norm() >= tol) return false;
    } else if ((st.q - *agent.goal.s_star).norm() >= tol) {
      return false;
    }
    return true;
  }
  const Eigen::Vector3d zi = agent.coop.z(st.q);
  for (const auto& [j, w] : scenario.graph.neighbors(i))
    if ((zi - scenario.agents[j].coop.z(state.agents[j].q)).norm() >= tol) return false;
  return true;
}

namespace {

LogSample make_sample(const Scenario& scenario, const ScenarioState& state, const Evaluation& ev,
                      const std::vector<double>& residuals) {
  LogSample sample;
  sample.t = state.t;
  sample.total_energy = ev.total_energy();
  sample.agents.reserve(scenario.agents.size());
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    const auto& st = state.agents[i];
    sample.agents.push_back({mode_flag(scenario.agents[i], st), st.q, st.p_tilde, ev.tau[i], ev.z[i], ev.h_d[i],
                             residuals[i]});
  }
  return sample;
}

AgentReport agent_report(const Scenario& scenario, const ScenarioState& state, std::size_t i, bool converged) {
  const Agent& agent = scenario.agents[i];
  const AgentState& st = state.agents[i];
  AgentReport r;
  r.id = agent.id;
  r.kind = to_string(agent.kind);
  r.converged = converged;
  r.final_mode = mode_flag(agent, st);
  r.switch_time = st.mode.switch_time;
  const Eigen::VectorXd q_dot = configuration_rate(agent, st);
  if (agent.pcd) {
    r.final_speed = agent.pcd->s_of(q_dot).norm();
    if (agent.goal.s_star) r.final_s_error = (agent.pcd->s_of(st.q) - *agent.goal.s_star).norm();
    if (agent.goal.r_star) r.final_r_error = (agent.pcd->r_of(st.q) - *agent.goal.r_star).norm();
  } else {
    r.final_speed = q_dot.norm();
    if (agent.goal.s_star) r.final_s_error = (st.q - *agent.goal.s_star).norm();
  }
  return r;
}

}  // namespace

RunResult run(const Scenario& scenario) {
  const auto started = std::chrono::steady_clock::now();
  const auto& integ = scenario.integrator;
  if (!(integ.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(integ.t_final >= 0.0)) throw std::invalid_argument("t_final must be non-negative");
  if (scenario.agents.empty()) throw std::invalid_argument("scenario has no agents");

  RunResult result;
  RunReport& report = result.report;
  report.scenario = scenario.name;
  report.dt = integ.dt;
  for (const auto& a : scenario.agents) result.log.agent_ids.push_back(a.id);

  const long total_steps = std::lround(integ.t_final / integ.dt);
  const int log_every = std::max(1, integ.log_every);
  const std::size_t count = scenario.agents.size();

  ScenarioState state = initial_state(scenario);
  std::vector<bool> converged(count, false);
  bool constraint_warned = false;
  report.termination = "t_final";

  auto residuals_of = [&](const ScenarioState& s) {
    std::vector<double> res(count);
    for (std::size_t i = 0; i < count; ++i) {
      res[i] = constraint_residual(scenario.agents[i], s.agents[i]);
      report.max_constraint_violation = std::max(report.max_constraint_violation, res[i]);
      if (res[i] > kConstraintAbortLevel)
        throw NumericalFailure("constraint drift " + std::to_string(res[i]) + " on agent '" +
                               scenario.agents[i].id + "' exceeds abort level");
      if (res[i] > kConstraintWarnLevel && !constraint_warned) {
        constraint_warned = true;
        log::warn("constraint drift " + std::to_string(res[i]) + " on agent '" + scenario.agents[i].id + "'");
      }
    }
    return res;
  };
  auto track_distance = [&](const Evaluation& ev) {
    if (count < 2) return;
    const double d = min_pair_distance(ev.z);
    report.min_distance = report.min_distance ? std::min(*report.min_distance, d) : d;
  };

  try {
    Evaluation ev = evaluate(scenario, state);
    track_distance(ev);
    result.log.samples.push_back(make_sample(scenario, state, ev, residuals_of(state)));

    for (long n = 1; n <= total_steps; ++n) {
      ScenarioState next = step(scenario, state, integ.dt);
      next.t = static_cast<double>(n) * integ.dt;
      Evaluation next_ev = evaluate(scenario, next);
      const auto residuals = residuals_of(next);

      bool switched = false;
      for (std::size_t i = 0; i < count; ++i)
        switched = switched || next.agents[i].mode.branch != state.agents[i].mode.branch;
      if (!switched)
        report.max_energy_increase =
            std::max(report.max_energy_increase, next_ev.total_energy() - ev.total_energy());
      track_distance(next_ev);

      state = std::move(next);
      ev = std::move(next_ev);
      report.steps = n;
      const bool last = n == total_steps;
      if (n % log_every == 0 || last) result.log.samples.push_back(make_sample(scenario, state, ev, residuals));

      bool all = true;
      for (std::size_t i = 0; i < count; ++i) {
        converged[i] = agent_converged(scenario, state, i);
        all = all && converged[i];
      }
      if (all && integ.stop_on_convergence) {
        report.termination = "converged";
        if (n % log_every != 0 && !last) result.log.samples.push_back(make_sample(scenario, state, ev, residuals));
        break;
      }
    }
  } catch (const NumericalFailure& e) {
    report.termination = "numerical_failure";
    report.diagnostic = e.what();
  } catch (const CollisionError& e) {
    report.termination = "numerical_failure";
    report.diagnostic = std::string("collision: ") + e.what();
  } catch (const ModelError& e) {
    report.termination = "numerical_failure";
    report.diagnostic = std::string("model: ") + e.what();
  }

  report.final_time = state.t;
  report.all_converged = report.termination != "numerical_failure";
  for (std::size_t i = 0; i < count; ++i) {
    if (report.termination != "numerical_failure") converged[i] = agent_converged(scenario, state, i);
    report.all_converged = report.all_converged && converged[i];
    report.agents.push_back(agent_report(scenario, state, i, converged[i]));
  }
  std::vector<Eigen::Vector3d> z(count);
  for (std::size_t i = 0; i < count; ++i) z[i] = scenario.agents[i].coop.z(state.agents[i].q);
  report.consensus = consensus_metrics<double>(scenario.graph, std::span<const Eigen::Vector3d>(z));

  MonitorSettings monitor_settings;
  if (scenario.collision.enabled) monitor_settings.safety_radius = scenario.collision.safety_radius;
  report.violations = monitors(result.log, monitor_settings);

  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.final_state = std::move(state);
  return result;
}

std::vector<Violation> monitors(const TrajectoryLog& log, const MonitorSettings& settings) {
  std::vector<Violation> out;
  for (std::size_t n = 0; n < log.samples.size(); ++n) {
    const auto& sample = log.samples[n];
    for (std::size_t i = 0; i < sample.agents.size(); ++i)
      if (sample.agents[i].constraint_viol > settings.constraint_drift)
        out.push_back({"constraint_drift", sample.t, log.agent_ids[i], sample.agents[i].constraint_viol});

    if (settings.safety_radius)
      for (std::size_t i = 0; i < sample.agents.size(); ++i)
        for (std::size_t j = i + 1; j < sample.agents.size(); ++j) {
          const double d = (sample.agents[i].z - sample.agents[j].z).norm();
          if (d < *settings.safety_radius)
            out.push_back({"separation", sample.t, log.agent_ids[i] + "/" + log.agent_ids[j], d});
        }

    if (n == 0) continue;
    const auto& prev = log.samples[n - 1];
    bool switched = false;
    for (std::size_t i = 0; i < sample.agents.size(); ++i)
      switched = switched || sample.agents[i].mode != prev.agents[i].mode;
    const double increase = sample.total_energy - prev.total_energy;
    if (!switched && increase > settings.energy_increase)
      out.push_back({"energy_increase", sample.t, "", increase});
  }
  return out;
}

}  // namespace nhidapbc

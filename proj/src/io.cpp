#include "nhidapbc/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace nhidapbc {

using nlohmann::json;

std::string format_plain(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";
  // Round to 12 significant digits first so the exponent accounts for carries
  // such as 9.99999999999995 -> 10.
  char sci[32];
  std::snprintf(sci, sizeof sci, "%.11e", value);
  const double rounded = std::strtod(sci, nullptr);
  const int exponent = static_cast<int>(std::floor(std::log10(std::fabs(rounded))));
  const int decimals = std::max(0, 11 - exponent);
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
  return buf;
}

namespace {

struct Columns {
  Eigen::Index q = 0, p = 0, tau = 0;
};

Columns column_counts(const Scenario& scenario) {
  Columns c;
  for (const auto& a : scenario.agents) {
    c.q = std::max(c.q, a.model.n);
    c.p = std::max(c.p, a.model.reduced_dim());
    c.tau = std::max(c.tau, a.model.m);
  }
  return c;
}

void write_block(std::ostream& out, const Eigen::VectorXd& v, Eigen::Index width) {
  for (Eigen::Index i = 0; i < width; ++i) {
    out << ',';
    if (i < v.size()) out << format_plain(v(i));
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& node) {
  if (node.is_null()) return std::nullopt;
  return node.get<double>();
}

}  // namespace

void write_trajectory_csv(const Scenario& scenario, const TrajectoryLog& log, std::ostream& out) {
  const Columns c = column_counts(scenario);
  out << "t,agent,mode";
  for (Eigen::Index i = 0; i < c.q; ++i) out << ",q" << i;
  for (Eigen::Index i = 0; i < c.p; ++i) out << ",ptilde" << i;
  for (Eigen::Index i = 0; i < c.tau; ++i) out << ",tau" << i;
  out << ",H_d,constraint_viol\n";
  for (const auto& sample : log.samples) {
    for (std::size_t a = 0; a < sample.agents.size(); ++a) {
      const auto& s = sample.agents[a];
      out << format_plain(sample.t) << ',' << log.agent_ids[a] << ',' << s.mode;
      write_block(out, s.q, c.q);
      write_block(out, s.p_tilde, c.p);
      write_block(out, s.tau, c.tau);
      out << ',' << format_plain(s.h_d) << ',' << format_plain(s.constraint_viol) << '\n';
    }
  }
}

json report_to_json(const RunReport& r, const json& defaults) {
  json agents = json::array();
  for (const auto& a : r.agents) {
    agents.push_back({{"id", a.id},
                      {"kind", a.kind},
                      {"converged", a.converged},
                      {"final_mode", a.final_mode},
                      {"final_s_error", optional_number(a.final_s_error)},
                      {"final_r_error", optional_number(a.final_r_error)},
                      {"final_speed", a.final_speed},
                      {"switch_time", optional_number(a.switch_time)}});
  }
  json violations = json::array();
  for (const auto& v : r.violations)
    violations.push_back({{"kind", v.kind}, {"t", v.t}, {"agent", v.agent}, {"value", v.value}});
  return json{{"scenario", r.scenario},
              {"termination", r.termination},
              {"diagnostic", r.diagnostic},
              {"converged", r.all_converged},
              {"final_time", r.final_time},
              {"steps", r.steps},
              {"dt", r.dt},
              {"agents", agents},
              {"max_constraint_violation", r.max_constraint_violation},
              {"max_energy_increase", r.max_energy_increase},
              {"min_distance", optional_number(r.min_distance)},
              {"consensus", {{"max_disagreement", r.consensus.max_disagreement},
                             {"mean_disagreement", r.consensus.mean_disagreement}}},
              {"wall_clock_s", r.wall_clock_s},
              {"violations", violations},
              {"defaults", defaults}};
}

RunReport report_from_json(const json& doc) {
  RunReport r;
  r.scenario = doc.at("scenario").get<std::string>();
  r.termination = doc.at("termination").get<std::string>();
  r.diagnostic = doc.at("diagnostic").get<std::string>();
  r.all_converged = doc.at("converged").get<bool>();
  r.final_time = doc.at("final_time").get<double>();
  r.steps = doc.at("steps").get<long>();
  r.dt = doc.at("dt").get<double>();
  for (const auto& a : doc.at("agents")) {
    AgentReport ar;
    ar.id = a.at("id").get<std::string>();
    ar.kind = a.at("kind").get<std::string>();
    ar.converged = a.at("converged").get<bool>();
    ar.final_mode = a.at("final_mode").get<int>();
    ar.final_s_error = optional_from(a.at("final_s_error"));
    ar.final_r_error = optional_from(a.at("final_r_error"));
    ar.final_speed = a.at("final_speed").get<double>();
    ar.switch_time = optional_from(a.at("switch_time"));
    r.agents.push_back(std::move(ar));
  }
  r.max_constraint_violation = doc.at("max_constraint_violation").get<double>();
  r.max_energy_increase = doc.at("max_energy_increase").get<double>();
  r.min_distance = optional_from(doc.at("min_distance"));
  r.consensus.max_disagreement = doc.at("consensus").at("max_disagreement").get<double>();
  r.consensus.mean_disagreement = doc.at("consensus").at("mean_disagreement").get<double>();
  r.wall_clock_s = doc.at("wall_clock_s").get<double>();
  for (const auto& v : doc.at("violations"))
    r.violations.push_back({v.at("kind").get<std::string>(), v.at("t").get<double>(),
                            v.at("agent").get<std::string>(), v.at("value").get<double>()});
  return r;
}

void write_plot_data(const Scenario& scenario, const TrajectoryLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto series = [&](const std::string& name, auto&& x_of, auto&& y_of) {
    std::ofstream out(dir / (name + ".dat"));
    for (const auto& sample : log.samples) out << format_plain(x_of(sample)) << ' ' << format_plain(y_of(sample)) << '\n';
  };
  const auto time = [](const LogSample& s) { return s.t; };
  for (std::size_t a = 0; a < log.agent_ids.size(); ++a) {
    const std::string& id = log.agent_ids[a];
    const Agent& agent = scenario.agents[a];
    // Workspace path (x, y) of the cooperative variable.
    series("path_" + id, [a](const LogSample& s) { return s.agents[a].z(0); },
           [a](const LogSample& s) { return s.agents[a].z(1); });
    for (Eigen::Index i = 0; i < agent.model.n; ++i)
      series("q" + std::to_string(i) + "_" + id, time, [a, i](const LogSample& s) { return s.agents[a].q(i); });
    for (Eigen::Index i = 0; i < agent.model.m; ++i)
      series("tau" + std::to_string(i) + "_" + id, time, [a, i](const LogSample& s) { return s.agents[a].tau(i); });
    for (int c = 0; c < 3; ++c)
      series("z" + std::string(1, "xyz"[c]) + "_" + id, time, [a, c](const LogSample& s) { return s.agents[a].z(c); });
    series("Hd_" + id, time, [a](const LogSample& s) { return s.agents[a].h_d; });
  }
  series("energy_total", time, [](const LogSample& s) { return s.total_energy; });
}

}  // namespace nhidapbc

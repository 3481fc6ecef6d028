#include "nhidapbc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace nhidapbc {

using nlohmann::json;

namespace {

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return std::to_string(line) + ":" + std::to_string(column);
}

double number(const json& node, const std::string& path) {
  if (!node.is_number()) throw ScenarioError(path, "expected a number");
  const double v = node.get<double>();
  if (!std::isfinite(v)) throw ScenarioError(path, "must be finite");
  return v;
}

double positive(const json& node, const std::string& path) {
  const double v = number(node, path);
  if (!(v > 0.0)) throw ScenarioError(path, "must be positive");
  return v;
}

Eigen::VectorXd vector_of(const json& node, const std::string& path, Eigen::Index size) {
  if (!node.is_array()) throw ScenarioError(path, "expected an array of " + std::to_string(size) + " numbers");
  if (static_cast<Eigen::Index>(node.size()) != size)
    throw ScenarioError(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(node.size()));
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i)
    v(i) = number(node[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

// A weight is a scalar (times identity), a diagonal list or a full matrix.
Eigen::MatrixXd weight_of(const json& node, const std::string& path, Eigen::Index size) {
  Eigen::MatrixXd W;
  if (node.is_number()) {
    W = number(node, path) * Eigen::MatrixXd::Identity(size, size);
  } else if (node.is_array() && !node.empty() && node[0].is_array()) {
    if (static_cast<Eigen::Index>(node.size()) != size) throw ScenarioError(path, "matrix must be " + std::to_string(size) + "x" + std::to_string(size));
    W.resize(size, size);
    for (Eigen::Index i = 0; i < size; ++i)
      W.row(i) = vector_of(node[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]", size).transpose();
  } else {
    W = vector_of(node, path, size).asDiagonal();
  }
  if (!W.isApprox(W.transpose(), 1e-12)) throw ScenarioError(path, "weight must be symmetric");
  return W;
}

Eigen::MatrixXd positive_definite_weight(const json& node, const std::string& path, Eigen::Index size) {
  Eigen::MatrixXd W = weight_of(node, path, size);
  Eigen::LLT<Eigen::MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) throw ScenarioError(path, "weight must be positive definite");
  return W;
}

template <std::size_t N>
std::array<double, N> positive_array(const json& node, const std::string& path) {
  const Eigen::VectorXd v = vector_of(node, path, N);
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!(v(static_cast<Eigen::Index>(i)) > 0.0)) throw ScenarioError(path + "[" + std::to_string(i) + "]", "must be positive");
    out[i] = v(static_cast<Eigen::Index>(i));
  }
  return out;
}

void reject_unknown(const json& node, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : node.items())
    if (!allowed.count(key)) throw ScenarioError(path + "." + key, "unknown field");
}

Agent agent_from_json(const json& node, const std::string& path, const Defaults& d) {
  if (!node.is_object()) throw ScenarioError(path, "expected an object");
  reject_unknown(node, path, {"id", "kind", "params", "q0", "ptilde0", "goal", "controller"});
  Agent agent;
  if (!node.contains("id") || !node["id"].is_string() || node["id"].get<std::string>().empty())
    throw ScenarioError(path + ".id", "expected a non-empty string");
  agent.id = node["id"].get<std::string>();
  if (!node.contains("kind") || !node["kind"].is_string()) throw ScenarioError(path + ".kind", "expected a string");
  const std::string kind = node["kind"].get<std::string>();
  const json params = node.value("params", json::object());
  const std::string ppath = path + ".params";

  if (kind == "diff_drive" || kind == "knife_edge") {
    reject_unknown(params, ppath, {"mass", "inertia"});
    const double mass = params.contains("mass") ? positive(params["mass"], ppath + ".mass") : d.diff_drive_mass;
    const double inertia =
        params.contains("inertia") ? positive(params["inertia"], ppath + ".inertia") : d.diff_drive_inertia;
    auto built = kind == "diff_drive" ? build_diff_drive<double>(mass, inertia) : build_knife_edge<double>(mass, inertia);
    agent.kind = kind == "diff_drive" ? AgentKind::DiffDrive : AgentKind::KnifeEdge;
    agent.model = std::move(built.model);
    agent.pcd = std::move(built.pcd);
    agent.coop = planar_coop_map(*agent.pcd);
  } else if (kind == "arm3dof") {
    reject_unknown(params, ppath, {"link_masses", "link_lengths", "gravity", "base"});
    Arm3DofParams arm;
    arm.gravity = d.gravity;
    if (params.contains("link_masses")) arm.link_masses = positive_array<3>(params["link_masses"], ppath + ".link_masses");
    if (params.contains("link_lengths")) arm.link_lengths = positive_array<3>(params["link_lengths"], ppath + ".link_lengths");
    if (params.contains("gravity")) arm.gravity = positive(params["gravity"], ppath + ".gravity");
    if (params.contains("base")) {
      const Eigen::VectorXd b = vector_of(params["base"], ppath + ".base", 3);
      arm.base = {b(0), b(1), b(2)};
    }
    auto built = build_arm3dof<double>(arm);
    agent.kind = AgentKind::Arm3Dof;
    agent.coop = arm_coop_map(built);
    agent.model = std::move(built.model);
  } else {
    throw ScenarioError(path + ".kind", "unknown agent kind '" + kind + "' (diff_drive, knife_edge, arm3dof)");
  }

  const auto& model = agent.model;
  if (!node.contains("q0")) throw ScenarioError(path + ".q0", "missing initial configuration");
  agent.q0 = vector_of(node["q0"], path + ".q0", model.n);
  agent.p_tilde0 = node.contains("ptilde0") ? vector_of(node["ptilde0"], path + ".ptilde0", model.reduced_dim())
                                            : Eigen::VectorXd::Zero(model.reduced_dim());

  const Eigen::Index s_dim = agent.pcd ? agent.pcd->s_dim() : model.n;
  const Eigen::Index p_dim = agent.pcd ? agent.pcd->p_dim : 0;
  if (node.contains("goal") && !node["goal"].is_null()) {
    const json& goal = node["goal"];
    const std::string gpath = path + ".goal";
    if (!goal.is_object()) throw ScenarioError(gpath, "expected an object");
    if (agent.pcd) {
      reject_unknown(goal, gpath, {"s_star", "r_star"});
      if (goal.contains("s_star") && !goal["s_star"].is_null())
        agent.goal.s_star = vector_of(goal["s_star"], gpath + ".s_star", s_dim);
      if (goal.contains("r_star") && !(goal["r_star"].is_string() && goal["r_star"] == "free") &&
          !goal["r_star"].is_null())
        agent.goal.r_star = vector_of(goal["r_star"], gpath + ".r_star", p_dim);
    } else {
      reject_unknown(goal, gpath, {"q_star"});
      if (goal.contains("q_star") && !goal["q_star"].is_null())
        agent.goal.s_star = vector_of(goal["q_star"], gpath + ".q_star", model.n);
    }
  }

  auto& cfg = agent.cfg;
  const json ctl = node.value("controller", json::object());
  const std::string cpath = path + ".controller";
  reject_unknown(ctl, cpath, {"q_s", "q_r", "q_r_goal", "k_v", "s_threshold", "sdot_threshold", "r_forcing"});
  const double w = d.weight_scale;
  cfg.q_s = ctl.contains("q_s") ? positive_definite_weight(ctl["q_s"], cpath + ".q_s", s_dim)
                                : Eigen::MatrixXd(w * Eigen::MatrixXd::Identity(s_dim, s_dim));
  cfg.q_r = ctl.contains("q_r") ? positive_definite_weight(ctl["q_r"], cpath + ".q_r", model.k)
                                : Eigen::MatrixXd(w * Eigen::MatrixXd::Identity(model.k, model.k));
  cfg.q_r_goal = ctl.contains("q_r_goal") ? positive_definite_weight(ctl["q_r_goal"], cpath + ".q_r_goal", p_dim)
                                          : Eigen::MatrixXd(w * Eigen::MatrixXd::Identity(p_dim, p_dim));
  cfg.k_v = ctl.contains("k_v") ? positive_definite_weight(ctl["k_v"], cpath + ".k_v", model.m)
                                : Eigen::MatrixXd(w * Eigen::MatrixXd::Identity(model.m, model.m));
  cfg.s_threshold = ctl.contains("s_threshold") ? positive(ctl["s_threshold"], cpath + ".s_threshold") : d.s_threshold;
  cfg.sdot_threshold =
      ctl.contains("sdot_threshold") ? positive(ctl["sdot_threshold"], cpath + ".sdot_threshold") : d.sdot_threshold;
  if (ctl.contains("r_forcing")) {
    if (!ctl["r_forcing"].is_boolean()) throw ScenarioError(cpath + ".r_forcing", "expected a boolean");
    cfg.r_forcing = ctl["r_forcing"].get<bool>();
  }
  return agent;
}

}  // namespace

nlohmann::json defaults_table(const Defaults& d) {
  return json{{"dt", d.dt},
              {"t_final", d.t_final},
              {"log_every", d.log_every},
              {"q_s", "identity"},
              {"q_r", "identity"},
              {"q_r_goal", "identity"},
              {"k_v", "identity"},
              {"weight_scale", d.weight_scale},
              {"s_threshold", d.s_threshold},
              {"sdot_threshold", d.sdot_threshold},
              {"desired_mass", "reduced open-loop mass"},
              {"gyroscopic", "open-loop gyroscopic matrix"},
              {"collision", {{"enabled", false}, {"eta", d.eta}, {"rho0", d.rho0}, {"safety_radius", d.safety_radius}}},
              {"diff_drive", {{"mass", d.diff_drive_mass}, {"inertia", d.diff_drive_inertia}}},
              {"gravity", d.gravity}};
}

Scenario scenario_from_json(const json& doc, const Defaults& d) {
  if (!doc.is_object()) throw ScenarioError("$", "scenario must be a JSON object");
  reject_unknown(doc, "$", {"name", "integrator", "agents", "edges", "collision"});
  Scenario sc;
  sc.name = doc.value("name", std::string("scenario"));

  const json integ = doc.value("integrator", json::object());
  reject_unknown(integ, "integrator", {"dt", "t_final", "log_every", "stop_on_convergence"});
  sc.integrator.dt = integ.contains("dt") ? positive(integ["dt"], "integrator.dt") : d.dt;
  sc.integrator.t_final = integ.contains("t_final") ? number(integ["t_final"], "integrator.t_final") : d.t_final;
  if (sc.integrator.t_final < 0.0) throw ScenarioError("integrator.t_final", "must be non-negative");
  sc.integrator.log_every = d.log_every;
  if (integ.contains("log_every")) {
    if (!integ["log_every"].is_number_integer() || integ["log_every"].get<int>() < 1)
      throw ScenarioError("integrator.log_every", "expected a positive integer");
    sc.integrator.log_every = integ["log_every"].get<int>();
  }
  if (integ.contains("stop_on_convergence")) {
    if (!integ["stop_on_convergence"].is_boolean())
      throw ScenarioError("integrator.stop_on_convergence", "expected a boolean");
    sc.integrator.stop_on_convergence = integ["stop_on_convergence"].get<bool>();
  }

  if (!doc.contains("agents") || !doc["agents"].is_array()) throw ScenarioError("agents", "expected an array");
  if (doc["agents"].empty()) throw ScenarioError("agents", "at least one agent is required");
  std::set<std::string> ids;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < doc["agents"].size(); ++i) {
    const std::string path = "agents[" + std::to_string(i) + "]";
    Agent agent = agent_from_json(doc["agents"][i], path, d);
    if (!ids.insert(agent.id).second) throw ScenarioError(path + ".id", "duplicate agent id '" + agent.id + "'");
    order.push_back(agent.id);
    sc.agents.push_back(std::move(agent));
  }

  sc.graph = CoopGraph(order);
  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw ScenarioError("edges", "expected an array");
    for (std::size_t e = 0; e < doc["edges"].size(); ++e) {
      const std::string path = "edges[" + std::to_string(e) + "]";
      const json& edge = doc["edges"][e];
      if (!edge.is_object()) throw ScenarioError(path, "expected an object");
      reject_unknown(edge, path, {"i", "j", "weight"});
      for (const char* end : {"i", "j"}) {
        if (!edge.contains(end) || !edge[end].is_string()) throw ScenarioError(path + "." + end, "expected an agent id");
        if (!ids.count(edge[end].get<std::string>()))
          throw ScenarioError(path + "." + end, "edge references unknown agent '" + edge[end].get<std::string>() + "'");
      }
      const double weight = edge.contains("weight") ? positive(edge["weight"], path + ".weight") : 1.0;
      if (edge["i"] == edge["j"]) throw ScenarioError(path, "self-loop on agent '" + edge["i"].get<std::string>() + "'");
      sc.graph.add_edge(edge["i"].get<std::string>(), edge["j"].get<std::string>(), weight);
    }
  }

  sc.collision.eta = d.eta;
  sc.collision.rho0 = d.rho0;
  sc.collision.safety_radius = d.safety_radius;
  if (doc.contains("collision")) {
    const json& c = doc["collision"];
    if (!c.is_object()) throw ScenarioError("collision", "expected an object");
    reject_unknown(c, "collision", {"enabled", "eta", "rho0", "safety_radius"});
    if (c.contains("enabled")) {
      if (!c["enabled"].is_boolean()) throw ScenarioError("collision.enabled", "expected a boolean");
      sc.collision.enabled = c["enabled"].get<bool>();
    }
    if (c.contains("eta")) sc.collision.eta = positive(c["eta"], "collision.eta");
    if (c.contains("rho0")) sc.collision.rho0 = positive(c["rho0"], "collision.rho0");
    if (c.contains("safety_radius")) sc.collision.safety_radius = positive(c["safety_radius"], "collision.safety_radius");
  }
  return sc;
}

Scenario parse_scenario(const std::string& text, const Defaults& d) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(line_column(text, e.byte == 0 ? 0 : e.byte - 1), std::string("JSON syntax error: ") + e.what());
  }
  return scenario_from_json(doc, d);
}

Scenario load_scenario(const std::filesystem::path& path, const Defaults& d) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path.string(), "cannot open scenario file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), d);
}

}  // namespace nhidapbc

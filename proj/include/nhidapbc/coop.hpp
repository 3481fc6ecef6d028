#pragma once

// Cooperative layer. Agents exchange their cooperative variable z (workspace
// xyz) over an undirected graph. Each edge stores the quadratic potential
// 1/2 w_ij |z_i - z_j|^2, and the force on agent i is the negative gradient of
// the sum of its edge potentials with respect to q_i.

#include "nhidapbc/models.hpp"

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhidapbc {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
struct CoopVariable {
  Vector3<Scalar> z;
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> jacobian;  // dz/dq
};

/// z(q) and dz/dq for one agent.
template <typename Scalar>
struct CoopMap {
  std::function<Vector3<Scalar>(const VectorX<Scalar>&)> z;
  std::function<Eigen::Matrix<Scalar, 3, Eigen::Dynamic>(const VectorX<Scalar>&)> jacobian;
};

/// Planar mobile base: z = (x, y, 0).
template <typename Scalar>
CoopMap<Scalar> planar_coop_map(const PcdStructure<Scalar>& pcd) {
  const Eigen::Index n = pcd.n;
  const Eigen::Index ix = pcd.s_index.at(0);
  const Eigen::Index iy = pcd.s_index.at(1);
  CoopMap<Scalar> map;
  map.z = [ix, iy](const VectorX<Scalar>& q) { return Vector3<Scalar>(q(ix), q(iy), Scalar(0)); };
  map.jacobian = [n, ix, iy](const VectorX<Scalar>&) {
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> J = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>::Zero(3, n);
    J(0, ix) = Scalar(1);
    J(1, iy) = Scalar(1);
    return J;
  };
  return map;
}

/// Manipulator: z = end-effector position.
template <typename Scalar>
CoopMap<Scalar> arm_coop_map(const ArmModel<Scalar>& arm) {
  return {arm.fk, arm.fk_jac};
}

template <typename Scalar>
CoopVariable<Scalar> coop_variable(const CoopMap<Scalar>& map, const VectorX<Scalar>& q) {
  return {map.z(q), map.jacobian(q)};
}

class UnknownAgentError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Undirected weighted communication graph over agent indices.
class CoopGraph {
 public:
  struct Edge {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight = 1.0;
  };

  CoopGraph() = default;
  explicit CoopGraph(std::vector<std::string> ids) : ids_(std::move(ids)), adjacency_(ids_.size()) {}

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::size_t index_of(const std::string& id) const {
    for (std::size_t a = 0; a < ids_.size(); ++a)
      if (ids_[a] == id) return a;
    throw UnknownAgentError("unknown agent id '" + id + "'");
  }

  void add_edge(std::size_t i, std::size_t j, double weight) {
    if (i >= size() || j >= size()) throw UnknownAgentError("edge references an agent outside the graph");
    if (i == j) throw std::invalid_argument("self-loop on agent '" + ids_[i] + "'");
    if (!(weight > 0.0)) throw std::invalid_argument("edge weight must be positive");
    edges_.push_back({i, j, weight});
    adjacency_[i].push_back({j, weight});
    adjacency_[j].push_back({i, weight});
  }

  void add_edge(const std::string& a, const std::string& b, double weight) {
    add_edge(index_of(a), index_of(b), weight);
  }

  /// (neighbour index, weight) pairs.
  const std::vector<std::pair<std::size_t, double>>& neighbors(std::size_t i) const {
    if (i >= size()) throw UnknownAgentError("agent index out of range");
    return adjacency_[i];
  }

  bool connected() const {
    if (ids_.empty()) return true;
    std::vector<bool> seen(size(), false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      for (const auto& [b, w] : adjacency_[a])
        if (!seen[b]) {
          seen[b] = true;
          stack.push_back(b);
        }
    }
    for (bool s : seen)
      if (!s) return false;
    return true;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency_;
};

/// Consensus pull on agent i in z-space: -sum_j w_ij (z_i - z_j). Only the
/// entries of neighbours are read.
template <typename Scalar>
Vector3<Scalar> coupling_force_z(const CoopGraph& graph, std::size_t agent,
                                 std::span<const Vector3<Scalar>> all_z) {
  if (all_z.size() != graph.size()) throw std::invalid_argument("cooperative variable count mismatch");
  Vector3<Scalar> f = Vector3<Scalar>::Zero();
  for (const auto& [j, w] : graph.neighbors(agent)) f -= Scalar(w) * (all_z[agent] - all_z[j]);
  return f;
}

/// Generalized coupling force -(dz/dq)^T sum_j w_ij (z_i - z_j).
template <typename Scalar>
VectorX<Scalar> coupling_force(const CoopGraph& graph, std::size_t agent,
                               std::span<const Vector3<Scalar>> all_z,
                               const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& jacobian) {
  return jacobian.transpose() * coupling_force_z<Scalar>(graph, agent, all_z);
}

/// V_c = 1/2 sum over edges w_ij |z_i - z_j|^2.
template <typename Scalar>
Scalar coupling_potential(const CoopGraph& graph, std::span<const Vector3<Scalar>> all_z) {
  Scalar v = Scalar(0);
  for (const auto& e : graph.edges()) v += Scalar(0.5 * e.weight) * (all_z[e.i] - all_z[e.j]).squaredNorm();
  return v;
}

/// Potential of the edges incident to one agent.
template <typename Scalar>
Scalar incident_coupling_potential(const CoopGraph& graph, std::size_t agent,
                                   std::span<const Vector3<Scalar>> all_z) {
  Scalar v = Scalar(0);
  for (const auto& [j, w] : graph.neighbors(agent))
    v += Scalar(0.5 * w) * (all_z[agent] - all_z[j]).squaredNorm();
  return v;
}

struct ConsensusMetrics {
  double max_disagreement = 0.0;
  double mean_disagreement = 0.0;
};

/// Disagreement over the graph's edges.
template <typename Scalar>
ConsensusMetrics consensus_metrics(const CoopGraph& graph, std::span<const Vector3<Scalar>> all_z) {
  ConsensusMetrics out;
  if (graph.edges().empty()) return out;
  double sum = 0.0;
  for (const auto& e : graph.edges()) {
    const double d = static_cast<double>((all_z[e.i] - all_z[e.j]).norm());
    out.max_disagreement = std::max(out.max_disagreement, d);
    sum += d;
  }
  out.mean_disagreement = sum / static_cast<double>(graph.edges().size());
  return out;
}

/// Disagreement over every pair of agents.
template <typename Scalar>
ConsensusMetrics consensus_metrics(std::span<const Vector3<Scalar>> all_z) {
  ConsensusMetrics out;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < all_z.size(); ++i)
    for (std::size_t j = i + 1; j < all_z.size(); ++j) {
      const double d = static_cast<double>((all_z[i] - all_z[j]).norm());
      out.max_disagreement = std::max(out.max_disagreement, d);
      sum += d;
      ++pairs;
    }
  if (pairs > 0) out.mean_disagreement = sum / static_cast<double>(pairs);
  return out;
}

}  // namespace nhidapbc

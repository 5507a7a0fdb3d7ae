#include "sgr/graph.hpp"

#include <cmath>
#include <limits>

namespace sgr {

void Geometry::validate() const {
  auto fail = [](const std::string& rule) { throw ConfigError("geometry: violated " + rule); };
  if (!(r_a > 0)) fail("0 < r_a");
  if (!(r_a <= r_c)) fail("r_a <= r_c");
  if (!(r_c < r_z)) fail("r_c < r_z");
  if (!(r_z < r_s)) fail("r_z < r_s");
  if (!(eps >= 0)) fail("eps >= 0");
  if (!(eps <= r_s - r_z)) fail("eps <= r_s - r_z");
  if (!(d_s > 2 * r_c)) fail("d_s > 2*r_c");
}

Edge make_edge(int i, int j) { return i < j ? Edge{i, j} : Edge{j, i}; }

WeightedGraph::WeightedGraph(int n_nodes) : n_(n_nodes), weights_(Eigen::MatrixXd::Zero(n_nodes, n_nodes)) {
  if (n_nodes < 1) throw DimensionError("graph needs at least one node");
}

WeightedGraph::WeightedGraph(int n_nodes, const Eigen::MatrixXd& weights) : WeightedGraph(n_nodes) {
  if (weights.rows() != n_nodes || weights.cols() != n_nodes)
    throw DimensionError("weight matrix side does not match node count");
  for (int i = 0; i < n_nodes; ++i) {
    for (int j = i + 1; j < n_nodes; ++j) {
      const double w = weights(i, j);
      if (std::abs(w - weights(j, i)) > 1e-12) throw ConfigError("weight matrix must be symmetric");
      if (w < 0) throw ConfigError("weights must be non-negative");
      if (w > 0) set_edge(i, j, w);
    }
  }
}

bool WeightedGraph::has_edge(int i, int j) const { return edges_.count(make_edge(i, j)) > 0; }

void WeightedGraph::set_edge(int i, int j, double weight) {
  if (i == j) throw ConfigError("self loops are not allowed");
  if (weight <= 0) throw ConfigError("edge weight must be positive");
  weights_(i, j) = weight;
  weights_(j, i) = weight;
  edges_.insert(make_edge(i, j));
}

void WeightedGraph::remove_edge(int i, int j) {
  weights_(i, j) = 0;
  weights_(j, i) = 0;
  edges_.erase(make_edge(i, j));
}

Eigen::MatrixXd laplacian(const WeightedGraph& g) {
  const Eigen::MatrixXd& G = g.weights();
  Eigen::MatrixXd L = -G;
  for (int i = 0; i < g.n_nodes(); ++i) L(i, i) = G.row(i).sum();
  return L;
}

double algebraic_connectivity(const Eigen::MatrixXd& L) {
  if (L.rows() != L.cols()) throw DimensionError("Laplacian must be square");
  if (L.rows() == 1) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(L, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error("eigensolver failed on Laplacian");
  return solver.eigenvalues()(1);
}

WeightedGraph update_edges(const std::vector<Eigen::VectorXd>& positions, const WeightedGraph& prev,
                           const Geometry& geo, const Eigen::MatrixXd& base_weights) {
  const int n = prev.n_nodes();
  if (static_cast<int>(positions.size()) != n)
    throw DimensionError("update_edges: position count does not match node count");
  WeightedGraph next(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dist = (positions[i] - positions[j]).norm();
      const bool had = prev.has_edge(i, j);
      const bool keep = had ? (dist <= geo.r_s) : (dist <= geo.r_s - geo.eps);
      if (keep) {
        const double w = base_weights(i, j);
        if (w <= 0) throw ConfigError("base weight for a realizable edge must be positive");
        next.set_edge(i, j, w);
      }
    }
  }
  return next;
}

NeighborSets neighbor_sets(int agent, const WeightedGraph& g, const std::set<Edge>& formation_edges,
                           const std::vector<Eigen::VectorXd>& positions, const Geometry& geo) {
  NeighborSets sets;
  for (int j = 0; j < g.n_nodes(); ++j) {
    if (j == agent || !g.has_edge(agent, j)) continue;
    sets.sensing.push_back(j);
    if (formation_edges.count(make_edge(agent, j)) > 0) sets.formation.push_back(j);
    if ((positions[agent] - positions[j]).norm() < geo.r_z) sets.collision.push_back(j);
  }
  return sets;
}

}  // namespace sgr

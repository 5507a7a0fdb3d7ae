#pragma once

#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgr/errors.hpp"

namespace sgr {

/// Radii and distances of the agent model. All lengths.
struct Geometry {
  double r_a = 0;   ///< agent body radius
  double r_c = 0;   ///< collision avoidance radius
  double r_z = 0;   ///< collision-control activation radius
  double r_s = 0;   ///< sensing radius
  double eps = 0;   ///< hysteresis margin for adding edges
  double d_s = 0;   ///< safety distance

  /// Enforces 0 < r_a <= r_c < r_z < r_s, 0 <= eps <= r_s - r_z and
  /// d_s > 2 r_c. Throws ConfigError naming the violated ordering.
  void validate() const;
};

using Edge = std::pair<int, int>;  // normalized i < j

/// Weighted undirected graph snapshot. Weights are symmetric with zero
/// diagonal; an entry is positive exactly when the edge is present.
class WeightedGraph {
 public:
  explicit WeightedGraph(int n_nodes);
  WeightedGraph(int n_nodes, const Eigen::MatrixXd& weights);

  int n_nodes() const { return n_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::set<Edge>& edges() const { return edges_; }
  bool has_edge(int i, int j) const;
  double weight(int i, int j) const { return weights_(i, j); }

  void set_edge(int i, int j, double weight);
  void remove_edge(int i, int j);

 private:
  int n_;
  Eigen::MatrixXd weights_;
  std::set<Edge> edges_;
};

/// L = diag(row sums) - G. Row sums of the result vanish and the matrix is
/// positive semidefinite for non-negative weights.
Eigen::MatrixXd laplacian(const WeightedGraph& g);

/// Second-smallest eigenvalue of a Laplacian. By convention a single-node
/// graph is connected and reports +infinity.
double algebraic_connectivity(const Eigen::MatrixXd& L);

inline bool is_connected(double lambda2, double tol_eig = 1e-8) { return lambda2 > tol_eig; }

/// Hysteresis edge rule: a missing edge appears when the distance drops to
/// r_s - eps or below; an existing edge persists until the distance exceeds
/// r_s. Weights of present edges come from base_weights.
WeightedGraph update_edges(const std::vector<Eigen::VectorXd>& positions,
                           const WeightedGraph& prev, const Geometry& geo,
                           const Eigen::MatrixXd& base_weights);

struct NeighborSets {
  std::vector<int> sensing;     ///< N_s: graph neighbors
  std::vector<int> formation;   ///< N_sf: sensing and formation neighbors
  std::vector<int> collision;   ///< N_sz: sensing neighbors closer than r_z
};

NeighborSets neighbor_sets(int agent, const WeightedGraph& g, const std::set<Edge>& formation_edges,
                           const std::vector<Eigen::VectorXd>& positions, const Geometry& geo);

Edge make_edge(int i, int j);

}  // namespace sgr

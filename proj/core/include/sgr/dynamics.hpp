#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "sgr/barrier.hpp"
#include "sgr/graph.hpp"
#include "sgr/polynomial.hpp"

namespace sgr {

/// Position and velocity of one double-integrator agent.
struct AgentState {
  Eigen::VectorXd x;    ///< position
  Eigen::VectorXd rho;  ///< velocity
};

/// Desired configuration: per-agent displacement offsets, the common cruise
/// velocity, and the formation edge set.
struct Formation {
  std::vector<Eigen::VectorXd> tau;
  Eigen::VectorXd rho_star;
  std::set<Edge> edges;
};

/// Error coordinates y_i = x_i - tau_i, varrho_i = rho_i - rho^*, stacked into
/// q with agent i occupying [2*n*i, 2*n*i + n) for y and the next n entries
/// for varrho.
struct TransformedState {
  std::vector<Eigen::VectorXd> y;
  std::vector<Eigen::VectorXd> varrho;
  Eigen::VectorXd q;
};

/// Union of per-agent unsafe blocks. A position is inside a block when every
/// polynomial of the block is strictly positive at it.
struct UnsafeSet {
  std::vector<std::vector<Polynomial>> blocks;  ///< polynomials over spatial coordinates
};

/// Everything the closed loop needs. Anchor gains attach an optional virtual
/// reference spring/damper (-ky*y_i - kv*varrho_i) per agent; zero gains give
/// the plain distributed controller.
struct CoordinationModel {
  int spatial_dim = 1;
  int num_agents = 1;
  std::vector<AgentState> initial;
  Formation formation;
  Geometry geo;
  Eigen::MatrixXd base_weights;
  BarrierShape conn_barrier;
  BarrierShape coll_barrier;
  std::vector<double> anchor_ky;
  std::vector<double> anchor_kv;
  UnsafeSet unsafe;
  double eps_hat = -1.0;  ///< negative selects the default 0.5*min(d_s/2 - r_c, eps)

  int q_dim() const { return 2 * spatial_dim * num_agents; }
  int y_offset(int agent) const { return 2 * spatial_dim * agent; }
  int v_offset(int agent) const { return 2 * spatial_dim * agent + spatial_dim; }
  double anchor_position_gain(int agent) const {
    return anchor_ky.empty() ? 0.0 : anchor_ky[agent];
  }
  double anchor_velocity_gain(int agent) const {
    return anchor_kv.empty() ? 0.0 : anchor_kv[agent];
  }
  bool has_anchors() const;
  double resolved_eps_hat() const;

  /// Largest ||tau_i - tau_j|| over formation edges (over all pairs when the
  /// formation edge set is empty; zero for a single agent).
  double worst_case_tau_norm() const;
};

/// Frozen communication topology: the graph plus per-agent neighbor sets.
struct TopologySnapshot {
  WeightedGraph graph;
  std::vector<NeighborSets> sets;
};

TransformedState transform(const std::vector<AgentState>& states, const Formation& formation);
std::vector<AgentState> inverse_transform(const TransformedState& t, const Formation& formation);
TransformedState unpack_q(const Eigen::VectorXd& q, const CoordinationModel& model);

std::vector<Eigen::VectorXd> positions_of(const std::vector<AgentState>& states);

/// Initial topology: edges form wherever the distance is at or below the
/// add threshold r_s - eps.
TopologySnapshot initial_topology(const CoordinationModel& model,
                                  const std::vector<AgentState>& states);
TopologySnapshot snapshot_topology(const CoordinationModel& model,
                                   const std::vector<AgentState>& states,
                                   const WeightedGraph& graph);

/// The energy cap expression: one half of barrier worst cases over formation
/// neighbors plus initial consensus and kinetic energy, plus the
/// (N-1)*N collision allowance term, evaluated at eps_hat inside
/// (0, min(d_s/2 - r_c, eps)).
double mu_max(const CoordinationModel& model, const std::vector<AgentState>& initial,
              const TopologySnapshot& topology);

/// Gradient-based control input of one agent under the frozen sets.
Eigen::VectorXd control_input(int agent, const std::vector<AgentState>& states,
                              const TopologySnapshot& topology, const CoordinationModel& model);

/// Lyapunov-like energy of the current state under the given topology.
double lyapunov_value(const std::vector<AgentState>& states, const TopologySnapshot& topology,
                      const CoordinationModel& model);

/// Energy rate under a fixed topology: -varrho^T (L kron I_n) varrho minus the
/// anchor damping when present. Non-positive by construction.
double lyapunov_rate(const std::vector<AgentState>& states, const TopologySnapshot& topology,
                     const CoordinationModel& model);

struct UnsafeVerdict {
  bool unsafe = false;
  int block = -1;  ///< first violated block
};

/// Strict membership test per agent; `tol` shifts the strict inequality to
/// absorb integrator round-off when used as a trajectory monitor.
std::vector<UnsafeVerdict> unsafe_membership(const std::vector<Eigen::VectorXd>& positions,
                                             const UnsafeSet& unsafe, double tol = 0.0);

struct EdgeEvent {
  double t;
  int i, j;
  bool added;  ///< false means removed
};

struct MonitorRecord {
  double t = 0;
  double lambda2 = 0;
  double min_dist = 0;
  double W = 0;
  double Wdot = 0;
  bool any_unsafe = false;
  bool topology_changed = false;  ///< edge set or active barrier sets changed at this step
};

struct Trajectory {
  double dt = 0;
  int spatial_dim = 1;
  std::vector<double> times;
  std::vector<std::vector<AgentState>> states;  ///< per step, per agent
  std::vector<MonitorRecord> monitors;
  std::vector<EdgeEvent> edge_events;
  bool diverged = false;
  int divergence_step = -1;
  bool stopped_on_violation = false;
  bool converged_early = false;
};

struct SimParams {
  double dt = 1e-3;
  double horizon = 50.0;
  bool stop_on_violation = false;
  double overflow_guard = 1e6;
  int record_every = 1;
  double monitor_tol = 1e-9;  ///< slack on strict monitors (unsafe, distance)
  /// Stop once the coordination error falls below this (0 disables). Used by
  /// the classification oracle to cut short clearly converged runs.
  double convergence_exit = 0.0;
};

/// Fixed-step RK4 integration of the closed loop with the edge set
/// re-evaluated at every step boundary.
Trajectory simulate(const CoordinationModel& model, const SimParams& params);
Trajectory simulate_from(const CoordinationModel& model, const std::vector<AgentState>& start,
                         const SimParams& params);

// --- polynomial forms over q (used by the certification engine) ---

/// W as a polynomial in q for the frozen topology, including anchor
/// potentials when gains are present.
Polynomial lyapunov_polynomial(const CoordinationModel& model, const TopologySnapshot& topology);

/// Closed-loop vector field over q, one polynomial per q coordinate.
std::vector<Polynomial> closed_loop_field(const CoordinationModel& model,
                                          const TopologySnapshot& topology);

/// -varrho^T (L kron I) varrho - sum kv ||varrho_i||^2 as a polynomial in q.
Polynomial lyapunov_rate_polynomial(const CoordinationModel& model,
                                    const TopologySnapshot& topology);

/// Unsafe block polynomials pulled back to q coordinates for one agent via
/// x_i = y_i + tau_i (frozen reference at the initial time).
std::vector<Polynomial> unsafe_block_in_q(const CoordinationModel& model, int block, int agent);

/// Assumption checks used at scenario load time. Returns warnings; throws
/// ConfigError on hard violations.
std::vector<std::string> validate_model(const CoordinationModel& model);

}  // namespace sgr

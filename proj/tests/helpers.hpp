#pragma once

// Shared model builders for the desk-scale systems the tests exercise.

#include <cmath>

#include "sgr/dynamics.hpp"
#include "sgr/estimator.hpp"

namespace sgr::testing {

// One anchored agent on the line: ydot = v, vdot = -y - v. The energy
// y^2 + v^2 decreases globally (rate -2 v^2).
inline CoordinationModel anchored_toy() {
  CoordinationModel m;
  m.spatial_dim = 1;
  m.num_agents = 1;
  AgentState s;
  s.x = Eigen::VectorXd::Constant(1, 0.5);
  s.rho = Eigen::VectorXd::Zero(1);
  m.initial = {s};
  m.formation.tau = {Eigen::VectorXd::Zero(1)};
  m.formation.rho_star = Eigen::VectorXd::Zero(1);
  m.geo = Geometry{0.5, 0.6, 2.0, 6.0, 0.5, 1.25};
  m.base_weights = Eigen::MatrixXd::Zero(1, 1);
  m.conn_barrier = quartic_connectivity(1e6, m.geo.r_s);
  m.coll_barrier = ring_collision(1e6, m.geo.d_s, 2.6);
  m.anchor_ky = {1.0};
  m.anchor_kv = {1.0};
  return m;
}

// Two consensus-coupled agents on the line with one formation edge, offsets
// 4 apart, no unsafe set. Translation invariant.
inline CoordinationModel pair_toy(double mu = 50.0) {
  CoordinationModel m;
  m.spatial_dim = 1;
  m.num_agents = 2;
  AgentState a, b;
  a.x = Eigen::VectorXd::Constant(1, 4.3);
  a.rho = Eigen::VectorXd::Constant(1, 0.1);
  b.x = Eigen::VectorXd::Constant(1, -0.2);
  b.rho = Eigen::VectorXd::Constant(1, -0.1);
  m.initial = {a, b};
  m.formation.tau = {Eigen::VectorXd::Constant(1, 4.0), Eigen::VectorXd::Zero(1)};
  m.formation.rho_star = Eigen::VectorXd::Zero(1);
  m.formation.edges = {make_edge(0, 1)};
  m.geo = Geometry{0.5, 0.6, 2.0, 12.0, 0.5, 1.25};
  m.base_weights = (Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished();
  m.conn_barrier = quartic_connectivity(mu, m.geo.r_s - 4.0);
  m.coll_barrier = ring_collision(mu, m.geo.d_s + 4.0, 7.0);
  m.anchor_ky = {0.0, 0.0};
  m.anchor_kv = {0.0, 0.0};
  return m;
}

// W = y^2 + v^2 over the anchored toy state.
inline Polynomial toy_energy() {
  Polynomial W(2);
  W.add_term(Monomial::var_power(2, 0, 2), 1.0);
  W.add_term(Monomial::var_power(2, 1, 2), 1.0);
  return W;
}

// Its closed-loop rate -2 v^2.
inline Polynomial toy_energy_rate() {
  Polynomial Wdot(2);
  Wdot.add_term(Monomial::var_power(2, 1, 2), -2.0);
  return Wdot;
}

inline Polynomial halfplane_unsafe() {
  return Polynomial::variable(2, 0) - Polynomial::constant(2, 1.0);
}

// Deterministic xorshift-based generator for property tests.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed ? seed : 1) {}
  std::uint64_t next() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(next() >> 11) * 0x1.0p-53);
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
};

}  // namespace sgr::testing

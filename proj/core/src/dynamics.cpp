#include "sgr/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sgr {

bool CoordinationModel::has_anchors() const {
  auto positive = [](double v) { return v > 0.0; };
  return std::any_of(anchor_ky.begin(), anchor_ky.end(), positive) ||
         std::any_of(anchor_kv.begin(), anchor_kv.end(), positive);
}

double CoordinationModel::resolved_eps_hat() const {
  const double cap = std::min(0.5 * geo.d_s - geo.r_c, geo.eps);
  if (cap <= 0)
    throw ConfigError("eps_hat interval (0, min(d_s/2 - r_c, eps)) is empty; "
                      "require d_s > 2*r_c and eps > 0");
  if (eps_hat < 0) return 0.5 * cap;
  if (eps_hat >= cap) throw ConfigError("eps_hat must lie strictly inside (0, min(d_s/2 - r_c, eps))");
  return eps_hat;
}

double CoordinationModel::worst_case_tau_norm() const {
  if (num_agents < 2) return 0.0;
  double worst = 0.0;
  if (!formation.edges.empty()) {
    for (const auto& [i, j] : formation.edges)
      worst = std::max(worst, (formation.tau[i] - formation.tau[j]).norm());
    return worst;
  }
  for (int i = 0; i < num_agents; ++i)
    for (int j = i + 1; j < num_agents; ++j)
      worst = std::max(worst, (formation.tau[i] - formation.tau[j]).norm());
  return worst;
}

TransformedState transform(const std::vector<AgentState>& states, const Formation& formation) {
  const int N = static_cast<int>(states.size());
  if (static_cast<int>(formation.tau.size()) != N)
    throw DimensionError("transform: tau count does not match agent count");
  const int n = static_cast<int>(states[0].x.size());
  TransformedState t;
  t.y.reserve(N);
  t.varrho.reserve(N);
  t.q.resize(2 * n * N);
  for (int i = 0; i < N; ++i) {
    t.y.push_back(states[i].x - formation.tau[i]);
    t.varrho.push_back(states[i].rho - formation.rho_star);
    t.q.segment(2 * n * i, n) = t.y.back();
    t.q.segment(2 * n * i + n, n) = t.varrho.back();
  }
  return t;
}

std::vector<AgentState> inverse_transform(const TransformedState& t, const Formation& formation) {
  std::vector<AgentState> states(t.y.size());
  for (size_t i = 0; i < t.y.size(); ++i) {
    states[i].x = t.y[i] + formation.tau[i];
    states[i].rho = t.varrho[i] + formation.rho_star;
  }
  return states;
}

TransformedState unpack_q(const Eigen::VectorXd& q, const CoordinationModel& model) {
  if (q.size() != model.q_dim()) throw DimensionError("unpack_q: wrong state dimension");
  const int n = model.spatial_dim;
  TransformedState t;
  t.q = q;
  for (int i = 0; i < model.num_agents; ++i) {
    t.y.push_back(q.segment(model.y_offset(i), n));
    t.varrho.push_back(q.segment(model.v_offset(i), n));
  }
  return t;
}

std::vector<Eigen::VectorXd> positions_of(const std::vector<AgentState>& states) {
  std::vector<Eigen::VectorXd> p;
  p.reserve(states.size());
  for (const auto& s : states) p.push_back(s.x);
  return p;
}

TopologySnapshot snapshot_topology(const CoordinationModel& model,
                                   const std::vector<AgentState>& states,
                                   const WeightedGraph& graph) {
  TopologySnapshot snap{graph, {}};
  const auto positions = positions_of(states);
  for (int i = 0; i < model.num_agents; ++i)
    snap.sets.push_back(neighbor_sets(i, snap.graph, model.formation.edges, positions, model.geo));
  return snap;
}

TopologySnapshot initial_topology(const CoordinationModel& model,
                                  const std::vector<AgentState>& states) {
  WeightedGraph empty(model.num_agents);
  const auto graph = update_edges(positions_of(states), empty, model.geo, model.base_weights);
  return snapshot_topology(model, states, graph);
}

double mu_max(const CoordinationModel& model, const std::vector<AgentState>& initial,
              const TopologySnapshot& topology) {
  const double eps_hat = model.resolved_eps_hat();
  const double tau_norm = model.worst_case_tau_norm();
  const double r_hat = connectivity_interval_end(model.geo, tau_norm);
  const double d_hat = collision_interval_start(model.geo, tau_norm);
  const TransformedState t = transform(initial, model.formation);
  const int N = model.num_agents;

  double acc = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (model.formation.edges.count(make_edge(i, j)) > 0 && i != j)
        acc += model.conn_barrier.value(std::abs(r_hat - eps_hat));
    }
    double consensus = 0.0;
    for (int j = 0; j < N; ++j) {
      if (j == i) continue;
      consensus += topology.graph.weight(i, j) * t.y[i].dot(t.y[i] - t.y[j]);
    }
    acc += consensus + t.varrho[i].squaredNorm();
  }
  double value = 0.5 * acc;
  if (N > 1) value += static_cast<double>((N - 1) * N) * model.coll_barrier.value(std::abs(d_hat - eps_hat));
  return value;
}

Eigen::VectorXd control_input(int agent, const std::vector<AgentState>& states,
                              const TopologySnapshot& topology, const CoordinationModel& model) {
  const int n = model.spatial_dim;
  const TransformedState t = transform(states, model.formation);
  const NeighborSets& sets = topology.sets[agent];
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);

  const Polynomial conn_slope = model.conn_barrier.radial_slope_in_w();
  for (int j : sets.formation) {
    const Eigen::VectorXd yij = t.y[agent] - t.y[j];
    const double w = yij.squaredNorm();
    u -= conn_slope.evaluate(std::span<const double>(&w, 1)) * yij;
  }
  const Polynomial coll_slope = model.coll_barrier.radial_slope_in_w();
  for (int j : sets.collision) {
    const Eigen::VectorXd yij = t.y[agent] - t.y[j];
    const double w = yij.squaredNorm();
    u -= coll_slope.evaluate(std::span<const double>(&w, 1)) * yij;
  }
  for (int j : sets.sensing) {
    const double g = topology.graph.weight(agent, j);
    u -= g * (t.y[agent] - t.y[j]);
    u -= g * (t.varrho[agent] - t.varrho[j]);
  }
  u -= model.anchor_position_gain(agent) * t.y[agent];
  u -= model.anchor_velocity_gain(agent) * t.varrho[agent];
  return u;
}

double lyapunov_value(const std::vector<AgentState>& states, const TopologySnapshot& topology,
                      const CoordinationModel& model) {
  const TransformedState t = transform(states, model.formation);
  double acc = 0.0;
  for (int i = 0; i < model.num_agents; ++i) {
    const NeighborSets& sets = topology.sets[i];
    for (int j : sets.formation) acc += model.conn_barrier.value((t.y[i] - t.y[j]).norm());
    for (int j : sets.collision) acc += model.coll_barrier.value((t.y[i] - t.y[j]).norm());
    for (int j : sets.sensing) acc += topology.graph.weight(i, j) * t.y[i].dot(t.y[i] - t.y[j]);
    acc += t.varrho[i].squaredNorm();
    acc += model.anchor_position_gain(i) * t.y[i].squaredNorm();
  }
  return 0.5 * acc;
}

double lyapunov_rate(const std::vector<AgentState>& states, const TopologySnapshot& topology,
                     const CoordinationModel& model) {
  const TransformedState t = transform(states, model.formation);
  double acc = 0.0;
  for (int i = 0; i < model.num_agents; ++i) {
    for (int j = i + 1; j < model.num_agents; ++j) {
      const double g = topology.graph.weight(i, j);
      if (g > 0) acc += g * (t.varrho[i] - t.varrho[j]).squaredNorm();
    }
    acc += model.anchor_velocity_gain(i) * t.varrho[i].squaredNorm();
  }
  return -acc;
}

std::vector<UnsafeVerdict> unsafe_membership(const std::vector<Eigen::VectorXd>& positions,
                                             const UnsafeSet& unsafe, double tol) {
  std::vector<UnsafeVerdict> verdicts(positions.size());
  for (size_t a = 0; a < positions.size(); ++a) {
    for (size_t b = 0; b < unsafe.blocks.size() && !verdicts[a].unsafe; ++b) {
      bool all_positive = !unsafe.blocks[b].empty();
      for (const Polynomial& w : unsafe.blocks[b]) {
        if (w.evaluate(positions[a]) <= tol) {
          all_positive = false;
          break;
        }
      }
      if (all_positive) {
        verdicts[a].unsafe = true;
        verdicts[a].block = static_cast<int>(b);
      }
    }
  }
  return verdicts;
}

namespace {

// Packs (x, rho) into one flat vector for the integrator.
Eigen::VectorXd pack(const std::vector<AgentState>& states) {
  const int n = static_cast<int>(states[0].x.size());
  Eigen::VectorXd z(2 * n * states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    z.segment(2 * n * i, n) = states[i].x;
    z.segment(2 * n * i + n, n) = states[i].rho;
  }
  return z;
}

std::vector<AgentState> unpack(const Eigen::VectorXd& z, int num_agents, int n) {
  std::vector<AgentState> states(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    states[i].x = z.segment(2 * n * i, n);
    states[i].rho = z.segment(2 * n * i + n, n);
  }
  return states;
}

struct ActiveSets {
  std::set<Edge> edges;
  std::vector<std::vector<int>> collision;
  std::vector<std::vector<int>> formation;

  bool operator==(const ActiveSets& o) const {
    return edges == o.edges && collision == o.collision && formation == o.formation;
  }
};

ActiveSets active_sets(const TopologySnapshot& topology) {
  ActiveSets a;
  a.edges = topology.graph.edges();
  for (const auto& s : topology.sets) {
    a.collision.push_back(s.collision);
    a.formation.push_back(s.formation);
  }
  return a;
}

}  // namespace

Trajectory simulate(const CoordinationModel& model, const SimParams& params) {
  return simulate_from(model, model.initial, params);
}

namespace {

// Precompiled controller for one frozen topology: everything the derivative
// needs, reachable without touching AgentState.
struct ControlPlan {
  struct Radial {
    int j;
    Polynomial slope_in_w;  // (dY/dz)/z as a polynomial in w = z^2
  };
  struct Agent {
    std::vector<Radial> radial;           // formation + collision gradient terms
    std::vector<std::pair<int, double>> sensing;  // (j, G_ij)
    double ky = 0, kv = 0;
  };
  std::vector<Agent> agents;
};

ControlPlan compile_plan(const CoordinationModel& model, const TopologySnapshot& topology) {
  ControlPlan plan;
  plan.agents.resize(model.num_agents);
  const Polynomial conn = model.conn_barrier.radial_slope_in_w();
  const Polynomial coll = model.coll_barrier.radial_slope_in_w();
  for (int i = 0; i < model.num_agents; ++i) {
    auto& a = plan.agents[i];
    for (int j : topology.sets[i].formation) a.radial.push_back({j, conn});
    for (int j : topology.sets[i].collision) a.radial.push_back({j, coll});
    for (int j : topology.sets[i].sensing) a.sensing.push_back({j, topology.graph.weight(i, j)});
    a.ky = model.anchor_position_gain(i);
    a.kv = model.anchor_velocity_gain(i);
  }
  return plan;
}

// z layout: agent i holds positions at [2ni, 2ni+n) and velocities next.
void derivative_flat(const Eigen::VectorXd& z, const CoordinationModel& model,
                     const ControlPlan& plan, Eigen::VectorXd& dz) {
  const int n = model.spatial_dim;
  const auto& tau = model.formation.tau;
  const auto& rho_star = model.formation.rho_star;
  for (int i = 0; i < model.num_agents; ++i) {
    const int xi = 2 * n * i, vi = 2 * n * i + n;
    dz.segment(xi, n) = z.segment(vi, n);
    auto u = dz.segment(vi, n);
    u.setZero();
    const auto& a = plan.agents[i];
    for (const auto& r : a.radial) {
      const int xj = 2 * n * r.j;
      double w = 0;
      for (int d = 0; d < n; ++d) {
        const double diff = (z(xi + d) - tau[i](d)) - (z(xj + d) - tau[r.j](d));
        w += diff * diff;
      }
      const double slope = r.slope_in_w.evaluate(std::span<const double>(&w, 1));
      for (int d = 0; d < n; ++d)
        u(d) -= slope * ((z(xi + d) - tau[i](d)) - (z(xj + d) - tau[r.j](d)));
    }
    for (const auto& [j, g] : a.sensing) {
      const int xj = 2 * n * j, vj = 2 * n * j + n;
      for (int d = 0; d < n; ++d) {
        u(d) -= g * ((z(xi + d) - tau[i](d)) - (z(xj + d) - tau[j](d)));
        u(d) -= g * (z(vi + d) - z(vj + d));
      }
    }
    if (a.ky != 0)
      for (int d = 0; d < n; ++d) u(d) -= a.ky * (z(xi + d) - tau[i](d));
    if (a.kv != 0)
      for (int d = 0; d < n; ++d) u(d) -= a.kv * (z(vi + d) - rho_star(d));
  }
}

double coordination_error_flat(const Eigen::VectorXd& z, const CoordinationModel& model) {
  const int n = model.spatial_dim;
  const int N = model.num_agents;
  double err = 0;
  if (N > 1) {
    Eigen::VectorXd y_mean = Eigen::VectorXd::Zero(n), v_mean = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < N; ++i) {
      y_mean += z.segment(2 * n * i, n) - model.formation.tau[i];
      v_mean += z.segment(2 * n * i + n, n);
    }
    y_mean /= N;
    v_mean /= N;
    for (int i = 0; i < N; ++i) {
      err = std::max(err, (z.segment(2 * n * i, n) - model.formation.tau[i] - y_mean).norm());
      err = std::max(err, (z.segment(2 * n * i + n, n) - v_mean).norm());
    }
  }
  for (int i = 0; i < N; ++i) {
    const bool anchored_y = model.anchor_position_gain(i) > 0;
    const bool anchored_v = anchored_y || model.anchor_velocity_gain(i) > 0;
    if (anchored_y)
      err = std::max(err, (z.segment(2 * n * i, n) - model.formation.tau[i]).norm());
    if (anchored_v)
      err = std::max(err,
                     (z.segment(2 * n * i + n, n) - model.formation.rho_star).norm());
  }
  return err;
}

}  // namespace

Trajectory simulate_from(const CoordinationModel& model, const std::vector<AgentState>& start,
                         const SimParams& params) {
  Trajectory traj;
  traj.dt = params.dt;
  traj.spatial_dim = model.spatial_dim;

  auto states = start;
  TopologySnapshot topology = initial_topology(model, states);
  ControlPlan plan = compile_plan(model, topology);
  ActiveSets prev_active = active_sets(topology);

  const int steps = static_cast<int>(std::ceil(params.horizon / params.dt));
  Eigen::VectorXd z = pack(states);
  Eigen::VectorXd k1(z.size()), k2(z.size()), k3(z.size()), k4(z.size()), tmp(z.size());
  const int n = model.spatial_dim;

  // Early exit applies only when the target configuration is stationary;
  // otherwise a converged formation may still drift into an unsafe set later.
  const bool allow_early_exit =
      params.convergence_exit > 0 && model.formation.rho_star.norm() == 0.0;

  struct StepMonitors {
    double lambda2;
    double min_dist;
    bool any_unsafe;
    bool violated;
  };
  auto cheap_monitors = [&](const Eigen::VectorXd& state) {
    StepMonitors m{std::numeric_limits<double>::infinity(),
                   std::numeric_limits<double>::infinity(), false, false};
    if (model.num_agents > 1) {
      m.lambda2 = algebraic_connectivity(laplacian(topology.graph));
      for (int i = 0; i < model.num_agents; ++i)
        for (int j = i + 1; j < model.num_agents; ++j) {
          double d2 = 0;
          for (int d = 0; d < n; ++d) {
            const double diff = state(2 * n * i + d) - state(2 * n * j + d);
            d2 += diff * diff;
          }
          m.min_dist = std::min(m.min_dist, std::sqrt(d2));
        }
    }
    for (int i = 0; i < model.num_agents && !m.any_unsafe; ++i) {
      for (size_t b = 0; b < model.unsafe.blocks.size() && !m.any_unsafe; ++b) {
        bool inside = !model.unsafe.blocks[b].empty();
        for (const Polynomial& w : model.unsafe.blocks[b]) {
          if (w.evaluate(std::span<const double>(state.data() + 2 * n * i,
                                                 static_cast<size_t>(n))) <= params.monitor_tol) {
            inside = false;
            break;
          }
        }
        m.any_unsafe = m.any_unsafe || inside;
      }
    }
    m.violated = m.any_unsafe || (model.num_agents > 1 && !(m.lambda2 > 0)) ||
                 (model.num_agents > 1 && !(m.min_dist > model.geo.d_s));
    return m;
  };

  auto record = [&](int step, double t, bool changed, const StepMonitors& cheap) {
    if (!(step % params.record_every == 0 || step == steps || cheap.violated)) return;
    states = unpack(z, model.num_agents, n);
    MonitorRecord m;
    m.t = t;
    m.lambda2 = cheap.lambda2;
    m.min_dist = cheap.min_dist;
    m.W = lyapunov_value(states, topology, model);
    m.Wdot = lyapunov_rate(states, topology, model);
    m.any_unsafe = cheap.any_unsafe;
    m.topology_changed = changed;
    traj.times.push_back(t);
    traj.states.push_back(states);
    traj.monitors.push_back(m);
  };

  StepMonitors cheap = cheap_monitors(z);
  record(0, 0.0, false, cheap);
  if (cheap.violated && params.stop_on_violation) {
    traj.stopped_on_violation = true;
    return traj;
  }

  for (int step = 1; step <= steps; ++step) {
    const double h = params.dt;
    derivative_flat(z, model, plan, k1);
    tmp = z + (0.5 * h) * k1;
    derivative_flat(tmp, model, plan, k2);
    tmp = z + (0.5 * h) * k2;
    derivative_flat(tmp, model, plan, k3);
    tmp = z + h * k3;
    derivative_flat(tmp, model, plan, k4);
    z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    if (!z.allFinite() || z.lpNorm<Eigen::Infinity>() > params.overflow_guard) {
      traj.diverged = true;
      traj.divergence_step = step;
      return traj;
    }
    const double t = step * params.dt;

    // Edge switching is quantized to step boundaries.
    bool changed = false;
    {
      states = unpack(z, model.num_agents, n);
      const auto positions = positions_of(states);
      WeightedGraph next = update_edges(positions, topology.graph, model.geo, model.base_weights);
      for (int i = 0; i < model.num_agents; ++i) {
        for (int j = i + 1; j < model.num_agents; ++j) {
          const bool was = topology.graph.has_edge(i, j);
          const bool now = next.has_edge(i, j);
          if (was != now) traj.edge_events.push_back({t, i, j, now});
        }
      }
      topology = snapshot_topology(model, states, next);
      ActiveSets cur_active = active_sets(topology);
      changed = !(cur_active == prev_active);
      if (changed) plan = compile_plan(model, topology);
      prev_active = std::move(cur_active);
    }

    cheap = cheap_monitors(z);
    record(step, t, changed, cheap);
    if (cheap.violated && params.stop_on_violation) {
      traj.stopped_on_violation = true;
      return traj;
    }
    if (allow_early_exit && !cheap.violated &&
        coordination_error_flat(z, model) < params.convergence_exit) {
      traj.converged_early = true;
      if (traj.times.empty() || traj.times.back() != t) {
        StepMonitors final_cheap = cheap_monitors(z);
        record(steps, t, changed, final_cheap);
      }
      return traj;
    }
  }
  return traj;
}

// --- polynomial forms ---

namespace {

// ||y_i - y_j||^2 over q.
Polynomial pair_gap_squared(const CoordinationModel& model, int i, int j) {
  const int m = model.q_dim();
  Polynomial w(m);
  for (int d = 0; d < model.spatial_dim; ++d) {
    Polynomial diff = Polynomial::variable(m, model.y_offset(i) + d) -
                      Polynomial::variable(m, model.y_offset(j) + d);
    w += diff * diff;
  }
  return w;
}

// shape(||y_i - y_j||) composed through w = ||y_ij||^2.
Polynomial barrier_on_pair(const BarrierShape& shape, const CoordinationModel& model, int i, int j) {
  const Polynomial w = pair_gap_squared(model, i, j);
  const Polynomial in_w = shape.poly_in_w();
  Polynomial out(model.q_dim());
  for (const auto& [mono, coeff] : in_w.terms()) {
    out += w.pow(mono.exponent(0)) * coeff;
  }
  return out;
}

}  // namespace

Polynomial lyapunov_polynomial(const CoordinationModel& model, const TopologySnapshot& topology) {
  const int m = model.q_dim();
  Polynomial W(m);

  // Consensus quadratic: 1/2 sum_i y_i . sum_j G_ij (y_i - y_j)
  //                    = 1/2 sum_{i<j} G_ij ||y_i - y_j||^2.
  for (int i = 0; i < model.num_agents; ++i) {
    for (int j = i + 1; j < model.num_agents; ++j) {
      const double g = topology.graph.weight(i, j);
      if (g > 0) W += pair_gap_squared(model, i, j) * (0.5 * g);
    }
  }
  // Kinetic and anchor terms.
  for (int i = 0; i < model.num_agents; ++i) {
    for (int d = 0; d < model.spatial_dim; ++d) {
      Polynomial v = Polynomial::variable(m, model.v_offset(i) + d);
      W += v * v * 0.5;
      const double ky = model.anchor_position_gain(i);
      if (ky != 0) {
        Polynomial y = Polynomial::variable(m, model.y_offset(i) + d);
        W += y * y * (0.5 * ky);
      }
    }
  }
  // Barrier sums; each unordered pair appears twice in the double sum, which
  // cancels the leading 1/2.
  std::set<Edge> sf_pairs, sz_pairs;
  for (int i = 0; i < model.num_agents; ++i) {
    for (int j : topology.sets[i].formation) sf_pairs.insert(make_edge(i, j));
    for (int j : topology.sets[i].collision) sz_pairs.insert(make_edge(i, j));
  }
  for (const auto& [i, j] : sf_pairs) W += barrier_on_pair(model.conn_barrier, model, i, j);
  for (const auto& [i, j] : sz_pairs) W += barrier_on_pair(model.coll_barrier, model, i, j);
  return W;
}

std::vector<Polynomial> closed_loop_field(const CoordinationModel& model,
                                          const TopologySnapshot& topology) {
  const int m = model.q_dim();
  const int n = model.spatial_dim;
  std::vector<Polynomial> f(m, Polynomial(m));

  for (int i = 0; i < model.num_agents; ++i) {
    for (int d = 0; d < n; ++d) {
      f[model.y_offset(i) + d] = Polynomial::variable(m, model.v_offset(i) + d);
    }
    // u_i assembled coordinate-wise.
    std::vector<Polynomial> u(n, Polynomial(m));
    auto add_radial = [&](const BarrierShape& shape, const std::vector<int>& neighbors) {
      const Polynomial slope_in_w = shape.radial_slope_in_w();
      for (int j : neighbors) {
        const Polynomial w = pair_gap_squared(model, i, j);
        Polynomial slope(m);
        for (const auto& [mono, coeff] : slope_in_w.terms())
          slope += w.pow(mono.exponent(0)) * coeff;
        for (int d = 0; d < n; ++d) {
          Polynomial diff = Polynomial::variable(m, model.y_offset(i) + d) -
                            Polynomial::variable(m, model.y_offset(j) + d);
          u[d] -= slope * diff;
        }
      }
    };
    add_radial(model.conn_barrier, topology.sets[i].formation);
    add_radial(model.coll_barrier, topology.sets[i].collision);
    for (int j : topology.sets[i].sensing) {
      const double g = topology.graph.weight(i, j);
      for (int d = 0; d < n; ++d) {
        u[d] -= (Polynomial::variable(m, model.y_offset(i) + d) -
                 Polynomial::variable(m, model.y_offset(j) + d)) *
                g;
        u[d] -= (Polynomial::variable(m, model.v_offset(i) + d) -
                 Polynomial::variable(m, model.v_offset(j) + d)) *
                g;
      }
    }
    const double ky = model.anchor_position_gain(i);
    const double kv = model.anchor_velocity_gain(i);
    for (int d = 0; d < n; ++d) {
      if (ky != 0) u[d] -= Polynomial::variable(m, model.y_offset(i) + d) * ky;
      if (kv != 0) u[d] -= Polynomial::variable(m, model.v_offset(i) + d) * kv;
      f[model.v_offset(i) + d] = std::move(u[d]);
    }
  }
  return f;
}

Polynomial lyapunov_rate_polynomial(const CoordinationModel& model,
                                    const TopologySnapshot& topology) {
  const int m = model.q_dim();
  Polynomial r(m);
  for (int i = 0; i < model.num_agents; ++i) {
    for (int j = i + 1; j < model.num_agents; ++j) {
      const double g = topology.graph.weight(i, j);
      if (g <= 0) continue;
      for (int d = 0; d < model.spatial_dim; ++d) {
        Polynomial diff = Polynomial::variable(m, model.v_offset(i) + d) -
                          Polynomial::variable(m, model.v_offset(j) + d);
        r -= diff * diff * g;
      }
    }
    const double kv = model.anchor_velocity_gain(i);
    if (kv != 0) {
      for (int d = 0; d < model.spatial_dim; ++d) {
        Polynomial v = Polynomial::variable(m, model.v_offset(i) + d);
        r -= v * v * kv;
      }
    }
  }
  return r;
}

std::vector<Polynomial> unsafe_block_in_q(const CoordinationModel& model, int block, int agent) {
  const int n = model.spatial_dim;
  const int m = model.q_dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, m);
  for (int d = 0; d < n; ++d) A(d, model.y_offset(agent) + d) = 1.0;
  const Eigen::VectorXd b = model.formation.tau[agent];
  std::vector<Polynomial> out;
  for (const Polynomial& w : model.unsafe.blocks[block]) out.push_back(w.substitute_affine(A, b));
  return out;
}

std::vector<std::string> validate_model(const CoordinationModel& model) {
  std::vector<std::string> warnings;
  model.geo.validate();
  const int N = model.num_agents;
  if (static_cast<int>(model.initial.size()) != N) throw ConfigError("agents: initial state count mismatch");
  if (static_cast<int>(model.formation.tau.size()) != N) throw ConfigError("formation.tau: count mismatch");
  for (const auto& [i, j] : model.formation.edges) {
    if (i < 0 || j >= N) throw ConfigError("formation.edges: index out of range");
    const double tau_ij = (model.formation.tau[i] - model.formation.tau[j]).norm();
    std::ostringstream pair;
    pair << "(" << i << "," << j << ")";
    if (tau_ij < model.geo.r_z || tau_ij > model.geo.r_s - model.geo.eps)
      throw ConfigError("assumption 1 violated for formation pair " + pair.str() +
                        ": need r_z <= ||tau_ij|| <= r_s - eps");
    // Compatibility of sensing and safety margins, enforced per formation pair.
    if (!(model.geo.r_s - tau_ij > model.geo.d_s + tau_ij))
      throw ConfigError("assumption 3 violated for formation pair " + pair.str() +
                        ": need r_s - ||tau_ij|| > d_s + ||tau_ij||");
  }
  if (N > 1) {
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        if (model.formation.edges.count(make_edge(i, j))) continue;
        const double tau_ij = (model.formation.tau[i] - model.formation.tau[j]).norm();
        if (!(model.geo.r_s - tau_ij > model.geo.d_s + tau_ij)) {
          std::ostringstream s;
          s << "assumption 3 does not hold for non-formation pair (" << i << "," << j
            << "); enforced only on formation pairs";
          warnings.push_back(s.str());
        }
      }
    }
  }
  // Assumption 2: the desired topology must be contained in the initial graph.
  const TopologySnapshot topo = initial_topology(model, model.initial);
  for (const auto& [i, j] : model.formation.edges) {
    if (!topo.graph.has_edge(i, j)) {
      std::ostringstream s;
      s << "(" << i << "," << j << ")";
      throw ConfigError("assumption 2 violated: formation edge " + s.str() +
                        " is outside the initial sensing graph");
    }
  }
  if (N > 1 && !(algebraic_connectivity(laplacian(topo.graph)) > 1e-8))
    throw ConfigError("initial graph must be connected");
  return warnings;
}

}  // namespace sgr

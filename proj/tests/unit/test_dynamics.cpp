#include <doctest.h>

#include "../helpers.hpp"
#include "sgr/dynamics.hpp"
#include "sgr/oracle.hpp"

using namespace sgr;
using sgr::testing::anchored_toy;
using sgr::testing::pair_toy;

TEST_CASE("transform and inverse") {
  CoordinationModel m = pair_toy();
  // Exactly at the target configuration everything maps to zero.
  std::vector<AgentState> at_target(2);
  at_target[0].x = m.formation.tau[0];
  at_target[0].rho = m.formation.rho_star;
  at_target[1].x = m.formation.tau[1];
  at_target[1].rho = m.formation.rho_star;
  CHECK(transform(at_target, m.formation).q.norm() == 0.0);

  // One agent, tau = 2, rho* = 0, x = 3, rho = 1 -> q = (1, 1).
  Formation f;
  f.tau = {Eigen::VectorXd::Constant(1, 2.0)};
  f.rho_star = Eigen::VectorXd::Zero(1);
  std::vector<AgentState> s(1);
  s[0].x = Eigen::VectorXd::Constant(1, 3.0);
  s[0].rho = Eigen::VectorXd::Constant(1, 1.0);
  TransformedState t = transform(s, f);
  CHECK(t.q(0) == 1.0);
  CHECK(t.q(1) == 1.0);

  sgr::testing::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AgentState> random(2);
    for (auto& st : random) {
      st.x = Eigen::VectorXd::Constant(1, rng.uniform(-5, 5));
      st.rho = Eigen::VectorXd::Constant(1, rng.uniform(-5, 5));
    }
    auto back = inverse_transform(transform(random, m.formation), m.formation);
    for (int i = 0; i < 2; ++i) {
      CHECK((back[i].x - random[i].x).norm() <= 1e-12);
      CHECK((back[i].rho - random[i].rho).norm() <= 1e-12);
    }
  }
}

TEST_CASE("barrier shape numeric validation") {
  Geometry geo{0.5, 0.6, 2.0, 6.0, 0.5, 1.25};
  // Reference quartic passes.
  CHECK(validate_barrier_numeric(quartic_connectivity(10.0, geo.r_s), geo, 0.0).pass);
  // Negative shape fails.
  BarrierShape neg;
  neg.kind = BarrierKind::connectivity;
  neg.mu = 10.0;
  neg.poly = Polynomial(1);
  neg.poly.add_term(Monomial::var_power(1, 0, 2), -1.0);
  CHECK(!validate_barrier_numeric(neg, geo, 0.0).pass);
  // Sextic scaled to interpolate the boundary passes.
  BarrierShape sextic;
  sextic.kind = BarrierKind::connectivity;
  sextic.mu = 10.0;
  sextic.poly = Polynomial(1);
  sextic.poly.add_term(Monomial::var_power(1, 0, 6), 10.0 / std::pow(geo.r_s, 6));
  CHECK(validate_barrier_numeric(sextic, geo, 0.0).pass);
  // Odd powers are rejected outright.
  BarrierShape odd;
  odd.poly = Polynomial::variable(1, 0);
  CHECK_THROWS_AS(odd.validate_even(), ConfigError);
  // Collision ring decreasing on its interval.
  CHECK(validate_barrier_numeric(ring_collision(10.0, geo.d_s, 2.6), geo, 0.0).pass);
  // Ring radius inside the interval flips the slope sign.
  CHECK(!validate_barrier_numeric(ring_collision(10.0, geo.d_s, 1.5), geo, 0.0).pass);
}

TEST_CASE("energy cap expression") {
  // Single agent, no formation neighbors: only the kinetic term remains.
  CoordinationModel m = anchored_toy();
  m.initial[0].rho = Eigen::VectorXd::Constant(1, 0.4);
  TopologySnapshot topo = initial_topology(m, m.initial);
  CHECK(mu_max(m, m.initial, topo) == doctest::Approx(0.5 * 0.4 * 0.4));

  // Pair at the target with zero velocities: only the worst-case barrier
  // terms survive.
  CoordinationModel p = pair_toy();
  p.initial[0].x = p.formation.tau[0];
  p.initial[1].x = p.formation.tau[1];
  p.initial[0].rho = Eigen::VectorXd::Zero(1);
  p.initial[1].rho = Eigen::VectorXd::Zero(1);
  TopologySnapshot pt = initial_topology(p, p.initial);
  const double eps_hat = p.resolved_eps_hat();
  const double r_hat = p.geo.r_s - 4.0;
  const double d_hat = p.geo.d_s + 4.0;
  const double expected = 0.5 * 2.0 * p.conn_barrier.value(r_hat - eps_hat) +
                          2.0 * p.coll_barrier.value(d_hat - eps_hat);
  CHECK(mu_max(p, p.initial, pt) == doctest::Approx(expected));

  // The eps_hat interval collapses when d_s touches 2 r_c.
  CoordinationModel bad = anchored_toy();
  bad.geo.d_s = 2.0 * bad.geo.r_c;
  CHECK_THROWS_AS(bad.resolved_eps_hat(), ConfigError);
}

TEST_CASE("control input examples") {
  CoordinationModel m = pair_toy();
  // At the target configuration the control vanishes.
  std::vector<AgentState> at_target(2);
  at_target[0].x = m.formation.tau[0];
  at_target[0].rho = m.formation.rho_star;
  at_target[1].x = m.formation.tau[1];
  at_target[1].rho = m.formation.rho_star;
  TopologySnapshot topo = initial_topology(m, at_target);
  CHECK(control_input(0, at_target, topo, m).norm() == doctest::Approx(0.0));
  CHECK(control_input(1, at_target, topo, m).norm() == doctest::Approx(0.0));

  // y12 = 1 with equal velocities and unit weight: the consensus term alone.
  CoordinationModel bare = pair_toy();
  bare.formation.edges.clear();  // no barrier gradient terms
  std::vector<AgentState> s(2);
  s[0].x = bare.formation.tau[0] + Eigen::VectorXd::Constant(1, 1.0);
  s[0].rho = Eigen::VectorXd::Constant(1, 0.3);
  s[1].x = bare.formation.tau[1];
  s[1].rho = Eigen::VectorXd::Constant(1, 0.3);
  TopologySnapshot topo2 = initial_topology(bare, s);
  CHECK(control_input(0, s, topo2, bare)(0) == doctest::Approx(-1.0));
  CHECK(control_input(1, s, topo2, bare)(0) == doctest::Approx(1.0));
}

TEST_CASE("controls sum to zero without anchors") {
  sgr::testing::Rng rng(11);
  CoordinationModel m = pair_toy();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<AgentState> s(2);
    for (auto& st : s) {
      st.x = Eigen::VectorXd::Constant(1, rng.uniform(-3, 8));
      st.rho = Eigen::VectorXd::Constant(1, rng.uniform(-2, 2));
    }
    TopologySnapshot topo = initial_topology(m, s);
    const Eigen::VectorXd total = control_input(0, s, topo, m) + control_input(1, s, topo, m);
    CHECK(total.norm() <= 1e-10);
  }
}

TEST_CASE("energy value and rate") {
  CoordinationModel m = pair_toy();
  m.formation.edges.clear();  // keep the quadratic part only

  // At the target the energy vanishes.
  std::vector<AgentState> at_target(2);
  at_target[0].x = m.formation.tau[0];
  at_target[0].rho = m.formation.rho_star;
  at_target[1].x = m.formation.tau[1];
  at_target[1].rho = m.formation.rho_star;
  TopologySnapshot topo = initial_topology(m, at_target);
  CHECK(lyapunov_value(at_target, topo, m) == doctest::Approx(0.0));

  // y = (1, 0), equal velocities: one half of y^T L y.
  std::vector<AgentState> s = at_target;
  s[0].x += Eigen::VectorXd::Constant(1, 1.0);
  TopologySnapshot topo2 = initial_topology(m, s);
  CHECK(lyapunov_value(s, topo2, m) == doctest::Approx(0.5));

  // Doubling the velocity deviation quadruples the kinetic part.
  std::vector<AgentState> v1 = at_target, v2 = at_target;
  v1[0].rho = Eigen::VectorXd::Constant(1, 0.5);
  v2[0].rho = Eigen::VectorXd::Constant(1, 1.0);
  const double w1 = lyapunov_value(v1, initial_topology(m, v1), m);
  const double w2 = lyapunov_value(v2, initial_topology(m, v2), m);
  CHECK(w2 == doctest::Approx(4.0 * w1));

  // Rate: zero for equal velocities, -1 for a unit velocity gap, zero when
  // the pair is out of sensing range.
  CHECK(lyapunov_rate(at_target, topo, m) == doctest::Approx(0.0));
  std::vector<AgentState> gap = at_target;
  gap[0].rho = Eigen::VectorXd::Constant(1, 1.0);
  CHECK(lyapunov_rate(gap, initial_topology(m, gap), m) == doctest::Approx(-1.0));
  std::vector<AgentState> far = gap;
  far[0].x = Eigen::VectorXd::Constant(1, 100.0);
  CHECK(lyapunov_rate(far, initial_topology(m, far), m) == doctest::Approx(0.0));
}

TEST_CASE("unsafe membership over the road blocks") {
  UnsafeSet unsafe;
  unsafe.blocks.push_back({Polynomial::parse("-1*x1^2 + 16*x1 - 1*x2^2 + 8*x2 - 76", 2)});
  unsafe.blocks.push_back({Polynomial::parse("x1 - 7", 2), Polynomial::parse("-1*x2 - 2", 2)});
  unsafe.blocks.push_back({Polynomial::parse("-1*x1", 2), Polynomial::parse("x2 - 2", 2)});
  unsafe.blocks.push_back({Polynomial::parse("-1*x2 - 6", 2)});
  unsafe.blocks.push_back({Polynomial::parse("x2 - 6", 2)});

  auto at = [](double x, double y) {
    Eigen::VectorXd p(2);
    p << x, y;
    return std::vector<Eigen::VectorXd>{p};
  };
  // Center of the disk block.
  auto center = unsafe_membership(at(8, 4), unsafe);
  CHECK(center[0].unsafe);
  CHECK(center[0].block == 0);
  // The corridor origin is safe.
  CHECK(!unsafe_membership(at(0, 0), unsafe)[0].unsafe);
  // Above the road boundary.
  auto high = unsafe_membership(at(3, 7), unsafe);
  CHECK(high[0].unsafe);
  CHECK(high[0].block == 4);
  // Conjunction: x1 > 7 alone is not enough for the construction block.
  CHECK(!unsafe_membership(at(8, 0), unsafe)[0].unsafe);
  CHECK(unsafe_membership(at(8, -3), unsafe)[0].unsafe);
}

TEST_CASE("stationary start stays put") {
  CoordinationModel m = pair_toy();
  m.initial[0].x = m.formation.tau[0];
  m.initial[1].x = m.formation.tau[1];
  m.initial[0].rho = m.formation.rho_star;
  m.initial[1].rho = m.formation.rho_star;
  SimParams params;
  params.horizon = 1.0;
  Trajectory traj = simulate(m, params);
  REQUIRE(!traj.monitors.empty());
  for (const auto& mon : traj.monitors) CHECK(std::abs(mon.W) <= 1e-12);
}

TEST_CASE("energy decreases between switching events") {
  CoordinationModel m = pair_toy();
  SimParams params;
  params.horizon = 5.0;
  Trajectory traj = simulate(m, params);
  REQUIRE(traj.monitors.size() > 100);
  for (size_t k = 1; k < traj.monitors.size(); ++k) {
    if (traj.monitors[k].topology_changed) continue;
    CHECK(traj.monitors[k].W <= traj.monitors[k - 1].W + 1e-9);
  }
}

TEST_CASE("divergence guard reports the step") {
  CoordinationModel m = anchored_toy();
  m.anchor_ky = {-3.0};  // destabilizing gain
  m.anchor_kv = {0.0};
  m.initial[0].x = Eigen::VectorXd::Constant(1, 1.0);
  SimParams params;
  params.horizon = 50.0;
  params.overflow_guard = 1e4;
  Trajectory traj = simulate(m, params);
  CHECK(traj.diverged);
  CHECK(traj.divergence_step > 0);
}

TEST_CASE("closed-loop polynomial field matches the numeric controller") {
  sgr::testing::Rng rng(17);
  CoordinationModel m = pair_toy();
  TopologySnapshot topo = initial_topology(m, m.initial);
  auto field = closed_loop_field(m, topo);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AgentState> s(2);
    for (auto& st : s) {
      st.x = Eigen::VectorXd::Constant(1, rng.uniform(0, 5));
      st.rho = Eigen::VectorXd::Constant(1, rng.uniform(-1, 1));
    }
    TransformedState t = transform(s, m.formation);
    // The polynomial field is frozen to the initial topology; compare against
    // the controller evaluated on the same frozen sets.
    for (int i = 0; i < 2; ++i) {
      const Eigen::VectorXd u = control_input(i, s, topo, m);
      CHECK(field[m.v_offset(i)].evaluate(t.q) == doctest::Approx(u(0)).epsilon(1e-10));
      CHECK(field[m.y_offset(i)].evaluate(t.q) == doctest::Approx(t.varrho[i](0)));
    }
  }
}

TEST_CASE("energy polynomial agrees with the numeric energy") {
  sgr::testing::Rng rng(23);
  CoordinationModel m = pair_toy();
  TopologySnapshot topo = initial_topology(m, m.initial);
  Polynomial W = lyapunov_polynomial(m, topo);
  Polynomial Wdot_ref = lyapunov_rate_polynomial(m, topo);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AgentState> s(2);
    for (auto& st : s) {
      st.x = Eigen::VectorXd::Constant(1, rng.uniform(1, 6));
      st.rho = Eigen::VectorXd::Constant(1, rng.uniform(-1, 1));
    }
    TransformedState t = transform(s, m.formation);
    CHECK(W.evaluate(t.q) == doctest::Approx(lyapunov_value(s, topo, m)).epsilon(1e-9));
    CHECK(Wdot_ref.evaluate(t.q) == doctest::Approx(lyapunov_rate(s, topo, m)).epsilon(1e-9));
  }
}

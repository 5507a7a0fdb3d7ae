#include <doctest.h>

#include "../helpers.hpp"
#include "sgr/oracle.hpp"

using namespace sgr;
using sgr::testing::anchored_toy;
using sgr::testing::halfplane_unsafe;
using sgr::testing::pair_toy;
using sgr::testing::toy_energy;
using sgr::testing::toy_energy_rate;

namespace {

CoordinationModel toy_with_halfplane() {
  CoordinationModel m = anchored_toy();
  m.unsafe.blocks.push_back({Polynomial::parse("x1 - 1", 1)});
  return m;
}

}  // namespace

TEST_CASE("classification basics") {
  CoordinationModel m = toy_with_halfplane();
  OracleOptions opts;
  opts.horizon = 20.0;

  // The equilibrium is in the region.
  CHECK(classify_initial_state(Eigen::VectorXd::Zero(2), m, opts).verdict == Verdict::in_region);

  // Starting inside the unsafe half plane fails at t = 0.
  Eigen::VectorXd bad(2);
  bad << 1.5, 0.0;
  ClassificationResult r = classify_initial_state(bad, m, opts);
  CHECK(r.verdict == Verdict::violation);
  CHECK(r.kind == ViolationKind::unsafe);
  CHECK(*r.first_violation_time == 0.0);

  // A formation pair separated beyond sensing is disconnected at t = 0.
  CoordinationModel pair = pair_toy();
  Eigen::VectorXd q0 = Eigen::VectorXd::Zero(4);
  q0(0) = 20.0;  // y separation far beyond r_s
  ClassificationResult d = classify_initial_state(q0, pair, opts);
  CHECK(d.verdict == Verdict::violation);
  CHECK(d.kind == ViolationKind::disconnect);
  CHECK(*d.first_violation_time == 0.0);
}

TEST_CASE("containment check is clean on the certified toy disk") {
  CoordinationModel m = toy_with_halfplane();
  CertifiedRegion region;
  region.W = toy_energy();
  region.c = 1.0;
  ContainmentOptions opts;
  opts.sim_subset = 10;
  opts.oracle.horizon = 20.0;
  ContainmentReport report =
      containment_check(region, m, toy_energy_rate(), 10000, opts);
  CHECK(report.n_checked == 10000);
  CHECK(report.clean());
  CHECK(report.n_simulated == 10);
}

TEST_CASE("inflating the level is caught with witnesses") {
  CoordinationModel m = toy_with_halfplane();
  CertifiedRegion region;
  region.W = toy_energy();
  region.c = 1.5;  // deliberately beyond the sound level
  ContainmentOptions opts;
  opts.sim_subset = 0;
  ContainmentReport report =
      containment_check(region, m, toy_energy_rate(), 10000, opts);
  REQUIRE(!report.clean());
  bool witness_in_halfplane = false;
  for (const auto& f : report.failures) witness_in_halfplane |= f.q(0) > 1.0;
  CHECK(witness_in_halfplane);
}

TEST_CASE("tiny sets fall back to ray sampling") {
  CoordinationModel m = anchored_toy();
  CertifiedRegion region;
  region.W = toy_energy();
  region.c = 1e-14;
  ContainmentOptions opts;
  opts.sim_subset = 0;
  ContainmentReport report = containment_check(region, m, toy_energy_rate(), 200, opts);
  CHECK(report.n_checked == 200);
  CHECK(report.surface_sampling);
  CHECK(report.clean());
}

TEST_CASE("grid oracle on a coarse toy grid") {
  CoordinationModel m = toy_with_halfplane();
  GridSpec spec;
  spec.lo = Eigen::VectorXd::Constant(2, -2.0);
  spec.hi = Eigen::VectorXd::Constant(2, 2.0);
  spec.step = 0.5;
  OracleOptions opts;
  opts.horizon = 20.0;
  GridResult grid = brute_force_region(m, spec, opts);
  REQUIRE(grid.points.size() == 81);

  int in_region = 0;
  for (size_t k = 0; k < grid.points.size(); ++k) {
    const auto& q = grid.points[k];
    const bool inside_disk = q(0) * q(0) + q(1) * q(1) <= 1.0;
    if (grid.verdicts[k].verdict == Verdict::in_region) ++in_region;
    // The certified disk is contained in the oracle region.
    if (inside_disk) CHECK(grid.verdicts[k].verdict == Verdict::in_region);
    // Unsafe starts are never in the region.
    if (q(0) > 1.0) CHECK(grid.verdicts[k].verdict == Verdict::violation);
  }
  CHECK(in_region > 9);  // strictly larger than the disk

  // Everything-unsafe region comes back empty.
  CoordinationModel all_bad = anchored_toy();
  all_bad.unsafe.blocks.push_back({Polynomial::constant(1, 1.0)});
  GridResult empty = brute_force_region(all_bad, spec, opts);
  for (const auto& v : empty.verdicts) CHECK(v.verdict == Verdict::violation);

  CoordinationModel big = pair_toy();
  big.spatial_dim = 2;  // 8 state dims exceeds the oracle guard
  big.num_agents = 2;
  GridSpec wrong;
  wrong.lo = Eigen::VectorXd::Zero(8);
  wrong.hi = Eigen::VectorXd::Ones(8);
  CHECK_THROWS_AS(brute_force_region(big, wrong, opts), CapacityError);
}

TEST_CASE("oracle volume is stable under grid refinement") {
  CoordinationModel m = toy_with_halfplane();
  OracleOptions opts;
  opts.horizon = 20.0;
  auto volume_at = [&](double step) {
    GridSpec spec;
    spec.lo = Eigen::VectorXd::Constant(2, -2.0);
    spec.hi = Eigen::VectorXd::Constant(2, 2.0);
    spec.step = step;
    GridResult grid = brute_force_region(m, spec, opts);
    long inside = 0;
    for (const auto& v : grid.verdicts) inside += v.verdict == Verdict::in_region;
    return static_cast<double>(inside) * step * step;
  };
  const double coarse = volume_at(0.4);
  const double fine = volume_at(0.2);
  CHECK(std::abs(fine - coarse) / fine < 0.02);
}

TEST_CASE("energy slope consistency scales with the step") {
  CoordinationModel m = pair_toy();
  auto deviation_at = [&](double dt) {
    SimParams params;
    params.dt = dt;
    params.horizon = 2.0;
    params.record_every = 1;
    Trajectory traj = simulate(m, params);
    return wdot_consistency(traj, m);
  };
  const double coarse = deviation_at(2e-3);
  const double fine = deviation_at(1e-3);
  CHECK(fine <= 1e-4);
  // Central differences on records are second order: quartering expected.
  CHECK(fine <= coarse * 0.35 + 1e-9);

  // Equilibrium trajectories have no deviation at all.
  CoordinationModel still = pair_toy();
  still.initial[0].x = still.formation.tau[0];
  still.initial[1].x = still.formation.tau[1];
  still.initial[0].rho = still.formation.rho_star;
  still.initial[1].rho = still.formation.rho_star;
  SimParams params;
  params.horizon = 1.0;
  CHECK(wdot_consistency(simulate(still, params), still) <= 1e-12);
}

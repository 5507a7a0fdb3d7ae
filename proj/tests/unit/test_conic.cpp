#include <doctest.h>

#include <sstream>

#include "../helpers.hpp"
#include "sgr/conic.hpp"
#include "sgr/smr.hpp"

using namespace sgr;

namespace {

ConicProgram one_scalar_geq(double bound) {
  // x - bound >= 0 as a 1x1 block.
  ConicProgram p;
  p.num_scalars = 1;
  BlockBuilder bb(1);
  bb.add_constant(0, 0, -bound);
  bb.add_coeff(0, 0, 0, 1.0);
  p.blocks.push_back(bb.finish());
  return p;
}

}  // namespace

TEST_CASE("single half line is feasible") {
  ConicOutcome out = solve_feasibility(one_scalar_geq(0.0));
  CHECK(out.status == SolveStatus::feasible);
  CHECK(out.margin >= -1e-8);
  CHECK(out.witness(0) >= -1e-8);
}

TEST_CASE("contradictory half lines are infeasible") {
  ConicProgram p = one_scalar_geq(1.0);
  BlockBuilder neg(1);
  neg.add_coeff(0, 0, 0, -1.0);  // -x >= 0
  p.blocks.push_back(neg.finish());
  ConicOutcome out = solve_feasibility(p);
  CHECK(out.status == SolveStatus::infeasible);
  CHECK(!out.diagnostic.empty());
}

TEST_CASE("gram feasibility of x^2 + 1") {
  // Over the basis (1, x) the Gram is fully determined: diag(1, 1).
  Polynomial p = Polynomial::parse("x1^2 + 1", 1);
  SmrForm form = smr_of(p);
  ConicProgram prog;
  prog.num_scalars = static_cast<int>(form.null_basis.size());
  BlockBuilder bb(form.phi.size());
  bb.set_constant(form.base);
  for (int k = 0; k < prog.num_scalars; ++k) bb.add_coeff_matrix(k, form.null_basis[k]);
  prog.blocks.push_back(bb.finish());
  ConicOutcome out = solve_feasibility(prog);
  CHECK(out.status == SolveStatus::feasible);
  CHECK(out.margin >= 1.0 - 1e-6);  // the witness is diag(1, 1)
}

TEST_CASE("linear objective examples") {
  // minimize x subject to x >= 3
  ConicProgram p = one_scalar_geq(3.0);
  p.objective = Eigen::VectorXd::Constant(1, 1.0);
  ConicOutcome out = solve_min_linear(p);
  CHECK(out.status == SolveStatus::feasible);
  CHECK(*out.objective_value == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(out.margin >= -1e-8);

  // minimize trace of a 2x2 PSD matrix with off-diagonal pinned to 1
  ConicProgram q;
  q.num_scalars = 2;
  BlockBuilder bb(2);
  bb.add_constant(0, 1, 1.0);
  bb.add_coeff(0, 0, 0, 1.0);
  bb.add_coeff(1, 1, 1, 1.0);
  q.blocks.push_back(bb.finish());
  q.objective = Eigen::VectorXd::Ones(2);
  ConicOutcome out2 = solve_min_linear(q);
  CHECK(out2.status == SolveStatus::feasible);
  CHECK(*out2.objective_value == doctest::Approx(2.0).epsilon(1e-5));

  // minimize 0: any witness works, objective returns 0
  ConicProgram r = one_scalar_geq(0.0);
  r.objective = Eigen::VectorXd::Zero(1);
  ConicOutcome out3 = solve_min_linear(r);
  CHECK(out3.status == SolveStatus::feasible);
  CHECK(*out3.objective_value == doctest::Approx(0.0));
}

TEST_CASE("unbounded direction is flagged at the scalar box") {
  ConicProgram p;
  p.num_scalars = 1;
  BlockBuilder bb(1);  // 5 - x >= 0, minimize x: unbounded below
  bb.add_constant(0, 0, 5.0);
  bb.add_coeff(0, 0, 0, -1.0);
  p.blocks.push_back(bb.finish());
  p.objective = Eigen::VectorXd::Constant(1, 1.0);
  p.scalar_bound = 100.0;
  ConicOutcome out = solve_min_linear(p);
  CHECK(out.status == SolveStatus::feasible);
  CHECK(out.hit_scalar_bound);
}

TEST_CASE("equalities restrict the feasible set") {
  // x0 + x1 = 1, both >= 0, minimize x0 -> optimum (0, 1).
  ConicProgram p;
  p.num_scalars = 2;
  for (int i = 0; i < 2; ++i) {
    BlockBuilder bb(1);
    bb.add_coeff(i, 0, 0, 1.0);
    p.blocks.push_back(bb.finish());
  }
  ConicProgram::Equality eq;
  eq.coeffs = Eigen::VectorXd::Ones(2);
  eq.constant = -1.0;
  p.equalities.push_back(eq);
  p.objective = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
  ConicOutcome out = solve_min_linear(p);
  CHECK(out.status == SolveStatus::feasible);
  CHECK(*out.objective_value == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(out.witness.sum() == doctest::Approx(1.0).epsilon(1e-6));

  // Inconsistent equalities are infeasible.
  ConicProgram q = p;
  ConicProgram::Equality eq2;
  eq2.coeffs = Eigen::VectorXd::Ones(2);
  eq2.constant = -2.0;
  q.equalities.push_back(eq2);
  CHECK(solve_feasibility(q).status == SolveStatus::infeasible);
}

TEST_CASE("witnesses always re-verify by direct eigenvalues") {
  sgr::testing::Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    ConicProgram p;
    p.num_scalars = rng.integer(1, 4);
    const int side = rng.integer(1, 4);
    BlockBuilder bb(side);
    for (int r = 0; r < side; ++r) bb.add_constant(r, r, rng.uniform(0.5, 2.0));
    for (int s = 0; s < p.num_scalars; ++s)
      bb.add_coeff(s, rng.integer(0, side - 1), rng.integer(0, side - 1), rng.uniform(-1, 1));
    p.blocks.push_back(bb.finish());
    ConicOutcome out = solve_feasibility(p);
    if (out.status == SolveStatus::feasible) {
      // ConicOutcome invariant: feasible implies margin >= -tol_psd, where the
      // margin is recomputed from the blocks, not taken from the solver.
      CHECK(out.margin >= -1e-8);
    }
  }
}

TEST_CASE("adding an inert scalar never breaks feasibility") {
  sgr::testing::Rng rng(53);
  for (int trial = 0; trial < 25; ++trial) {
    ConicProgram p;
    p.num_scalars = 2;
    BlockBuilder bb(2);
    bb.add_constant(0, 0, rng.uniform(-0.2, 2.0));
    bb.add_constant(1, 1, rng.uniform(-0.2, 2.0));
    bb.add_coeff(0, 0, 0, 1.0);
    bb.add_coeff(1, 0, 1, rng.uniform(-1, 1));
    p.blocks.push_back(bb.finish());
    const SolveStatus before = solve_feasibility(p).status;

    ConicProgram relaxed = p;
    relaxed.num_scalars += 1;  // appears in no block
    const SolveStatus after = solve_feasibility(relaxed).status;
    if (before == SolveStatus::feasible) CHECK(after == SolveStatus::feasible);
  }
}

TEST_CASE("sdpa dump is structurally sound") {
  ConicProgram p = one_scalar_geq(3.0);
  p.objective = Eigen::VectorXd::Constant(1, 1.0);
  ConicProgram::Equality eq;
  eq.coeffs = Eigen::VectorXd::Constant(1, 1.0);
  eq.constant = -4.0;
  p.equalities.push_back(eq);
  std::ostringstream out;
  write_sdpa(p, out);
  const std::string text = out.str();
  CHECK(text.find("1 = mDIM") != std::string::npos);
  CHECK(text.find("3 = nBLOCK") != std::string::npos);  // block + equality pair
  CHECK(text.find("bLOCKsTRUCT") != std::string::npos);
}

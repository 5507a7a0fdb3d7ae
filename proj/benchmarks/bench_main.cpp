#include <benchmark/benchmark.h>

#include "../tests/helpers.hpp"
#include "sgr/estimator.hpp"
#include "sgr/oracle.hpp"
#include "sgr/smr.hpp"

using namespace sgr;

namespace {

Polynomial dense_poly(int n, int degree) {
  sgr::testing::Rng rng(123);
  Polynomial p(n);
  PowerVector phi(n, degree);
  for (const auto& m : phi.monomials()) p.add_term(m, rng.uniform(-2, 2));
  return p;
}

void BM_polynomial_multiply(benchmark::State& state) {
  const Polynomial p = dense_poly(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(p * p);
}
BENCHMARK(BM_polynomial_multiply)->Arg(2)->Arg(4)->Arg(6);

void BM_smr_of(benchmark::State& state) {
  const Polynomial p = dense_poly(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(smr_of(p));
}
BENCHMARK(BM_smr_of)->Arg(2)->Arg(4)->Arg(6);

void BM_algebraic_connectivity(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  WeightedGraph g(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) g.set_edge(i, j, 1.0 + (i + j) % 3);
  const Eigen::MatrixXd L = laplacian(g);
  for (auto _ : state) benchmark::DoNotOptimize(algebraic_connectivity(L));
}
BENCHMARK(BM_algebraic_connectivity)->Arg(3)->Arg(8)->Arg(16);

void BM_simulate_pair(benchmark::State& state) {
  CoordinationModel m = sgr::testing::pair_toy();
  SimParams params;
  params.horizon = 1.0;
  params.record_every = 1000;
  for (auto _ : state) benchmark::DoNotOptimize(simulate(m, params));
}
BENCHMARK(BM_simulate_pair);

void BM_gevp_probe(benchmark::State& state) {
  const Polynomial W = sgr::testing::toy_energy();
  const Polynomial Wdot = sgr::testing::toy_energy_rate();
  const Polynomial omega = sgr::testing::halfplane_unsafe();
  for (auto _ : state) {
    GevpAssembly a = assemble_gevp_lmi(W, Wdot, {omega}, -0.5);
    benchmark::DoNotOptimize(solve_feasibility(a.program));
  }
}
BENCHMARK(BM_gevp_probe);

void BM_level_maximization(benchmark::State& state) {
  const Polynomial W = sgr::testing::toy_energy();
  const Polynomial Wdot = sgr::testing::toy_energy_rate();
  const Polynomial omega = sgr::testing::halfplane_unsafe();
  for (auto _ : state) benchmark::DoNotOptimize(estimate_c_gevp(W, Wdot, {{omega}}));
}
BENCHMARK(BM_level_maximization);

void BM_classify_initial_state(benchmark::State& state) {
  CoordinationModel m = sgr::testing::anchored_toy();
  m.unsafe.blocks.push_back({Polynomial::parse("x1 - 1", 1)});
  OracleOptions opts;
  opts.horizon = 30.0;
  Eigen::VectorXd q(2);
  q << 0.6, -0.4;
  for (auto _ : state) benchmark::DoNotOptimize(classify_initial_state(q, m, opts));
}
BENCHMARK(BM_classify_initial_state);

}  // namespace

BENCHMARK_MAIN();

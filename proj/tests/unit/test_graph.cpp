#include <doctest.h>

#include <numeric>

#include "../helpers.hpp"
#include "sgr/graph.hpp"

using namespace sgr;

namespace {

// Reachability reference for the connectivity equivalence property.
struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  void join(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

TEST_CASE("laplacian examples") {
  WeightedGraph two(2);
  two.set_edge(0, 1, 2.0);
  Eigen::MatrixXd L = laplacian(two);
  Eigen::MatrixXd expected(2, 2);
  expected << 2, -2, -2, 2;
  CHECK((L - expected).norm() == 0.0);

  WeightedGraph empty(3);
  CHECK(laplacian(empty).norm() == 0.0);

  WeightedGraph path(3);
  path.set_edge(0, 1, 1.0);
  path.set_edge(1, 2, 1.0);
  Eigen::MatrixXd Lp = laplacian(path);
  Eigen::MatrixXd expected_path(3, 3);
  expected_path << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((Lp - expected_path).norm() == 0.0);
  CHECK(Lp.rowwise().sum().norm() == doctest::Approx(0.0));
}

TEST_CASE("algebraic connectivity") {
  WeightedGraph path(3);
  path.set_edge(0, 1, 1.0);
  path.set_edge(1, 2, 1.0);
  CHECK(algebraic_connectivity(laplacian(path)) == doctest::Approx(1.0));

  WeightedGraph empty(3);
  CHECK(algebraic_connectivity(laplacian(empty)) == doctest::Approx(0.0));
  CHECK(!is_connected(algebraic_connectivity(laplacian(empty))));

  WeightedGraph two(2);
  two.set_edge(0, 1, 2.0);
  CHECK(algebraic_connectivity(laplacian(two)) == doctest::Approx(4.0));

  WeightedGraph single(1);
  CHECK(is_connected(algebraic_connectivity(laplacian(single))));
}

TEST_CASE("hysteresis switching thresholds") {
  Geometry geo{0.5, 0.6, 2.0, 6.0, 0.5, 1.25};
  geo.validate();
  Eigen::MatrixXd base = Eigen::MatrixXd::Ones(2, 2) - Eigen::MatrixXd::Identity(2, 2);
  auto positions_at = [](double d) {
    std::vector<Eigen::VectorXd> p(2, Eigen::VectorXd::Zero(2));
    p[1](0) = d;
    return p;
  };

  WeightedGraph none(2);
  // no prior edge: appears at or below r_s - eps only
  CHECK(update_edges(positions_at(geo.r_s - geo.eps - 0.01), none, geo, base).has_edge(0, 1));
  CHECK(!update_edges(positions_at(geo.r_s - geo.eps / 2), none, geo, base).has_edge(0, 1));

  WeightedGraph linked(2);
  linked.set_edge(0, 1, 1.0);
  // prior edge: survives the hysteresis band, drops past r_s
  CHECK(update_edges(positions_at(geo.r_s - geo.eps / 2), linked, geo, base).has_edge(0, 1));
  CHECK(!update_edges(positions_at(geo.r_s + 0.01), linked, geo, base).has_edge(0, 1));
}

TEST_CASE("update is idempotent at fixed positions") {
  sgr::testing::Rng rng(7);
  Geometry geo{0.5, 0.6, 2.0, 6.0, 0.5, 1.25};
  Eigen::MatrixXd base = Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Eigen::VectorXd> pos;
    for (int i = 0; i < 4; ++i) {
      Eigen::VectorXd p(2);
      p << rng.uniform(-8, 8), rng.uniform(-8, 8);
      pos.push_back(p);
    }
    WeightedGraph none(4);
    WeightedGraph once = update_edges(pos, none, geo, base);
    WeightedGraph twice = update_edges(pos, once, geo, base);
    CHECK(once.edges() == twice.edges());
  }
}

TEST_CASE("neighbor set taxonomy") {
  Geometry geo{0.5, 0.6, 2.0, 6.0, 0.5, 1.25};
  std::vector<Eigen::VectorXd> pos(3, Eigen::VectorXd::Zero(1));
  pos[1](0) = 2.5;   // beyond r_z, within sensing
  pos[2](0) = -1.9;  // inside r_z

  WeightedGraph g(3);
  g.set_edge(0, 1, 1.0);
  g.set_edge(0, 2, 1.0);
  std::set<Edge> formation = {make_edge(0, 1)};

  NeighborSets sets = neighbor_sets(0, g, formation, pos, geo);
  CHECK(sets.sensing == std::vector<int>{1, 2});
  CHECK(sets.formation == std::vector<int>{1});
  CHECK(sets.collision == std::vector<int>{2});

  WeightedGraph isolated(3);
  NeighborSets none = neighbor_sets(0, isolated, formation, pos, geo);
  CHECK(none.sensing.empty());
  CHECK(none.formation.empty());
  CHECK(none.collision.empty());
}

TEST_CASE("random laplacians are PSD and match reachability") {
  sgr::testing::Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.integer(2, 6);
    WeightedGraph g(n);
    UnionFind uf(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (rng.uniform(0, 1) < 0.4) {
          g.set_edge(i, j, rng.uniform(0.1, 3.0));
          uf.join(i, j);
        }
      }
    }
    Eigen::MatrixXd L = laplacian(g);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);

    bool reachable = true;
    for (int i = 1; i < n; ++i) reachable = reachable && uf.find(i) == uf.find(0);
    CHECK(is_connected(algebraic_connectivity(L)) == reachable);
  }
}

TEST_CASE("geometry ordering is enforced") {
  Geometry bad{0.5, 0.4, 2.0, 6.0, 0.5, 1.25};  // r_c < r_a
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  Geometry bad2{0.5, 0.6, 7.0, 6.0, 0.5, 1.25};  // r_z >= r_s
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
  Geometry bad3{0.5, 0.6, 2.0, 6.0, 5.0, 1.25};  // eps > r_s - r_z
  CHECK_THROWS_AS(bad3.validate(), ConfigError);
  Geometry bad4{0.5, 0.6, 2.0, 6.0, 0.5, 1.1};  // d_s <= 2 r_c
  CHECK_THROWS_AS(bad4.validate(), ConfigError);
}

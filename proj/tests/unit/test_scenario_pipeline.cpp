#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "../helpers.hpp"
#include "sgr/pipeline.hpp"
#include "sgr/scenario.hpp"

using namespace sgr;
namespace fs = std::filesystem;

#ifndef SGR_SCENARIO_DIR
#define SGR_SCENARIO_DIR "scenarios"
#endif

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(SGR_SCENARIO_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json platoon_json() { return nlohmann::json::parse(slurp(scenario_path("platoon3.json"))); }

std::string tmp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("sgr_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("shipped platoon scenario loads with its declared geometry") {
  ScenarioConfig cfg = parse_scenario(scenario_path("platoon3.json"));
  CHECK(cfg.model.num_agents == 3);
  CHECK(cfg.model.spatial_dim == 2);
  CHECK(cfg.model.geo.r_s == 11.0);
  CHECK(cfg.model.geo.r_z == 3.5);
  CHECK(cfg.model.geo.r_c == doctest::Approx(1.25 * 0.75));
  // The safety distance ships slightly above twice the collision radius; the
  // boundary value would empty the switching-margin interval.
  CHECK(cfg.model.geo.d_s == doctest::Approx(2.05 * cfg.model.geo.r_c));
  CHECK(cfg.model.unsafe.blocks.size() == 5);
  CHECK(cfg.model.formation.edges.size() == 2);
  CHECK(cfg.seed != 0);
}

TEST_CASE("scenario validation failures name the rule") {
  nlohmann::json j = platoon_json();
  SUBCASE("geometry ordering") {
    j["geometry"]["r_z"] = 12.0;  // r_z >= r_s
    CHECK_THROWS_WITH_AS(parse_scenario_text(j.dump()),
                         doctest::Contains("geometry"), ConfigError);
  }
  SUBCASE("energy ceiling") {
    j["barriers"]["mu1"] = 1.0;  // below the initial energy
    CHECK_THROWS_WITH_AS(parse_scenario_text(j.dump()),
                         doctest::Contains("initial energy"), ConfigError);
  }
  SUBCASE("assumption 1") {
    j["formation"]["tau"][0] = {4.5, 0.0};  // offset gap 0.5 < r_z
    CHECK_THROWS_WITH_AS(parse_scenario_text(j.dump()),
                         doctest::Contains("assumption 1"), ConfigError);
  }
  SUBCASE("assumption 2") {
    j["agents"][2]["x"] = {-40.0, 0.0};  // formation edge outside sensing
    CHECK_THROWS_WITH_AS(parse_scenario_text(j.dump()),
                         doctest::Contains("assumption 2"), ConfigError);
  }
  SUBCASE("bad polynomial text") {
    j["unsafe"][0]["polynomials"][0] = "x7 - 1";
    CHECK_THROWS_WITH_AS(parse_scenario_text(j.dump()),
                         doctest::Contains("unsafe[0]"), ConfigError);
  }
  SUBCASE("unknown shape kind") {
    j["barriers"]["connectivity"] = {{"kind", "mystery"}};
    CHECK_THROWS_AS(parse_scenario_text(j.dump()), ConfigError);
  }
}

TEST_CASE("scenario hash is stable and seeds differ across files") {
  const std::string a = slurp(scenario_path("platoon3.json"));
  const std::string b = slurp(scenario_path("toy_halfplane.json"));
  CHECK(scenario_hash(a) == scenario_hash(a));
  CHECK(scenario_hash(a) != scenario_hash(b));
}

TEST_CASE("simulate emits deterministic artifacts") {
  ScenarioConfig cfg = parse_scenario(scenario_path("toy_halfplane.json"));
  cfg.sim.horizon = 2.0;
  PipelineOverrides overrides;
  overrides.out_dir = tmp_dir("det1");
  REQUIRE(run_pipeline("simulate", cfg, overrides).exit_code == 0);
  PipelineOverrides again;
  again.out_dir = tmp_dir("det2");
  REQUIRE(run_pipeline("simulate", cfg, again).exit_code == 0);
  CHECK(slurp(overrides.out_dir + "/trajectory.csv") == slurp(again.out_dir + "/trajectory.csv"));

  const std::string header = slurp(overrides.out_dir + "/trajectory.csv").substr(0, 60);
  CHECK(header.find("t,agent,x1,v1,lambda2,min_dist,W,Wdot,unsafe") == 0);
}

TEST_CASE("edge events are logged when a pair separates") {
  // Four agents in a line whose outermost pair starts inside sensing but
  // settles beyond it.
  nlohmann::json j = {
      {"name", "chain4"},
      {"spatial_dim", 1},
      {"agents",
       {{{"x", {10.4}}, {"v", {0.0}}},
        {{"x", {7.0}}, {"v", {0.0}}},
        {{"x", {3.4}}, {"v", {0.0}}},
        {{"x", {0.0}}, {"v", {0.0}}}}},
      {"formation",
       {{"tau", {{12.0}, {8.0}, {4.0}, {0.0}}},
        {"rho_star", {0.0}},
        {"edges", {{0, 1}, {1, 2}, {2, 3}}}}},
      {"geometry",
       {{"r_a", 0.5}, {"r_c", 0.6}, {"r_z", 2.0}, {"r_s", 11.0}, {"eps", 0.5}, {"d_s", 1.25}}},
      {"barriers",
       {{"mode", "fixed"},
        {"mu1", 200.0},
        {"mu2", 200.0},
        {"connectivity", {{"kind", "quartic"}}},
        {"collision", {{"kind", "ring"}, {"ring_radius", 7.0}}}}},
      {"sim", {{"dt", 0.001}, {"horizon", 30.0}, {"record_every", 20}}},
      {"outputs", {{"dir", "unused"}}}};
  ScenarioConfig cfg = parse_scenario_text(j.dump());
  PipelineOverrides overrides;
  overrides.out_dir = tmp_dir("events");
  PipelineResult res = run_pipeline("simulate", cfg, overrides);
  REQUIRE(res.exit_code == 0);
  const std::string events = slurp(overrides.out_dir + "/edge_events.csv");
  CHECK(events.find("0,3,removed") != std::string::npos);
}

TEST_CASE("certify artifact carries the mode and verifiable certificates") {
  ScenarioConfig cfg = parse_scenario(scenario_path("toy_halfplane.json"));
  PipelineOverrides overrides;
  overrides.out_dir = tmp_dir("certify");
  PipelineResult res = run_pipeline("certify", cfg, overrides);
  REQUIRE(res.exit_code == 0);
  nlohmann::json report = nlohmann::json::parse(slurp(overrides.out_dir + "/region.json"));
  CHECK(report["mode"] == "strict-exclusion");
  CHECK(report["c"].get<double>() == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(report["certificates"].size() >= 2);
  for (const auto& cert : report["certificates"])
    CHECK(cert["reconstruction_error"].get<double>() <= 1e-6);
}

TEST_CASE("slice vertices sit on the level set and stay safe") {
  ScenarioConfig cfg = parse_scenario(scenario_path("toy_halfplane.json"));
  PipelineOverrides overrides;
  overrides.out_dir = tmp_dir("slice");
  PipelineResult res = run_pipeline("slice", cfg, overrides);
  REQUIRE(res.exit_code == 0);

  // Re-read the polyline and verify the claims directly.
  std::ifstream in(overrides.out_dir + "/slice.csv");
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<double, 2>> pts;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    pts.push_back({std::stod(line.substr(c1 + 1, c2 - c1 - 1)), std::stod(line.substr(c2 + 1))});
  }
  REQUIRE(pts.size() > 100);
  const Polynomial W = sgr::testing::toy_energy() * 0.5;  // halfplane toy energy
  RegionResult region = estimate_region(cfg.model, cfg.estimator);
  REQUIRE(region.status == CertifyStatus::certified);
  const double c = region.region->c;
  for (size_t k = 0; k < pts.size(); k += 7) {
    Eigen::VectorXd q(2);
    q << pts[k][0], pts[k][1];
    CHECK(std::abs(W.evaluate(q) - c) < 1e-6);
    CHECK(pts[k][0] <= 1.0);  // never inside the half plane
  }
  // Closed loop: endpoints coincide.
  CHECK(std::abs(pts.front()[0] - pts.back()[0]) < 1e-6);
  CHECK(std::abs(pts.front()[1] - pts.back()[1]) < 1e-6);

  // No self intersections among non-adjacent segments.
  auto orient = [](const std::array<double, 2>& a, const std::array<double, 2>& b,
                   const std::array<double, 2>& c) {
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
  };
  int intersections = 0;
  const size_t n = pts.size() - 1;
  for (size_t i = 0; i + 1 < n; i += 3) {
    for (size_t j = i + 2; j < n; j += 3) {
      if (i == 0 && j == n - 1) continue;
      const double o1 = orient(pts[i], pts[i + 1], pts[j]);
      const double o2 = orient(pts[i], pts[i + 1], pts[j + 1]);
      const double o3 = orient(pts[j], pts[j + 1], pts[i]);
      const double o4 = orient(pts[j], pts[j + 1], pts[i + 1]);
      if (o1 * o2 < 0 && o3 * o4 < 0) ++intersections;
    }
  }
  CHECK(intersections == 0);
}

TEST_CASE("sweep fans out into named subdirectories") {
  ScenarioConfig cfg = parse_scenario(scenario_path("toy_pair.json"));
  PipelineOverrides overrides;
  overrides.out_dir = tmp_dir("sweep");
  PipelineResult res = run_pipeline("sweep", cfg, overrides);
  REQUIRE(res.exit_code == 0);
  CHECK(fs::exists(overrides.out_dir + "/iters2/trajectory.csv"));
  CHECK(fs::exists(overrides.out_dir + "/coarse_dt/trajectory.csv"));
  CHECK(fs::exists(overrides.out_dir + "/sweep_summary.json"));
}

TEST_CASE("grid csv layout") {
  GridResult grid;
  grid.spec.lo = Eigen::VectorXd::Constant(2, 0.0);
  grid.spec.hi = Eigen::VectorXd::Constant(2, 1.0);
  grid.spec.step = 1.0;
  grid.shape = {2, 2};
  Eigen::VectorXd p(2);
  p << 0, 1;
  grid.points = {p, p};
  ClassificationResult ok;
  ok.verdict = Verdict::in_region;
  ClassificationResult bad;
  bad.kind = ViolationKind::unsafe;
  bad.first_violation_time = 0.25;
  grid.verdicts = {ok, bad};
  const std::string path = tmp_dir("grid") + "/grid.csv";
  write_grid_csv(grid, path);
  const std::string text = slurp(path);
  CHECK(text.find("dim1,dim2,verdict,violation_kind,t_violation") == 0);
  CHECK(text.find("in_region,none,") != std::string::npos);
  CHECK(text.find("violation,unsafe,0.25") != std::string::npos);
}

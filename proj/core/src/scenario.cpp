#include "sgr/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sgr {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw ConfigError(path + ": " + why);
}

Eigen::VectorXd to_vector(const json& j, int expect, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array");
  if (expect >= 0 && static_cast<int>(j.size()) != expect)
    fail(path, "expected " + std::to_string(expect) + " entries, got " + std::to_string(j.size()));
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(path, "entry " + std::to_string(i) + " is not a number");
    v(i) = j[i].get<double>();
  }
  return v;
}

double number_at(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) fail(path, "missing field '" + key + "'");
  if (!j[key].is_number()) fail(path + "." + key, "expected a number");
  return j[key].get<double>();
}

double number_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

BarrierShape parse_shape(const json& j, BarrierKind kind, double mu, double r_hat, double d_hat,
                         double ring_default, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) fail(path, "expected an object with a 'kind'");
  const std::string k = j["kind"].get<std::string>();
  if (kind == BarrierKind::connectivity && k == "quartic") return quartic_connectivity(mu, r_hat);
  if (kind == BarrierKind::collision && k == "ring") {
    const double ring = number_or(j, "ring_radius", ring_default);
    return ring_collision(mu, d_hat, ring);
  }
  if (k == "poly") {
    if (!j.contains("coeffs_z2")) fail(path, "'poly' shape needs 'coeffs_z2'");
    BarrierShape s;
    s.kind = kind;
    s.mu = mu;
    s.poly = Polynomial(1);
    const auto& coeffs = j["coeffs_z2"];
    // Entry k multiplies z^{2k}; connectivity shapes must start at z^2.
    for (size_t i = 0; i < coeffs.size(); ++i) {
      const double c = coeffs[i].get<double>();
      if (c == 0.0) continue;
      if (kind == BarrierKind::connectivity && i == 0)
        fail(path, "connectivity shape may not have a constant term");
      s.poly.add_term(Monomial::var_power(1, 0, 2 * static_cast<unsigned>(i)), c);
    }
    return s;
  }
  fail(path, "unknown shape kind '" + k + "' for this barrier");
}

}  // namespace

std::uint64_t scenario_hash(const std::string& canonical_text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical_text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

ScenarioConfig parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

ScenarioConfig parse_scenario_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& ex) {
    throw ConfigError(origin + ": invalid JSON: " + ex.what());
  }

  ScenarioConfig cfg;
  cfg.name = j.value("name", "scenario");
  cfg.raw_json = text;
  cfg.seed = j.contains("seed") ? j["seed"].get<std::uint64_t>() : scenario_hash(j.dump());

  CoordinationModel& model = cfg.model;
  if (!j.contains("spatial_dim")) fail("spatial_dim", "missing");
  model.spatial_dim = j["spatial_dim"].get<int>();
  if (model.spatial_dim < 1) fail("spatial_dim", "must be >= 1");

  if (!j.contains("agents") || !j["agents"].is_array() || j["agents"].empty())
    fail("agents", "need a non-empty array");
  model.num_agents = static_cast<int>(j["agents"].size());
  for (size_t i = 0; i < j["agents"].size(); ++i) {
    const auto& a = j["agents"][i];
    const std::string path = "agents[" + std::to_string(i) + "]";
    AgentState s;
    if (!a.contains("x")) fail(path, "missing 'x'");
    s.x = to_vector(a["x"], model.spatial_dim, path + ".x");
    s.rho = a.contains("v") ? to_vector(a["v"], model.spatial_dim, path + ".v")
                            : Eigen::VectorXd::Zero(model.spatial_dim);
    model.initial.push_back(std::move(s));
    model.anchor_ky.push_back(number_or(a, "anchor_ky", 0.0));
    model.anchor_kv.push_back(number_or(a, "anchor_kv", 0.0));
  }

  if (!j.contains("formation")) fail("formation", "missing");
  {
    const auto& f = j["formation"];
    if (!f.contains("tau") || static_cast<int>(f["tau"].size()) != model.num_agents)
      fail("formation.tau", "need one offset per agent");
    for (size_t i = 0; i < f["tau"].size(); ++i)
      model.formation.tau.push_back(
          to_vector(f["tau"][i], model.spatial_dim, "formation.tau[" + std::to_string(i) + "]"));
    model.formation.rho_star =
        f.contains("rho_star") ? to_vector(f["rho_star"], model.spatial_dim, "formation.rho_star")
                               : Eigen::VectorXd::Zero(model.spatial_dim);
    if (f.contains("edges")) {
      for (const auto& e : f["edges"]) {
        if (!e.is_array() || e.size() != 2) fail("formation.edges", "entries must be index pairs");
        const int a = e[0].get<int>(), b = e[1].get<int>();
        if (a == b || a < 0 || b < 0 || a >= model.num_agents || b >= model.num_agents)
          fail("formation.edges", "invalid pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
        model.formation.edges.insert(make_edge(a, b));
      }
    }
  }

  if (!j.contains("geometry")) fail("geometry", "missing");
  {
    const auto& g = j["geometry"];
    model.geo.r_a = number_at(g, "r_a", "geometry");
    model.geo.r_c = number_at(g, "r_c", "geometry");
    model.geo.r_z = number_at(g, "r_z", "geometry");
    model.geo.r_s = number_at(g, "r_s", "geometry");
    model.geo.eps = number_at(g, "eps", "geometry");
    model.geo.d_s = number_at(g, "d_s", "geometry");
    model.geo.validate();
  }
  model.eps_hat = j.contains("eps_hat") ? j["eps_hat"].get<double>() : -1.0;
  model.resolved_eps_hat();  // validates the interval

  if (j.contains("weights")) {
    const auto& w = j["weights"];
    if (static_cast<int>(w.size()) != model.num_agents) fail("weights", "need a square matrix");
    model.base_weights = Eigen::MatrixXd::Zero(model.num_agents, model.num_agents);
    for (int r = 0; r < model.num_agents; ++r) {
      const Eigen::VectorXd row =
          to_vector(w[r], model.num_agents, "weights[" + std::to_string(r) + "]");
      model.base_weights.row(r) = row.transpose();
    }
    for (int r = 0; r < model.num_agents; ++r) {
      if (model.base_weights(r, r) != 0.0) fail("weights", "diagonal must be zero");
      for (int c = r + 1; c < model.num_agents; ++c)
        if (std::abs(model.base_weights(r, c) - model.base_weights(c, r)) > 1e-12)
          fail("weights", "matrix must be symmetric");
    }
  } else {
    model.base_weights =
        Eigen::MatrixXd::Ones(model.num_agents, model.num_agents) -
        Eigen::MatrixXd::Identity(model.num_agents, model.num_agents);
  }

  // Barriers.
  if (!j.contains("barriers")) fail("barriers", "missing");
  double r_tilde_z = model.geo.r_z;
  {
    const auto& b = j["barriers"];
    const double mu1 = number_at(b, "mu1", "barriers");
    const double mu2 = number_at(b, "mu2", "barriers");
    if (mu1 <= 0 || mu2 <= 0) fail("barriers", "mu1 and mu2 must be positive");
    cfg.barrier_mode = b.value("mode", "fixed") == std::string("optimize") ? BarrierMode::optimize
                                                                           : BarrierMode::fixed;
    cfg.estimator.barrier_degree = b.value("degree", 4);
    r_tilde_z = number_or(b, "ring_radius", model.geo.r_z);
    const double tau_norm = model.worst_case_tau_norm();
    const double r_hat = connectivity_interval_end(model.geo, tau_norm);
    const double d_hat = collision_interval_start(model.geo, tau_norm);
    if (r_hat <= 0) fail("geometry", "r_s must exceed the largest formation offset distance");
    model.conn_barrier =
        b.contains("connectivity")
            ? parse_shape(b["connectivity"], BarrierKind::connectivity, mu1, r_hat, d_hat,
                          r_tilde_z, "barriers.connectivity")
            : quartic_connectivity(mu1, r_hat);
    model.coll_barrier = b.contains("collision")
                             ? parse_shape(b["collision"], BarrierKind::collision, mu2, r_hat,
                                           d_hat, r_tilde_z, "barriers.collision")
                             : ring_collision(mu2, d_hat, r_tilde_z);

    const double z_max =
        model.geo.r_z + tau_norm > d_hat ? model.geo.r_z + tau_norm : 1.5 * d_hat;
    BarrierCheck conn_check = validate_barrier_numeric(model.conn_barrier, model.geo, tau_norm);
    if (!conn_check.pass)
      fail("barriers.connectivity", conn_check.reason + " (z = " +
                                        std::to_string(conn_check.witness_z.value_or(0)) + ")");
    BarrierCheck coll_check =
        validate_barrier_numeric(model.coll_barrier, model.geo, tau_norm, 10000, z_max);
    if (!coll_check.pass)
      fail("barriers.collision", coll_check.reason + " (z = " +
                                     std::to_string(coll_check.witness_z.value_or(0)) + ")");
  }

  // Unsafe blocks (positions, text grammar).
  if (j.contains("unsafe")) {
    for (size_t b = 0; b < j["unsafe"].size(); ++b) {
      const auto& blk = j["unsafe"][b];
      const std::string path = "unsafe[" + std::to_string(b) + "]";
      if (!blk.contains("polynomials") || blk["polynomials"].empty())
        fail(path, "each block needs a non-empty 'polynomials' list");
      std::vector<Polynomial> polys;
      for (const auto& s : blk["polynomials"]) {
        try {
          polys.push_back(Polynomial::parse(s.get<std::string>(), model.spatial_dim));
        } catch (const ParseError& ex) {
          fail(path, std::string("bad polynomial: ") + ex.what());
        }
      }
      model.unsafe.blocks.push_back(std::move(polys));
    }
  }

  // Estimator knobs.
  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    cfg.estimator.sigma1 = number_or(e, "sigma1", 1.0);
    cfg.estimator.sigma2 = number_or(e, "sigma2", 1.0);
    cfg.estimator.deg_s = e.value("deg_s", -1);
    cfg.estimator.deg_r = e.value("deg_r", -1);
    cfg.estimator.deg_t = e.value("deg_t", -1);
    cfg.estimator.bisect_tol = number_or(e, "bisect_tol", 1e-4);
    cfg.estimator.mu_strict = number_or(e, "mu_strict", 1e-7);
    cfg.estimator.strict_exclusion = e.value("strict_exclusion", true);
    cfg.estimator.tol_psd = number_or(e, "tol_psd", 1e-8);
    cfg.estimator.tol_obj = number_or(e, "tol_obj", 1e-6);
    cfg.estimator.n_iters = e.value("n_iters", 5);
    if (cfg.estimator.sigma1 <= 0 || cfg.estimator.sigma2 <= 0)
      fail("estimator", "sigma1 and sigma2 must be positive");
  }

  // Simulation parameters.
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    cfg.sim.dt = number_or(s, "dt", 1e-3);
    cfg.sim.horizon = number_or(s, "horizon", 50.0);
    cfg.sim.stop_on_violation = s.value("stop_on_violation", false);
    cfg.sim.overflow_guard = number_or(s, "overflow_guard", 1e6);
    cfg.sim.record_every = s.value("record_every", 1);
    cfg.oracle.tol_conv = number_or(s, "tol_conv", 1e-2);
    if (cfg.sim.dt <= 0 || cfg.sim.horizon <= 0) fail("sim", "dt and horizon must be positive");
  }
  cfg.oracle.dt = cfg.sim.dt;
  cfg.oracle.horizon = cfg.sim.horizon;

  if (j.contains("oracle")) {
    const auto& o = j["oracle"];
    cfg.oracle_samples = o.value("n_samples", 10000);
    cfg.oracle_sim_subset = o.value("sim_subset", 50);
    if (o.contains("grid")) {
      const auto& g = o["grid"];
      cfg.grid.lo = to_vector(g["min"], -1, "oracle.grid.min");
      cfg.grid.hi = to_vector(g["max"], -1, "oracle.grid.max");
      cfg.grid.step = number_or(g, "step", 0.05);
      cfg.has_grid = true;
    }
  }

  if (j.contains("outputs")) cfg.output_dir = j["outputs"].value("dir", "out");
  if (j.contains("slice")) {
    const auto& s = j["slice"];
    cfg.slice_agent = s.value("agent", 0);
    cfg.slice_dim_a = s.value("dim_a", 0);
    cfg.slice_dim_b = s.value("dim_b", model.spatial_dim > 1 ? 1 : model.spatial_dim);
    cfg.slice_fix_at_initial = s.value("fix_at", "formation") == std::string("initial");
  } else {
    cfg.slice_dim_b = model.spatial_dim > 1 ? 1 : model.spatial_dim;
  }

  if (j.contains("sweep")) {
    for (const auto& entry : j["sweep"]) {
      if (!entry.contains("name") || !entry.contains("overrides"))
        fail("sweep", "entries need 'name' and 'overrides'");
      cfg.sweep.emplace_back(entry["name"].get<std::string>(), entry["overrides"].dump());
    }
  }

  // Model-level assumptions (throws on hard violations).
  for (auto& w : validate_model(model)) cfg.warnings.push_back(std::move(w));

  // Energy caps: the initial energy must sit strictly below both barrier
  // ceilings, otherwise a single switching event can breach them. The
  // worst-case cap expression is reported as a warning when it exceeds the
  // ceilings (it does for any formation with edges).
  {
    const TopologySnapshot topo = initial_topology(model, model.initial);
    const double W0 = lyapunov_value(model.initial, topo, model);
    const double mu1 = model.conn_barrier.mu;
    const double mu2 = model.coll_barrier.mu;
    if (!(mu1 > W0) || !(mu2 > W0))
      fail("barriers", "initial energy W(t0) = " + std::to_string(W0) +
                           " must lie strictly below mu1 and mu2");
    const double cap = mu_max(model, model.initial, topo);
    if (!(mu1 > cap) || !(mu2 > cap))
      cfg.warnings.push_back("worst-case energy cap mu_max = " + std::to_string(cap) +
                             " exceeds mu1/mu2; switching-time jumps are validated by simulation "
                             "instead");
  }

  (void)origin;
  return cfg;
}

}  // namespace sgr

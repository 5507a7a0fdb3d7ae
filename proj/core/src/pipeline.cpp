#include "sgr/pipeline.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

namespace sgr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  return out;
}

json certificate_json(const SosCertificate& cert) {
  json c;
  c["label"] = cert.label;
  c["margin"] = cert.margin;
  c["reconstruction_error"] = cert.reconstruction_error;
  c["basis_size"] = cert.phi_basis.size();
  json mult = json::object();
  for (const auto& [name, poly] : cert.multipliers) mult[name] = poly.to_string();
  c["multipliers"] = mult;
  c["target"] = cert.target.to_string();
  json eigs = json::array();
  if (cert.gram.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cert.gram, Eigen::EigenvaluesOnly);
    for (int i = 0; i < es.eigenvalues().size(); ++i) eigs.push_back(es.eigenvalues()(i));
  }
  c["gram_eigenvalues"] = eigs;
  return c;
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, const CoordinationModel& model,
                          const std::string& path) {
  std::ofstream out = open_out(path);
  const int n = model.spatial_dim;
  out << "t,agent";
  for (int d = 1; d <= n; ++d) out << ",x" << d;
  for (int d = 1; d <= n; ++d) out << ",v" << d;
  out << ",lambda2,min_dist,W,Wdot,unsafe\n";
  for (size_t k = 0; k < traj.states.size(); ++k) {
    const auto& mon = traj.monitors[k];
    for (int i = 0; i < model.num_agents; ++i) {
      const auto& s = traj.states[k][i];
      out << fmt(traj.times[k]) << "," << i;
      for (int d = 0; d < n; ++d) out << "," << fmt(s.x(d));
      for (int d = 0; d < n; ++d) out << "," << fmt(s.rho(d));
      out << "," << fmt(mon.lambda2) << "," << fmt(mon.min_dist) << "," << fmt(mon.W) << ","
          << fmt(mon.Wdot) << "," << (mon.any_unsafe ? 1 : 0) << "\n";
    }
  }
}

void write_edge_events_csv(const std::vector<EdgeEvent>& events, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "t,i,j,event\n";
  for (const auto& e : events)
    out << fmt(e.t) << "," << e.i << "," << e.j << "," << (e.added ? "added" : "removed") << "\n";
}

void write_grid_csv(const GridResult& grid, const std::string& path) {
  std::ofstream out = open_out(path);
  const int m = static_cast<int>(grid.spec.lo.size());
  for (int d = 1; d <= m; ++d) out << "dim" << d << ",";
  out << "verdict,violation_kind,t_violation\n";
  for (size_t k = 0; k < grid.points.size(); ++k) {
    for (int d = 0; d < m; ++d) out << fmt(grid.points[k](d)) << ",";
    const auto& v = grid.verdicts[k];
    out << (v.verdict == Verdict::in_region ? "in_region" : "violation") << ","
        << to_string(v.kind) << ","
        << (v.first_violation_time ? fmt(*v.first_violation_time) : "") << "\n";
  }
}

std::string region_report_json(const CertifiedRegion& region, const std::string& mode_note) {
  json r;
  r["W"] = region.W.to_string();
  r["c"] = region.c;
  r["e_tilde"] = region.e_tilde;
  r["sigma1"] = region.sigma1;
  r["sigma2"] = region.sigma2;
  r["unbounded"] = region.unbounded;
  r["strict_exclusion"] = region.strict_exclusion;
  r["s_relaxed"] = region.s_relaxed;
  r["mode"] = mode_note;
  r["notes"] = region.notes;
  json certs = json::array();
  for (const auto& cert : region.certificates) certs.push_back(certificate_json(cert));
  r["certificates"] = certs;
  return r.dump(2);
}

// ---------------------------------------------------------------------------
// Level-set slice by marching squares with bisection-refined vertices.
// ---------------------------------------------------------------------------

SlicePolyline slice_level_set(const Polynomial& W, double c, const CoordinationModel& model,
                              int agent, int dim_a, int dim_b, const Eigen::VectorXd& fixed_q,
                              int grid_n, double pad) {
  const int m = W.num_vars();
  if (agent < 0 || agent >= model.num_agents) throw ConfigError("slice agent out of range");
  const int block = 2 * model.spatial_dim;
  if (dim_a < 0 || dim_b < 0 || dim_a >= block || dim_b >= block || dim_a == dim_b)
    throw ConfigError("slice dims must be two distinct indices of the agent state block");
  const int off_a = model.y_offset(agent) + dim_a;
  const int off_b = model.y_offset(agent) + dim_b;

  // Plane half-widths from the diagonal quadratic coefficients.
  auto half_width = [&](int off) {
    const double q = W.coefficient(Monomial::var_power(m, off, 2));
    return q > 1e-9 ? pad * std::sqrt(std::max(c, 1e-12) / q) : 10.0;
  };
  const double ha = half_width(off_a), hb = half_width(off_b);

  Eigen::VectorXd q = fixed_q;
  auto F = [&](double u, double v) {
    q(off_a) = u;
    q(off_b) = v;
    return W.evaluate(q) - c;
  };

  // Sample the plane.
  std::vector<double> us(grid_n), vs(grid_n);
  for (int i = 0; i < grid_n; ++i) {
    us[i] = -ha + 2.0 * ha * i / (grid_n - 1);
    vs[i] = -hb + 2.0 * hb * i / (grid_n - 1);
  }
  std::vector<double> f(static_cast<size_t>(grid_n) * grid_n);
  for (int jv = 0; jv < grid_n; ++jv)
    for (int iu = 0; iu < grid_n; ++iu) f[jv * grid_n + iu] = F(us[iu], vs[jv]);

  // Refined crossing point on a grid edge.
  auto refine = [&](double u0, double v0, double u1, double v1) -> std::array<double, 2> {
    double lo = 0.0, hi = 1.0;
    double flo = F(u0, v0);
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = F(u0 + mid * (u1 - u0), v0 + mid * (v1 - v0));
      if (std::abs(fm) <= 1e-9) {
        lo = hi = mid;
        break;
      }
      if ((fm < 0) == (flo < 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    const double t = 0.5 * (lo + hi);
    return {u0 + t * (u1 - u0), v0 + t * (v1 - v0)};
  };

  // Edge ids: horizontal (i,j)-(i+1,j) -> 2*(j*grid_n+i), vertical -> +1.
  auto hedge = [&](int i, int jv) { return 2 * (jv * grid_n + i); };
  auto vedge = [&](int i, int jv) { return 2 * (jv * grid_n + i) + 1; };

  std::map<int, std::array<double, 2>> edge_vertex;
  std::map<int, std::vector<int>> adjacency;
  auto vertex_on = [&](int edge, int i, int jv, bool horizontal) {
    auto it = edge_vertex.find(edge);
    if (it != edge_vertex.end()) return;
    std::array<double, 2> p =
        horizontal ? refine(us[i], vs[jv], us[i + 1], vs[jv]) : refine(us[i], vs[jv], us[i], vs[jv + 1]);
    edge_vertex[edge] = p;
  };
  auto connect = [&](int e1, int e2) {
    adjacency[e1].push_back(e2);
    adjacency[e2].push_back(e1);
  };

  for (int jv = 0; jv + 1 < grid_n; ++jv) {
    for (int iu = 0; iu + 1 < grid_n; ++iu) {
      const bool s00 = f[jv * grid_n + iu] <= 0;
      const bool s10 = f[jv * grid_n + iu + 1] <= 0;
      const bool s01 = f[(jv + 1) * grid_n + iu] <= 0;
      const bool s11 = f[(jv + 1) * grid_n + iu + 1] <= 0;
      std::vector<std::pair<int, char>> crossings;  // edge id, side tag
      if (s00 != s10) crossings.push_back({hedge(iu, jv), 'b'});
      if (s01 != s11) crossings.push_back({hedge(iu, jv + 1), 't'});
      if (s00 != s01) crossings.push_back({vedge(iu, jv), 'l'});
      if (s10 != s11) crossings.push_back({vedge(iu + 1, jv), 'r'});
      if (crossings.empty()) continue;
      for (auto& [edge, side] : crossings) {
        switch (side) {
          case 'b': vertex_on(edge, iu, jv, true); break;
          case 't': vertex_on(edge, iu, jv + 1, true); break;
          case 'l': vertex_on(edge, iu, jv, false); break;
          case 'r': vertex_on(edge, iu + 1, jv, false); break;
        }
      }
      if (crossings.size() == 2) {
        connect(crossings[0].first, crossings[1].first);
      } else if (crossings.size() == 4) {
        // Saddle: disambiguate with the cell center.
        const double fc = F(0.5 * (us[iu] + us[iu + 1]), 0.5 * (vs[jv] + vs[jv + 1]));
        int b = hedge(iu, jv), t = hedge(iu, jv + 1), l = vedge(iu, jv), r = vedge(iu + 1, jv);
        if ((fc <= 0) == s00) {
          connect(b, r);
          connect(t, l);
        } else {
          connect(b, l);
          connect(t, r);
        }
      }
    }
  }

  SlicePolyline out;
  std::map<int, bool> visited;
  for (const auto& [edge, p] : edge_vertex) visited[edge] = false;
  for (const auto& [start, p0] : edge_vertex) {
    if (visited[start]) continue;
    out.loop_breaks.push_back(static_cast<int>(out.vertices.size()));
    int cur = start, prev = -1;
    while (true) {
      visited[cur] = true;
      out.vertices.push_back(edge_vertex[cur]);
      int next = -1;
      for (int nb : adjacency[cur]) {
        if (nb != prev && !visited[nb]) {
          next = nb;
          break;
        }
      }
      if (next < 0) {
        // Close the loop when we are back adjacent to the start.
        for (int nb : adjacency[cur])
          if (nb == start && prev != start) out.vertices.push_back(edge_vertex[start]);
        break;
      }
      prev = cur;
      cur = next;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Command dispatch
// ---------------------------------------------------------------------------

namespace {

struct Prepared {
  ScenarioConfig cfg;
  std::string out_dir;
};

Prepared prepare(const ScenarioConfig& config, const PipelineOverrides& overrides) {
  Prepared p{config, config.output_dir};
  if (!overrides.out_dir.empty()) p.out_dir = overrides.out_dir;
  if (overrides.has_seed) p.cfg.seed = overrides.seed;
  if (overrides.solver_tol > 0) p.cfg.estimator.tol_psd = overrides.solver_tol;
  if (overrides.slice_agent >= 0) p.cfg.slice_agent = overrides.slice_agent;
  if (!overrides.slice_dims.empty()) {
    const auto comma = overrides.slice_dims.find(',');
    if (comma == std::string::npos) throw ConfigError("--slice-dims expects 'a,b'");
    p.cfg.slice_dim_a = std::stoi(overrides.slice_dims.substr(0, comma));
    p.cfg.slice_dim_b = std::stoi(overrides.slice_dims.substr(comma + 1));
  }
  if (!overrides.fix_at.empty()) p.cfg.slice_fix_at_initial = overrides.fix_at == "initial";
  ensure_dir(p.out_dir);
  return p;
}

PipelineResult do_simulate(const Prepared& p) {
  PipelineResult res;
  Trajectory traj = simulate(p.cfg.model, p.cfg.sim);
  const std::string traj_path = p.out_dir + "/trajectory.csv";
  const std::string events_path = p.out_dir + "/edge_events.csv";
  write_trajectory_csv(traj, p.cfg.model, traj_path);
  write_edge_events_csv(traj.edge_events, events_path);
  res.artifacts = {traj_path, events_path};
  json summary;
  summary["steps"] = traj.times.size();
  summary["diverged"] = traj.diverged;
  summary["stopped_on_violation"] = traj.stopped_on_violation;
  if (!traj.monitors.empty()) {
    double min_dist = std::numeric_limits<double>::infinity();
    double min_lambda2 = std::numeric_limits<double>::infinity();
    bool any_unsafe = false;
    for (const auto& mon : traj.monitors) {
      min_dist = std::min(min_dist, mon.min_dist);
      min_lambda2 = std::min(min_lambda2, mon.lambda2);
      any_unsafe = any_unsafe || mon.any_unsafe;
    }
    summary["min_pairwise_distance"] = min_dist;
    summary["min_lambda2"] = min_lambda2;
    summary["any_unsafe"] = any_unsafe;
    summary["final_coordination_error"] =
        coordination_error(traj.states.back(), p.cfg.model);
  }
  const std::string sum_path = p.out_dir + "/simulate_summary.json";
  open_out(sum_path) << summary.dump(2) << "\n";
  res.artifacts.push_back(sum_path);
  if (traj.diverged) {
    res.exit_code = 2;
    res.message = "simulation diverged at step " + std::to_string(traj.divergence_step);
  }
  return res;
}

struct RegionBundle {
  RegionResult result;
  Polynomial W = Polynomial(1);
  Polynomial Wdot = Polynomial(1);
};

RegionBundle certified_region_of(const ScenarioConfig& cfg) {
  RegionBundle bundle;
  const TopologySnapshot topology = initial_topology(cfg.model, cfg.model.initial);
  bundle.W = lyapunov_polynomial(cfg.model, topology);
  bundle.Wdot = build_wdot(bundle.W, cfg.model, topology, cfg.estimator.wdot_degree_cap);
  try {
    bundle.result = estimate_c_gevp(bundle.W, bundle.Wdot, unsafe_blocks_in_q(cfg.model),
                                    cfg.estimator);
  } catch (const CapacityError& ex) {
    bundle.result.status = CertifyStatus::refused;
    bundle.result.diagnostic = ex.what();
  }
  return bundle;
}

PipelineResult do_certify(const Prepared& p) {
  PipelineResult res;
  RegionBundle bundle = certified_region_of(p.cfg);
  const std::string path = p.out_dir + "/region.json";
  if (bundle.result.status != CertifyStatus::certified) {
    json r;
    r["status"] = bundle.result.status == CertifyStatus::refused ? "refused" : "unknown";
    r["diagnostic"] = bundle.result.diagnostic;
    open_out(path) << r.dump(2) << "\n";
    res.artifacts = {path};
    res.exit_code = 2;
    res.message = bundle.result.diagnostic;
    return res;
  }
  const std::string mode =
      p.cfg.estimator.strict_exclusion ? "strict-exclusion" : "decrease-only";
  open_out(path) << region_report_json(*bundle.result.region, mode) << "\n";
  res.artifacts = {path};
  return res;
}

PipelineResult do_optimize(const Prepared& p) {
  PipelineResult res;
  BarrierOptimum opt = optimize_barriers(p.cfg.model, p.cfg.estimator);
  const std::string trace_path = p.out_dir + "/trace_iterations.csv";
  {
    std::ofstream out = open_out(trace_path);
    out << "iteration,trace\n";
    for (size_t i = 0; i < opt.trace_iters.size(); ++i)
      out << i << "," << fmt(opt.trace_iters[i]) << "\n";
  }
  json r;
  r["status"] = opt.status == CertifyStatus::certified ? "certified"
                : opt.status == CertifyStatus::refused ? "refused"
                                                       : "unknown";
  r["diagnostic"] = opt.diagnostic;
  r["zeta"] = opt.zeta;
  r["kappa"] = opt.kappa;
  r["baseline_kappa"] = opt.baseline_kappa;
  r["connectivity_shape"] = opt.conn.poly.to_string();
  r["collision_shape"] = opt.coll.poly.to_string();
  if (opt.region) r["c"] = opt.region->c;
  const std::string path = p.out_dir + "/optimize_report.json";
  open_out(path) << r.dump(2) << "\n";
  res.artifacts = {trace_path, path};
  if (opt.status != CertifyStatus::certified) {
    res.exit_code = 2;
    res.message = opt.diagnostic;
  }
  return res;
}

PipelineResult do_verify(const Prepared& p) {
  PipelineResult res;
  RegionBundle bundle = certified_region_of(p.cfg);
  if (bundle.result.status != CertifyStatus::certified) {
    res.exit_code = 2;
    res.message = "no certified region to verify: " + bundle.result.diagnostic;
    return res;
  }
  ContainmentOptions copts;
  copts.sim_subset = p.cfg.oracle_sim_subset;
  copts.seed = p.cfg.seed;
  copts.oracle = p.cfg.oracle;
  ContainmentReport report = containment_check(*bundle.result.region, p.cfg.model, bundle.Wdot,
                                               p.cfg.oracle_samples, copts);
  json r;
  r["n_samples"] = report.n_samples;
  r["n_checked"] = report.n_checked;
  r["n_simulated"] = report.n_simulated;
  r["surface_sampling"] = report.surface_sampling;
  r["failures"] = json::array();
  for (const auto& failure : report.failures) {
    json f;
    f["reason"] = failure.reason;
    json q = json::array();
    for (int i = 0; i < failure.q.size(); ++i) q.push_back(failure.q(i));
    f["q"] = q;
    r["failures"].push_back(f);
  }
  r["clean"] = report.clean();
  const std::string path = p.out_dir + "/containment_report.json";
  open_out(path) << r.dump(2) << "\n";
  res.artifacts = {path};
  if (!report.clean()) {
    res.exit_code = 2;
    res.message = std::to_string(report.failures.size()) + " containment failures";
  }
  return res;
}

PipelineResult do_slice(const Prepared& p) {
  PipelineResult res;
  RegionBundle bundle = certified_region_of(p.cfg);
  if (bundle.result.status != CertifyStatus::certified) {
    res.exit_code = 2;
    res.message = "no certified region to slice: " + bundle.result.diagnostic;
    return res;
  }
  const CertifiedRegion& region = *bundle.result.region;
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(p.cfg.model.q_dim());
  if (p.cfg.slice_fix_at_initial) {
    fixed = transform(p.cfg.model.initial, p.cfg.model.formation).q;
  }
  SlicePolyline poly = slice_level_set(region.W, region.c, p.cfg.model, p.cfg.slice_agent,
                                       p.cfg.slice_dim_a, p.cfg.slice_dim_b, fixed);
  // Every emitted vertex must evaluate onto the level set and stay safe.
  const auto unsafe_q = unsafe_blocks_in_q(p.cfg.model);
  Eigen::VectorXd q = fixed;
  const int off_a = p.cfg.model.y_offset(p.cfg.slice_agent) + p.cfg.slice_dim_a;
  const int off_b = p.cfg.model.y_offset(p.cfg.slice_agent) + p.cfg.slice_dim_b;
  int bad_level = 0, bad_safety = 0;
  for (const auto& v : poly.vertices) {
    q(off_a) = v[0];
    q(off_b) = v[1];
    if (std::abs(region.W.evaluate(q) - region.c) >= 1e-6) ++bad_level;
    for (size_t b = 0; b < unsafe_q.size(); ++b) {
      bool inside = !unsafe_q[b].empty();
      for (const auto& w : unsafe_q[b])
        if (w.evaluate(q) <= 0) {
          inside = false;
          break;
        }
      if (inside) {
        ++bad_safety;
        break;
      }
    }
  }
  const std::string path = p.out_dir + "/slice.csv";
  {
    std::ofstream out = open_out(path);
    out << "loop,u,v\n";
    int loop = -1;
    size_t next_break = 0;
    for (size_t k = 0; k < poly.vertices.size(); ++k) {
      if (next_break < poly.loop_breaks.size() &&
          static_cast<int>(k) == poly.loop_breaks[next_break]) {
        ++loop;
        ++next_break;
      }
      out << loop << "," << fmt(poly.vertices[k][0]) << "," << fmt(poly.vertices[k][1]) << "\n";
    }
  }
  res.artifacts = {path};
  if (bad_level > 0 || bad_safety > 0) {
    res.exit_code = 2;
    res.message = "slice re-verification failed: " + std::to_string(bad_level) +
                  " off-level vertices, " + std::to_string(bad_safety) + " unsafe vertices";
  }
  return res;
}

PipelineResult do_sweep(const Prepared& p, const PipelineOverrides& overrides) {
  PipelineResult res;
  if (p.cfg.sweep.empty()) {
    res.exit_code = 2;
    res.message = "sweep requested but the scenario has no sweep entries";
    return res;
  }
  struct Entry {
    std::string name;
    std::future<PipelineResult> future;
  };
  std::vector<Entry> entries;
  for (const auto& [name, patch_text] : p.cfg.sweep) {
    json base = json::parse(p.cfg.raw_json);
    base.merge_patch(json::parse(patch_text));
    base.erase("sweep");
    ScenarioConfig sub = parse_scenario_text(base.dump(), p.cfg.name + "/" + name);
    PipelineOverrides sub_overrides = overrides;
    sub_overrides.out_dir = p.out_dir + "/" + name;
    const std::string command = base.value("sweep_command", "simulate");
    entries.push_back({name, std::async(std::launch::async, [sub, command, sub_overrides] {
                         return run_pipeline(command, sub, sub_overrides);
                       })});
  }
  json summary = json::array();
  for (auto& e : entries) {
    PipelineResult sub = e.future.get();
    json s;
    s["name"] = e.name;
    s["exit_code"] = sub.exit_code;
    s["message"] = sub.message;
    s["artifacts"] = sub.artifacts;
    summary.push_back(s);
    if (sub.exit_code != 0) res.exit_code = 2;
    for (auto& a : sub.artifacts) res.artifacts.push_back(a);
  }
  const std::string path = p.out_dir + "/sweep_summary.json";
  open_out(path) << summary.dump(2) << "\n";
  res.artifacts.push_back(path);
  return res;
}

}  // namespace

PipelineResult run_pipeline(const std::string& command, const ScenarioConfig& config,
                            const PipelineOverrides& overrides) {
  Prepared p = prepare(config, overrides);
  if (command == "simulate") return do_simulate(p);
  if (command == "certify") return do_certify(p);
  if (command == "optimize") return do_optimize(p);
  if (command == "verify") return do_verify(p);
  if (command == "slice") return do_slice(p);
  if (command == "sweep") return do_sweep(p, overrides);
  PipelineResult res;
  res.exit_code = 1;
  res.message = "unknown command: " + command;
  return res;
}

}  // namespace sgr

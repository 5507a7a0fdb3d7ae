#include "sgr/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <thread>

namespace sgr {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double uniform01(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::none: return "none";
    case ViolationKind::collision: return "collision";
    case ViolationKind::disconnect: return "disconnect";
    case ViolationKind::unsafe: return "unsafe";
    case ViolationKind::no_convergence: return "no_convergence";
    case ViolationKind::divergence: return "divergence";
  }
  return "?";
}

double coordination_error(const std::vector<AgentState>& states, const CoordinationModel& model) {
  const TransformedState t = transform(states, model.formation);
  const int N = model.num_agents;
  double err = 0.0;
  if (N > 1) {
    Eigen::VectorXd y_mean = Eigen::VectorXd::Zero(model.spatial_dim);
    Eigen::VectorXd v_mean = Eigen::VectorXd::Zero(model.spatial_dim);
    for (int i = 0; i < N; ++i) {
      y_mean += t.y[i];
      v_mean += t.varrho[i];
    }
    y_mean /= N;
    v_mean /= N;
    for (int i = 0; i < N; ++i) {
      err = std::max(err, (t.y[i] - y_mean).norm());
      err = std::max(err, (t.varrho[i] - v_mean).norm());
    }
  }
  for (int i = 0; i < N; ++i) {
    if (model.anchor_position_gain(i) > 0) err = std::max(err, t.y[i].norm());
    if (model.anchor_position_gain(i) > 0 || model.anchor_velocity_gain(i) > 0)
      err = std::max(err, t.varrho[i].norm());
  }
  return err;
}

ClassificationResult classify_initial_state(const Eigen::VectorXd& q0,
                                            const CoordinationModel& model,
                                            const OracleOptions& opts) {
  ClassificationResult out;
  const TransformedState t0 = unpack_q(q0, model);
  const std::vector<AgentState> start = inverse_transform(t0, model.formation);

  // The formation topology must be inside the initial sensing graph for the
  // coordination claim to make sense from this start.
  {
    const TopologySnapshot topo = initial_topology(model, start);
    for (const auto& [i, j] : model.formation.edges) {
      if (!topo.graph.has_edge(i, j)) {
        out.kind = ViolationKind::disconnect;
        out.first_violation_time = 0.0;
        return out;
      }
    }
  }

  SimParams params;
  params.dt = opts.dt;
  params.horizon = opts.horizon;
  params.stop_on_violation = true;
  params.monitor_tol = opts.monitor_tol;
  params.convergence_exit = 0.01 * opts.tol_conv;
  const int steps = static_cast<int>(std::ceil(opts.horizon / opts.dt));
  params.record_every = std::max(1, steps / std::max(64, 4 * opts.tail_records));

  Trajectory traj = simulate_from(model, start, params);
  if (traj.diverged) {
    out.kind = ViolationKind::divergence;
    out.first_violation_time = traj.divergence_step * opts.dt;
    return out;
  }
  for (const auto& m : traj.monitors) {
    if (m.any_unsafe) {
      out.kind = ViolationKind::unsafe;
      out.first_violation_time = m.t;
      return out;
    }
    if (model.num_agents > 1 && !(m.lambda2 > 1e-8)) {
      out.kind = ViolationKind::disconnect;
      out.first_violation_time = m.t;
      return out;
    }
    if (model.num_agents > 1 && !(m.min_dist > model.geo.d_s)) {
      out.kind = ViolationKind::collision;
      out.first_violation_time = m.t;
      return out;
    }
  }

  if (traj.converged_early) {
    out.verdict = Verdict::in_region;
    out.kind = ViolationKind::none;
    return out;
  }
  const double final_err = coordination_error(traj.states.back(), model);
  if (!(final_err < opts.tol_conv)) {
    out.kind = ViolationKind::no_convergence;
    out.first_violation_time = traj.times.back();
    return out;
  }
  // Monotone tail: the error may not grow along the last recorded stretch.
  const int records = static_cast<int>(traj.states.size());
  const int tail = std::min(records, opts.tail_records);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = records - tail; k < records; ++k) {
    const double e = coordination_error(traj.states[k], model);
    if (e > prev * 1.1 + 0.1 * opts.tol_conv) {
      out.kind = ViolationKind::no_convergence;
      out.first_violation_time = traj.times[k];
      return out;
    }
    prev = e;
  }
  out.verdict = Verdict::in_region;
  out.kind = ViolationKind::none;
  return out;
}

namespace {

struct SampleBox {
  Eigen::MatrixXd directions;
  Eigen::VectorXd half_width;
};

// Axis system from the quadratic part of W; null directions fall back to a
// fixed half-width.
SampleBox sampling_box(const Polynomial& W, double c, double fallback) {
  const int m = W.num_vars();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [mono, coeff] : W.terms()) {
    if (mono.degree() != 2) continue;
    int first = -1, second = -1;
    for (int v = 0; v < m; ++v)
      for (unsigned k = 0; k < mono.exponent(v); ++k) {
        if (first < 0)
          first = v;
        else
          second = v;
      }
    if (second < 0 || second == first) {
      Q(first, first) += coeff;
    } else {
      Q(first, second) += 0.5 * coeff;
      Q(second, first) += 0.5 * coeff;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  SampleBox box;
  box.directions = es.eigenvectors();
  box.half_width.resize(m);
  for (int k = 0; k < m; ++k) {
    const double lam = es.eigenvalues()(k);
    box.half_width(k) = lam > 1e-9 ? std::sqrt(std::max(c, 1e-12) * 2.0 / lam) : fallback;
  }
  return box;
}

}  // namespace

ContainmentReport containment_check(const CertifiedRegion& region, const CoordinationModel& model,
                                    const Polynomial& Wdot, int n_samples,
                                    const ContainmentOptions& opts) {
  ContainmentReport report;
  report.n_samples = n_samples;
  const int m = region.W.num_vars();
  const SampleBox box = sampling_box(region.W, region.c, opts.box_fallback);
  const auto unsafe_q = unsafe_blocks_in_q(model);

  std::uint64_t rng = opts.seed;
  int accepted = 0;
  long attempts = 0;
  const long max_attempts = 50L * std::max(n_samples, 1);
  std::vector<Eigen::VectorXd> sim_candidates;

  auto check_point = [&](const Eigen::VectorXd& q) {
    ++accepted;
    const double wd = Wdot.evaluate(q);
    if (wd > opts.wdot_tol) {
      report.failures.push_back({q, "Wdot = " + std::to_string(wd) + " exceeds tolerance"});
      return;
    }
    for (size_t b = 0; b < unsafe_q.size(); ++b) {
      bool inside = !unsafe_q[b].empty();
      for (const auto& w : unsafe_q[b]) {
        if (w.evaluate(q) <= 0) {
          inside = false;
          break;
        }
      }
      if (inside) {
        report.failures.push_back({q, "point lies in unsafe block " + std::to_string(b)});
        return;
      }
    }
    if (static_cast<int>(sim_candidates.size()) < opts.sim_subset) sim_candidates.push_back(q);
  };

  while (accepted < n_samples && attempts < max_attempts) {
    ++attempts;
    Eigen::VectorXd u(m);
    for (int k = 0; k < m; ++k) u(k) = (2.0 * uniform01(rng) - 1.0) * box.half_width(k);
    Eigen::VectorXd q = box.directions * u;
    if (region.W.evaluate(q) <= region.c) check_point(q);
  }

  if (accepted < n_samples) {
    // Sampling starvation: switch to ray sampling through the set.
    report.surface_sampling = true;
    while (accepted < n_samples) {
      Eigen::VectorXd dir(m);
      double norm2 = 0;
      for (int k = 0; k < m; ++k) {
        const double a = uniform01(rng), b = uniform01(rng);
        dir(k) = std::sqrt(-2.0 * std::log(std::max(a, 1e-300))) * std::cos(6.283185307179586 * b);
        norm2 += dir(k) * dir(k);
      }
      if (norm2 == 0) continue;
      dir /= std::sqrt(norm2);
      double t_hi = 1e-3;
      while (region.W.evaluate(Eigen::VectorXd(t_hi * dir)) <= region.c && t_hi < 1e6) t_hi *= 2.0;
      double lo = 0.0, hi = t_hi;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (region.W.evaluate(Eigen::VectorXd(mid * dir)) <= region.c ? lo : hi) = mid;
      }
      const double radius = lo * std::pow(uniform01(rng), 1.0 / m);
      check_point(Eigen::VectorXd(radius * dir));
    }
  }
  report.n_checked = accepted;

  for (const auto& q : sim_candidates) {
    ++report.n_simulated;
    ClassificationResult cls = classify_initial_state(q, model, opts.oracle);
    if (cls.verdict != Verdict::in_region) {
      report.failures.push_back({q, std::string("simulation verdict: ") + to_string(cls.kind)});
    }
  }
  return report;
}

GridResult brute_force_region(const CoordinationModel& model, const GridSpec& spec,
                              const OracleOptions& opts) {
  const int m = model.q_dim();
  if (m > 4) throw CapacityError("brute_force_region is limited to state dimension <= 4");
  if (spec.lo.size() != m || spec.hi.size() != m)
    throw DimensionError("grid bounds must match the state dimension");

  GridResult out;
  out.spec = spec;
  std::vector<int> shape(m);
  long total = 1;
  for (int d = 0; d < m; ++d) {
    shape[d] = static_cast<int>(std::floor((spec.hi(d) - spec.lo(d)) / spec.step + 1e-9)) + 1;
    total *= shape[d];
  }
  out.shape = shape;
  out.verdicts.resize(total);
  out.points.resize(total);

  {
    std::vector<int> idx(m, 0);
    for (long flat = 0; flat < total; ++flat) {
      Eigen::VectorXd q(m);
      for (int d = 0; d < m; ++d) q(d) = spec.lo(d) + idx[d] * spec.step;
      out.points[flat] = q;
      for (int d = m - 1; d >= 0; --d) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  }
  // Nodes are independent; fan out over hardware threads and merge by index.
  const int workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> futures;
  std::atomic<long> next{0};
  for (int w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      long flat;
      while ((flat = next.fetch_add(16)) < total) {
        const long end = std::min(total, flat + 16);
        for (long k = flat; k < end; ++k)
          out.verdicts[k] = classify_initial_state(out.points[k], model, opts);
      }
    }));
  }
  for (auto& f : futures) f.get();
  return out;
}

double wdot_consistency(const Trajectory& traj, const CoordinationModel& model) {
  (void)model;
  double worst = 0.0;
  const int n = static_cast<int>(traj.monitors.size());
  for (int k = 1; k + 1 < n; ++k) {
    const auto& prev = traj.monitors[k - 1];
    const auto& cur = traj.monitors[k];
    const auto& next = traj.monitors[k + 1];
    if (cur.topology_changed || next.topology_changed) continue;
    const double dt = traj.times[k + 1] - traj.times[k - 1];
    if (dt <= 0) continue;
    const double fd = (next.W - prev.W) / dt;
    worst = std::max(worst, std::abs(fd - cur.Wdot));
  }
  return worst;
}

}  // namespace sgr

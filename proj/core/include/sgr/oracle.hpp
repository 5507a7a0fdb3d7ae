#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgr/dynamics.hpp"
#include "sgr/estimator.hpp"

namespace sgr {

enum class Verdict { in_region, violation };
enum class ViolationKind { none, collision, disconnect, unsafe, no_convergence, divergence };

struct ClassificationResult {
  Verdict verdict = Verdict::violation;
  ViolationKind kind = ViolationKind::none;
  std::optional<double> first_violation_time;
};

struct OracleOptions {
  double horizon = 50.0;
  double dt = 1e-3;
  double tol_conv = 1e-2;
  double monitor_tol = 1e-9;  ///< slack on the strict unsafe / distance monitors
  int tail_records = 16;      ///< samples used for the monotone-tail test
};

const char* to_string(ViolationKind kind);

/// Forward-simulation ground truth for one initial condition (given in
/// transformed coordinates). Convergence is measured on formation and
/// velocity spreads, plus the absolute error for anchored agents.
ClassificationResult classify_initial_state(const Eigen::VectorXd& q0,
                                            const CoordinationModel& model,
                                            const OracleOptions& opts = {});

/// Convergence metric used by the classifier (0 at the target configuration).
double coordination_error(const std::vector<AgentState>& states, const CoordinationModel& model);

struct ContainmentFailure {
  Eigen::VectorXd q;
  std::string reason;
};

struct ContainmentReport {
  int n_samples = 0;
  int n_checked = 0;        ///< samples that landed inside the sublevel set
  int n_simulated = 0;      ///< subset classified by full simulation
  bool surface_sampling = false;
  std::vector<ContainmentFailure> failures;  ///< certified-but-violating points

  bool clean() const { return failures.empty(); }
};

struct ContainmentOptions {
  int sim_subset = 0;          ///< how many samples additionally go through the simulator
  double wdot_tol = 1e-6;
  double box_fallback = 10.0;  ///< half-width along directions the quadratic part misses
  std::uint64_t seed = 0x9e3779b97f4a7c15ull;
  OracleOptions oracle;
};

/// Rejection-samples the sublevel set and checks every point against the
/// certificate claims: level membership, energy decrease and unsafe-set
/// exclusion (after mapping back to positions). A budgeted subset is run
/// through the simulator as well. Zero tolerance: any failure is reported
/// with its witness.
ContainmentReport containment_check(const CertifiedRegion& region, const CoordinationModel& model,
                                    const Polynomial& Wdot, int n_samples,
                                    const ContainmentOptions& opts = {});

struct GridSpec {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  double step = 0.05;
};

struct GridResult {
  GridSpec spec;
  std::vector<int> shape;  ///< nodes per dimension
  std::vector<ClassificationResult> verdicts;  ///< row-major over the grid
  std::vector<Eigen::VectorXd> points;
};

/// Exhaustive classification over a small grid in q. Guarded to state
/// dimension <= 4.
GridResult brute_force_region(const CoordinationModel& model, const GridSpec& spec,
                              const OracleOptions& opts = {});

/// Max deviation between the finite-difference energy slope and the reported
/// rate along a trajectory, skipping records adjacent to topology switches.
double wdot_consistency(const Trajectory& traj, const CoordinationModel& model);

}  // namespace sgr

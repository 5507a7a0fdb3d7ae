#pragma once

#include <string>
#include <vector>

#include "sgr/oracle.hpp"
#include "sgr/scenario.hpp"

namespace sgr {

struct PipelineOverrides {
  std::string out_dir;  ///< empty keeps the scenario default
  std::uint64_t seed = 0;
  bool has_seed = false;
  int slice_agent = -1;
  std::string slice_dims;  ///< "a,b"
  std::string fix_at;      ///< "formation" | "initial"
  double solver_tol = -1;  ///< SGR_SOLVER_TOL override of tol_psd
};

struct PipelineResult {
  int exit_code = 0;
  std::vector<std::string> artifacts;
  std::string message;
};

/// Dispatches one CLI command: simulate | certify | optimize | verify |
/// slice | sweep. Artifacts land under the output directory.
PipelineResult run_pipeline(const std::string& command, const ScenarioConfig& config,
                            const PipelineOverrides& overrides = {});

// Individual emitters, exposed for tests.
void write_trajectory_csv(const Trajectory& traj, const CoordinationModel& model,
                          const std::string& path);
void write_edge_events_csv(const std::vector<EdgeEvent>& events, const std::string& path);
void write_grid_csv(const GridResult& grid, const std::string& path);
std::string region_report_json(const CertifiedRegion& region, const std::string& mode_note);

/// Closed contour polyline of {W = c} in a 2-D slice plane. `dim_a`/`dim_b`
/// index the slice agent's (y, varrho) block; all other coordinates are fixed
/// at the formation origin or the initial state.
struct SlicePolyline {
  std::vector<std::array<double, 2>> vertices;  ///< ordered loop(s)
  std::vector<int> loop_breaks;                 ///< start index of every loop
};
SlicePolyline slice_level_set(const Polynomial& W, double c, const CoordinationModel& model,
                              int agent, int dim_a, int dim_b, const Eigen::VectorXd& fixed_q,
                              int grid_n = 257, double pad = 1.2);

}  // namespace sgr

#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sgr/errors.hpp"

namespace sgr {

/// Linear matrix inequality feasibility / linear objective program:
///
///   find (or minimize objective . x over) x in R^num_scalars
///   s.t. for every block: constant + sum_i x_i * coeff_i  is PSD,
///        for every equality: coeffs . x + constant == 0,
///        |x_i| <= scalar_bound.
///
/// Coefficient matrices are stored as symmetric triplet lists (both mirror
/// entries present).
struct ConicProgram {
  struct Block {
    int side = 0;
    Eigen::MatrixXd constant;
    // scalar index -> triplets of its symmetric coefficient matrix
    std::vector<std::pair<int, std::vector<Eigen::Triplet<double>>>> coeffs;
  };
  struct Equality {
    Eigen::VectorXd coeffs;
    double constant = 0;
  };

  int num_scalars = 0;
  std::vector<Block> blocks;
  std::vector<Equality> equalities;
  std::optional<Eigen::VectorXd> objective;
  double scalar_bound = 1e6;

  void validate() const;
};

/// Convenience builder for symmetric affine blocks.
class BlockBuilder {
 public:
  explicit BlockBuilder(int side) : side_(side), constant_(Eigen::MatrixXd::Zero(side, side)) {}

  void add_constant(int r, int c, double v);
  void set_constant(const Eigen::MatrixXd& m) { constant_ = m; }
  Eigen::MatrixXd& constant() { return constant_; }
  /// Adds v at (r, c) and mirrors to (c, r) for the given decision scalar.
  void add_coeff(int scalar, int r, int c, double v);
  void add_coeff_matrix(int scalar, const Eigen::MatrixXd& m, double scale = 1.0);
  void add_coeff_matrix(int scalar, const Eigen::SparseMatrix<double>& m, double scale = 1.0);

  ConicProgram::Block finish();

 private:
  int side_;
  Eigen::MatrixXd constant_;
  std::map<int, std::vector<Eigen::Triplet<double>>> coeffs_;
};

enum class SolveStatus { feasible, infeasible, unknown };

struct ConicOutcome {
  SolveStatus status = SolveStatus::unknown;
  Eigen::VectorXd witness;
  /// Minimum eigenvalue across all blocks at the witness, re-checked by a
  /// direct eigenvalue decomposition independent of the solve path.
  double margin = 0;
  std::optional<double> objective_value;
  bool hit_scalar_bound = false;  ///< optimum pressed against the box; reported as unbounded
  double gap = 0;                 ///< final duality gap estimate
  std::string diagnostic;
};

struct SolverOptions {
  double tol_psd = 1e-8;
  double tol_obj = 1e-6;
  double gap_tol = 1e-9;
  int max_outer = 40;
  int max_inner = 120;
};

/// Phase-I max-margin solve. Feasible outcomes carry a strictly interior
/// witness; infeasible requires the certified upper bound on the best margin
/// to be negative; everything else is unknown.
ConicOutcome solve_feasibility(const ConicProgram& p, const SolverOptions& opts = {});

/// Phase-I then path-following minimization of the linear objective.
ConicOutcome solve_min_linear(const ConicProgram& p, const SolverOptions& opts = {});

/// Debug dump in the sparse SDPA text format (equalities and the scalar box
/// are encoded as paired 1x1 blocks).
void write_sdpa(const ConicProgram& p, std::ostream& out);

}  // namespace sgr

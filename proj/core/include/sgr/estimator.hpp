#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgr/conic.hpp"
#include "sgr/dynamics.hpp"
#include "sgr/smr.hpp"

namespace sgr {

/// Knobs of the certification engine. Degree defaults of -1 resolve to
/// max(deg(Wdot) - deg(W), 2) for s and max(deg(Wdot) - deg(w_j), 2) for the
/// r_j, rounded up to even.
struct EstimatorOptions {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  int deg_s = -1;
  int deg_r = -1;
  int deg_t = -1;          ///< exclusion multipliers
  double bisect_tol = 1e-4;  ///< relative to the bracket width
  double e_margin = 1e-3;    ///< keeps the bracket away from -sigma1/sigma2
  double mu_strict = 1e-7;
  bool strict_exclusion = true;
  double tol_psd = 1e-8;
  double tol_obj = 1e-6;
  double recon_tol = 1e-6;
  int wdot_degree_cap = 16;
  int scalar_cap = 3000;  ///< largest decision-scalar count the built-in solver accepts
  int n_iters = 5;
  int barrier_degree = 4;  ///< d_b for optimize_barriers
  double scalar_bound = 1e6;
};

/// A verified sum-of-squares identity: `target` (assembled from the stated
/// combination) equals phi^T gram phi with gram PSD, together with the
/// multiplier polynomials the combination used. The basis is the support-
/// reduced monomial vector the Gram lives on.
struct SosCertificate {
  std::string label;
  std::vector<Monomial> phi_basis;
  int num_vars = 1;
  Eigen::MatrixXd gram;
  double margin = 0;                ///< verified min eigenvalue of gram
  double reconstruction_error = 0;  ///< coefficient-wise identity residual
  std::map<std::string, Polynomial> multipliers;
  Polynomial target = Polynomial(1);
};

struct CertifiedRegion {
  Polynomial W = Polynomial(1);
  double c = 0;
  std::vector<SosCertificate> certificates;
  double sigma1 = 1, sigma2 = 1;
  double e_tilde = 0;
  bool unbounded = false;        ///< bisection capped at the bracket end
  bool strict_exclusion = true;  ///< exclusion certificates included
  bool s_relaxed = false;        ///< S-bar >= 0 relaxation (no unsafe blocks)
  std::vector<std::string> notes;
};

enum class CertifyStatus { certified, refused, unknown };

struct CertifyResult {
  CertifyStatus status = CertifyStatus::refused;
  std::optional<SosCertificate> certificate;
  std::string diagnostic;
};

struct RegionResult {
  CertifyStatus status = CertifyStatus::refused;
  std::optional<CertifiedRegion> region;
  std::string diagnostic;
};

/// Lie derivative of W along the frozen-topology closed loop. When W is the
/// built-in energy function this reduces to the consensus-velocity quadratic.
Polynomial build_wdot(const Polynomial& W, const CoordinationModel& model,
                      const TopologySnapshot& topology, int degree_cap = 16);

/// Decrease condition at a fixed level: -(Wdot + s(c - W) + sum_j r_j w_j) is
/// SOS with s and every r_j SOS. `unsafe_q` lists the unsafe polynomials in
/// q coordinates, flattened over blocks and agents.
CertifyResult certify_level_set(const Polynomial& W, const Polynomial& Wdot,
                                const std::vector<Polynomial>& unsafe_q, double c,
                                const EstimatorOptions& opts = {});

/// Exclusion of one unsafe block: W - c - sum_i t_i w_i is SOS with t_i SOS,
/// so W >= c wherever every w_i > 0.
CertifyResult certify_safety_exclusion(const Polynomial& W,
                                       const std::vector<Polynomial>& block_q, double c,
                                       const EstimatorOptions& opts = {});

/// Largest c <= c_cap with an exclusion certificate for the block; refusal
/// when even c = 0 fails.
struct LevelSearch {
  CertifyStatus status = CertifyStatus::refused;
  double c = 0;
  std::optional<SosCertificate> certificate;
  std::string diagnostic;
};
LevelSearch max_exclusion_level(const Polynomial& W, const std::vector<Polynomial>& block_q,
                                double c_cap, const EstimatorOptions& opts = {});

/// The bisection LMI at a fixed e: variables are the Gram of s, the Grams of
/// the r_j and the null-space parameters of the main block; blocks are S-bar
/// (shifted by mu_strict when unsafe polynomials exist), the R-bar_j, and the
/// main matrix realizing e*Lambda(S) - D(delta) - Xi(R) + Lambda2(S) >= 0.
struct GevpAssembly {
  ConicProgram program;
  std::vector<Monomial> psi_basis;  ///< support-reduced main block basis
  int delta_count = 0;              ///< free null-space parameters
  int s_offset = 0;
  int s_entries = 0;
  std::vector<int> r_offsets;  ///< scalar offset of each r_j Gram
  bool s_relaxed = false;
};
GevpAssembly assemble_gevp_lmi(const Polynomial& W, const Polynomial& Wdot,
                               const std::vector<Polynomial>& unsafe_q, double e,
                               const EstimatorOptions& opts = {});

/// Level maximization by bisection over e in (-sigma1/sigma2, 0], followed by
/// the per-block exclusion pass that may shrink c. Blocks of `unsafe_blocks_q`
/// are conjunctions; the region must avoid their union.
RegionResult estimate_c_gevp(const Polynomial& W, const Polynomial& Wdot,
                             const std::vector<std::vector<Polynomial>>& unsafe_blocks_q,
                             const EstimatorOptions& opts = {});

/// Scenario-level wrapper: W and Wdot from the frozen initial topology and
/// unsafe polynomials pulled back per block and agent.
RegionResult estimate_region(const CoordinationModel& model, const EstimatorOptions& opts = {});

/// Univariate validity certificates for a barrier shape on its interval:
/// non-negativity, boundary interpolation and the slope sign condition.
CertifyResult barrier_validity_sos(const BarrierShape& shape, double interval_lo,
                                   double interval_hi, const EstimatorOptions& opts = {});

/// One round of the alternation: (A) freeze shapes, maximize the level;
/// (B) freeze the multiplier and level, minimize trace of the Gram of W over
/// the shape coefficients subject to W SOS, shape validity and the decrease
/// condition.
struct BarrierOptimum {
  CertifyStatus status = CertifyStatus::refused;
  BarrierShape conn;
  BarrierShape coll;
  std::optional<CertifiedRegion> region;
  double zeta = 0;                  ///< final trace of the canonical Gram of W
  double kappa = 0;                 ///< c / zeta
  double baseline_kappa = 0;        ///< fixed-shape starting point
  std::vector<double> trace_iters;  ///< per-iteration trace values
  std::string diagnostic;
};
BarrierOptimum optimize_barriers(const CoordinationModel& model, const EstimatorOptions& opts = {});

/// Canonical-Gram trace of W (the objective the optimizer reports as zeta).
double canonical_trace(const Polynomial& W);

struct VolumeSurrogates {
  double eta = 0;               ///< c^m / det(quadratic part)
  double linear_surrogate = 0;  ///< c / trace(quadratic part)
};
/// Both surrogates from the quadratic-part matrix of W; throws ConfigError
/// when that matrix is singular.
VolumeSurrogates volume_surrogates(const CertifiedRegion& region);

/// Re-verifies a certificate independently of the solver: PSD margin of the
/// Gram and the coefficient-wise identity against `target`.
bool verify_certificate(const SosCertificate& cert, double recon_tol = 1e-6,
                        double min_margin = -1e-8);

/// Unsafe polynomials of every (block, agent) pair in q coordinates.
std::vector<std::vector<Polynomial>> unsafe_blocks_in_q(const CoordinationModel& model);

}  // namespace sgr

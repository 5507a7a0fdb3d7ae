#include "sgr/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>

namespace sgr {

namespace {

int even_at_least(int v, int floor_value) {
  int d = std::max(v, floor_value);
  return d % 2 == 0 ? d : d + 1;
}

int default_deg_s(const Polynomial& W, const Polynomial& Wdot, const EstimatorOptions& opts) {
  if (opts.deg_s > 0) return even_at_least(opts.deg_s, 2);
  return even_at_least(Wdot.degree() - W.degree(), 2);
}

int default_deg_r(const Polynomial& Wdot, const Polynomial& omega, const EstimatorOptions& opts) {
  if (opts.deg_r > 0) return even_at_least(opts.deg_r, 2);
  return even_at_least(Wdot.degree() - omega.degree(), 2);
}

// Fails fast when the assembled semidefinite program would exceed what the
// built-in solver can factor; the message carries the offending sizes.
void check_capacity(int num_vars, int half_degree_psi, const EstimatorOptions& opts) {
  const SmrDimensions dims = smr_dimensions(num_vars, half_degree_psi);
  const std::uint64_t scalars = dims.theta;
  if (scalars > static_cast<std::uint64_t>(opts.scalar_cap) || dims.l > 400) {
    throw CapacityError(
        "certification problem too large for the built-in conic solver: the decrease condition "
        "needs a " +
        std::to_string(dims.l) + "-monomial Gram basis with " + std::to_string(dims.theta) +
        " free parameters (cap " + std::to_string(opts.scalar_cap) +
        "); reduce the state dimension, barrier degree or multiplier degrees");
  }
}

// d shape / dz divided by z, as an even polynomial in z.
Polynomial radial_slope_in_z(const BarrierShape& shape) {
  Polynomial r(1);
  for (const auto& [m, c] : shape.poly.terms()) {
    const unsigned e = m.exponent(0);
    if (e == 0) continue;
    r.add_term(Monomial::var_power(1, 0, e - 2), c * static_cast<double>(e));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Generic SOS assembly over support-reduced monomial bases.
// ---------------------------------------------------------------------------

struct MonomialBasis {
  int num_vars = 0;
  std::vector<Monomial> monomials;
  std::map<Monomial, int, GradedLexLess> index;

  int size() const { return static_cast<int>(monomials.size()); }
  int find(const Monomial& m) const {
    auto it = index.find(m);
    return it == index.end() ? -1 : it->second;
  }
  static MonomialBasis from(std::vector<Monomial> list, int nv) {
    MonomialBasis b;
    b.num_vars = nv;
    b.monomials = std::move(list);
    for (int i = 0; i < b.size(); ++i) b.index[b.monomials[i]] = i;
    return b;
  }
};

// Removes basis monomials whose square cannot appear: when 2m is outside the
// target support and no cross position produces it, the PSD Gram forces the
// whole row to zero, so the monomial can be dropped without losing any
// representable polynomial. Iterated to a fixpoint.
MonomialBasis reduce_basis(int num_vars, int half_degree,
                           const std::set<Monomial, GradedLexLess>& support) {
  PowerVector full(num_vars, half_degree);
  std::vector<Monomial> keep = full.monomials();
  bool changed = true;
  while (changed) {
    changed = false;
    std::set<Monomial, GradedLexLess> cross;
    for (size_t a = 0; a < keep.size(); ++a)
      for (size_t b = a + 1; b < keep.size(); ++b) cross.insert(keep[a].times(keep[b]));
    std::vector<Monomial> next;
    for (const Monomial& m : keep) {
      const Monomial sq = m.times(m);
      if (support.count(sq) || cross.count(sq)) {
        next.push_back(m);
      } else {
        changed = true;
      }
    }
    keep = std::move(next);
  }
  return MonomialBasis::from(std::move(keep), num_vars);
}

struct AffineTarget {
  Polynomial constant = Polynomial(1);
  std::vector<std::pair<int, Polynomial>> parts;  ///< scalar index -> coefficient polynomial

  std::set<Monomial, GradedLexLess> support() const {
    std::set<Monomial, GradedLexLess> s;
    for (const auto& [m, c] : constant.terms()) s.insert(m);
    for (const auto& [idx, p] : parts)
      for (const auto& [m, c] : p.terms()) s.insert(m);
    return s;
  }

  Polynomial value(const Eigen::VectorXd& x) const {
    Polynomial v = constant;
    for (const auto& [idx, p] : parts)
      if (x(idx) != 0.0) v += p * x(idx);
    return v;
  }
};

struct GramRef {
  int side = 0;
  int first_scalar = 0;
  std::vector<Monomial> basis;

  int entry(int a, int b) const { return first_scalar + a * side - a * (a - 1) / 2 + (b - a); }
  int entry_count() const { return side * (side + 1) / 2; }
};

struct SosBlockInfo {
  int block_index = -1;  ///< -1 when the reduced basis came out empty
  MonomialBasis basis;
  AffineTarget target;
  int null_count = 0;
};

class SosAssembler {
 public:
  explicit SosAssembler(double scalar_bound) { program_.scalar_bound = scalar_bound; }

  int new_scalar() { return program_.num_scalars++; }

  GramRef add_gram(const std::vector<Monomial>& basis, double shift) {
    GramRef g;
    g.side = static_cast<int>(basis.size());
    g.basis = basis;
    g.first_scalar = program_.num_scalars;
    program_.num_scalars += g.entry_count();
    BlockBuilder bb(g.side);
    for (int a = 0; a < g.side; ++a) {
      if (shift != 0.0) bb.add_constant(a, a, -shift);
      for (int b = a; b < g.side; ++b) bb.add_coeff(g.entry(a, b), a, b, 1.0);
    }
    program_.blocks.push_back(bb.finish());
    return g;
  }

  /// The polynomial of a Gram variable times a fixed factor, as affine parts.
  AffineTarget gram_polynomial_parts(const GramRef& g, const Polynomial& factor) const {
    AffineTarget t;
    t.constant = Polynomial(factor.num_vars());
    for (int a = 0; a < g.side; ++a) {
      for (int b = a; b < g.side; ++b) {
        const double w = (a == b) ? 1.0 : 2.0;
        t.parts.emplace_back(g.entry(a, b),
                             factor * Polynomial::term(factor.num_vars(),
                                                       g.basis[a].times(g.basis[b]), w));
      }
    }
    return t;
  }

  /// Constrains the affine family to be SOS over the support-reduced basis.
  /// Support monomials without a Gram position become linear equalities.
  SosBlockInfo add_sos(const AffineTarget& target, int num_vars) {
    auto support = target.support();
    int deg = 0;
    for (const Monomial& m : support) deg = std::max(deg, static_cast<int>(m.degree()));
    const int half = (deg + 1) / 2;

    SosBlockInfo info;
    info.basis = reduce_basis(num_vars, half, support);
    info.target = target;
    const int side = info.basis.size();
    BlockBuilder bb(std::max(side, 1));

    std::map<Monomial, Equation, GradedLexLess> leftovers;
    auto place = [&](const Monomial& m, double coeff, int scalar) {
      auto positions = positions_for(m, info.basis);
      if (positions.empty()) {
        auto& eq = leftovers[m];
        if (scalar < 0)
          eq.constant += coeff;
        else
          eq.coeffs[scalar] += coeff;
        return;
      }
      // Diagonal-preferred split: an even monomial whose root is present goes
      // entirely to the diagonal; otherwise even split over the off-diagonal
      // positions (matching the canonical Gram construction).
      if (m.all_even()) {
        const int d = info.basis.find(m.half());
        if (d >= 0) {
          if (scalar < 0)
            bb.add_constant(d, d, coeff);
          else
            bb.add_coeff(scalar, d, d, coeff);
          return;
        }
      }
      std::vector<std::pair<int, int>> off;
      for (auto& pr : positions)
        if (pr.first != pr.second) off.push_back(pr);
      if (off.empty()) {
        const auto& [a, b] = positions.front();
        if (scalar < 0)
          bb.add_constant(a, b, coeff);
        else
          bb.add_coeff(scalar, a, b, coeff);
        return;
      }
      const double share = coeff / (2.0 * static_cast<double>(off.size()));
      for (auto& [a, b] : off) {
        if (scalar < 0)
          bb.add_constant(a, b, share);
        else
          bb.add_coeff(scalar, a, b, share);
      }
    };

    for (const auto& [m, c] : target.constant.terms()) place(m, c, -1);
    for (const auto& [scalar, poly] : target.parts)
      for (const auto& [m, c] : poly.terms()) place(m, c, scalar);

    if (side > 0) {
      auto groups = position_groups(info.basis);
      for (const auto& [m, positions] : groups) {
        if (positions.size() < 2) continue;
        const auto& [a0, b0] = positions.front();
        const double w0 = (a0 == b0) ? 1.0 : 2.0;
        for (size_t t = 1; t < positions.size(); ++t) {
          const auto& [a, b] = positions[t];
          const double w = (a == b) ? 1.0 : 2.0;
          const int scalar = new_scalar();
          bb.add_coeff(scalar, a, b, w0);
          bb.add_coeff(scalar, a0, b0, -w);
          ++info.null_count;
        }
      }
    }

    for (auto& [m, eq] : leftovers) pending_equalities_.push_back(std::move(eq));

    if (side == 0) {
      info.block_index = -1;
      return info;
    }
    info.block_index = static_cast<int>(program_.blocks.size());
    program_.blocks.push_back(bb.finish());
    return info;
  }

  void add_linear_equality(const std::map<int, double>& coeffs, double constant) {
    Equation eq;
    eq.coeffs = coeffs;
    eq.constant = constant;
    pending_equalities_.push_back(std::move(eq));
  }

  void add_box_scalar(int scalar, double lo, double hi) {
    BlockBuilder lo_b(1), hi_b(1);
    lo_b.add_constant(0, 0, -lo);
    lo_b.add_coeff(scalar, 0, 0, 1.0);
    hi_b.add_constant(0, 0, hi);
    hi_b.add_coeff(scalar, 0, 0, -1.0);
    program_.blocks.push_back(lo_b.finish());
    program_.blocks.push_back(hi_b.finish());
  }

  void set_objective(const std::map<int, double>& coeffs) { objective_ = coeffs; }

  ConicProgram& finish() {
    for (auto& eq : pending_equalities_) {
      ConicProgram::Equality e;
      e.constant = eq.constant;
      e.coeffs = Eigen::VectorXd::Zero(program_.num_scalars);
      for (const auto& [idx, v] : eq.coeffs) e.coeffs(idx) = v;
      program_.equalities.push_back(std::move(e));
    }
    pending_equalities_.clear();
    if (!objective_.empty()) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(program_.num_scalars);
      for (const auto& [idx, v] : objective_) c(idx) = v;
      program_.objective = c;
    }
    return program_;
  }

  Eigen::MatrixXd block_value(int block_index, const Eigen::VectorXd& x) const {
    const auto& b = program_.blocks[block_index];
    Eigen::MatrixXd A = b.constant;
    for (const auto& [scalar, trips] : b.coeffs) {
      const double xv = x(scalar);
      if (xv == 0.0) continue;
      for (const auto& t : trips) A(t.row(), t.col()) += xv * t.value();
    }
    return A;
  }

  Polynomial extract(const GramRef& g, const Eigen::VectorXd& x, int num_vars) const {
    Polynomial p(num_vars);
    for (int a = 0; a < g.side; ++a)
      for (int b = a; b < g.side; ++b) {
        const double v = x(g.entry(a, b));
        if (v != 0.0) p.add_term(g.basis[a].times(g.basis[b]), (a == b ? 1.0 : 2.0) * v);
      }
    return p;
  }

 private:
  struct Equation {
    std::map<int, double> coeffs;
    double constant = 0;
  };

  static std::vector<std::pair<int, int>> positions_for(const Monomial& m,
                                                        const MonomialBasis& basis) {
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < basis.size(); ++a) {
      const Monomial& ma = basis.monomials[a];
      bool divides = true;
      std::vector<unsigned> rest(m.exponents());
      for (int v = 0; v < basis.num_vars && divides; ++v) {
        if (ma.exponent(v) > rest[v])
          divides = false;
        else
          rest[v] -= ma.exponent(v);
      }
      if (!divides) continue;
      const int b = basis.find(Monomial(std::move(rest)));
      if (b >= a) out.emplace_back(a, b);
    }
    return out;
  }

  static std::map<Monomial, std::vector<std::pair<int, int>>, GradedLexLess> position_groups(
      const MonomialBasis& basis) {
    std::map<Monomial, std::vector<std::pair<int, int>>, GradedLexLess> groups;
    for (int a = 0; a < basis.size(); ++a)
      for (int b = a; b < basis.size(); ++b)
        groups[basis.monomials[a].times(basis.monomials[b])].emplace_back(a, b);
    return groups;
  }

  ConicProgram program_;
  std::vector<Equation> pending_equalities_;
  std::map<int, double> objective_;
};

SosCertificate make_certificate(const std::string& label, const SosAssembler& assembler,
                                const SosBlockInfo& info, const Eigen::VectorXd& witness,
                                int num_vars) {
  SosCertificate cert;
  cert.label = label;
  cert.num_vars = num_vars;
  cert.target = info.target.value(witness);
  cert.phi_basis = info.basis.monomials;
  if (info.block_index >= 0) {
    cert.gram = assembler.block_value(info.block_index, witness);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cert.gram, Eigen::EigenvaluesOnly);
    cert.margin = es.eigenvalues().minCoeff();
    Polynomial reconstructed(num_vars);
    for (size_t a = 0; a < cert.phi_basis.size(); ++a)
      for (size_t b = a; b < cert.phi_basis.size(); ++b) {
        const double v = (a == b) ? cert.gram(a, a) : cert.gram(a, b) + cert.gram(b, a);
        if (v != 0.0) reconstructed.add_term(cert.phi_basis[a].times(cert.phi_basis[b]), v);
      }
    const double scale = std::max(1.0, cert.target.max_abs_coefficient());
    cert.reconstruction_error = (cert.target - reconstructed).max_abs_coefficient() / scale;
  } else {
    cert.gram = Eigen::MatrixXd::Zero(0, 0);
    cert.margin = 0.0;
    cert.reconstruction_error = cert.target.max_abs_coefficient();
  }
  return cert;
}

}  // namespace

// ---------------------------------------------------------------------------

Polynomial build_wdot(const Polynomial& W, const CoordinationModel& model,
                      const TopologySnapshot& topology, int degree_cap) {
  if (W.num_vars() != model.q_dim())
    throw DimensionError("build_wdot: W must be a polynomial over the stacked state");
  const auto field = closed_loop_field(model, topology);
  Polynomial wdot(W.num_vars());
  const auto grad = W.gradient();
  for (int v = 0; v < W.num_vars(); ++v) {
    if (grad[v].is_zero() || field[v].is_zero()) continue;
    wdot += grad[v] * field[v];
  }
  if (wdot.degree() > degree_cap)
    throw CapacityError("build_wdot: degree " + std::to_string(wdot.degree()) +
                        " exceeds the configured cap");
  return wdot;
}

CertifyResult certify_level_set(const Polynomial& W, const Polynomial& Wdot,
                                const std::vector<Polynomial>& unsafe_q, double c,
                                const EstimatorOptions& opts) {
  const int m = W.num_vars();
  check_capacity(m, (std::max(Wdot.degree(), default_deg_s(W, Wdot, opts) + W.degree()) + 1) / 2,
                 opts);
  SosAssembler assembler(opts.scalar_bound);

  PowerVector phi_s(m, default_deg_s(W, Wdot, opts) / 2);
  GramRef S = assembler.add_gram(phi_s.monomials(), 0.0);
  std::vector<GramRef> R;
  for (const auto& w : unsafe_q) {
    PowerVector phi_r(m, default_deg_r(Wdot, w, opts) / 2);
    R.push_back(assembler.add_gram(phi_r.monomials(), 0.0));
  }

  // -(Wdot + s (c - W) + sum_j r_j w_j)
  AffineTarget target;
  target.constant = -Wdot;
  const Polynomial w_minus_c = W - Polynomial::constant(m, c);
  for (auto& pr : assembler.gram_polynomial_parts(S, w_minus_c).parts)
    target.parts.push_back(std::move(pr));
  for (size_t j = 0; j < unsafe_q.size(); ++j)
    for (auto& pr : assembler.gram_polynomial_parts(R[j], -unsafe_q[j]).parts)
      target.parts.push_back(std::move(pr));
  SosBlockInfo info = assembler.add_sos(target, m);

  SolverOptions sopts;
  sopts.tol_psd = opts.tol_psd;
  sopts.tol_obj = opts.tol_obj;
  ConicOutcome outcome = solve_feasibility(assembler.finish(), sopts);

  CertifyResult result;
  if (outcome.status == SolveStatus::infeasible) {
    result.status = CertifyStatus::refused;
    result.diagnostic = "no certificate at these degrees: " + outcome.diagnostic;
    return result;
  }
  if (outcome.status == SolveStatus::unknown) {
    result.status = CertifyStatus::unknown;
    result.diagnostic = outcome.diagnostic;
    return result;
  }
  SosCertificate cert = make_certificate("decrease", assembler, info, outcome.witness, m);
  cert.multipliers.insert_or_assign("s", assembler.extract(S, outcome.witness, m));
  for (size_t j = 0; j < R.size(); ++j)
    cert.multipliers.insert_or_assign("r" + std::to_string(j), assembler.extract(R[j], outcome.witness, m));
  if (!verify_certificate(cert, opts.recon_tol, -opts.tol_psd)) {
    result.status = CertifyStatus::unknown;
    result.diagnostic = "certificate failed independent re-verification";
    return result;
  }
  result.status = CertifyStatus::certified;
  result.certificate = std::move(cert);
  return result;
}

CertifyResult certify_safety_exclusion(const Polynomial& W,
                                       const std::vector<Polynomial>& block_q, double c,
                                       const EstimatorOptions& opts) {
  const int m = W.num_vars();
  SosAssembler assembler(opts.scalar_bound);
  std::vector<GramRef> T;
  for (const auto& w : block_q) {
    const int deg_t = opts.deg_t > 0 ? even_at_least(opts.deg_t, 2)
                                     : even_at_least(W.degree() - w.degree(), 2);
    PowerVector phi_t(m, deg_t / 2);
    T.push_back(assembler.add_gram(phi_t.monomials(), 0.0));
  }

  // W - c - sum_i t_i w_i
  AffineTarget target;
  target.constant = W - Polynomial::constant(m, c);
  for (size_t i = 0; i < block_q.size(); ++i)
    for (auto& pr : assembler.gram_polynomial_parts(T[i], -block_q[i]).parts)
      target.parts.push_back(std::move(pr));
  SosBlockInfo info = assembler.add_sos(target, m);

  SolverOptions sopts;
  sopts.tol_psd = opts.tol_psd;
  ConicOutcome outcome = solve_feasibility(assembler.finish(), sopts);

  CertifyResult result;
  if (outcome.status == SolveStatus::infeasible) {
    result.status = CertifyStatus::refused;
    result.diagnostic = "exclusion refused at this level: " + outcome.diagnostic;
    return result;
  }
  if (outcome.status == SolveStatus::unknown) {
    result.status = CertifyStatus::unknown;
    result.diagnostic = outcome.diagnostic;
    return result;
  }
  SosCertificate cert = make_certificate("exclusion", assembler, info, outcome.witness, m);
  for (size_t i = 0; i < T.size(); ++i)
    cert.multipliers.insert_or_assign("t" + std::to_string(i), assembler.extract(T[i], outcome.witness, m));
  if (!verify_certificate(cert, opts.recon_tol, -opts.tol_psd)) {
    result.status = CertifyStatus::unknown;
    result.diagnostic = "certificate failed independent re-verification";
    return result;
  }
  result.status = CertifyStatus::certified;
  result.certificate = std::move(cert);
  return result;
}

LevelSearch max_exclusion_level(const Polynomial& W, const std::vector<Polynomial>& block_q,
                                double c_cap, const EstimatorOptions& opts) {
  const int m = W.num_vars();
  SosAssembler assembler(opts.scalar_bound);
  const int c_scalar = assembler.new_scalar();
  assembler.add_box_scalar(c_scalar, 0.0, c_cap);

  std::vector<GramRef> T;
  for (const auto& w : block_q) {
    const int deg_t = opts.deg_t > 0 ? even_at_least(opts.deg_t, 2)
                                     : even_at_least(W.degree() - w.degree(), 2);
    PowerVector phi_t(m, deg_t / 2);
    T.push_back(assembler.add_gram(phi_t.monomials(), 0.0));
  }

  AffineTarget target;
  target.constant = W;
  target.parts.emplace_back(c_scalar, Polynomial::constant(m, -1.0));
  for (size_t i = 0; i < block_q.size(); ++i)
    for (auto& pr : assembler.gram_polynomial_parts(T[i], -block_q[i]).parts)
      target.parts.push_back(std::move(pr));
  SosBlockInfo info = assembler.add_sos(target, m);
  assembler.set_objective({{c_scalar, -1.0}});

  SolverOptions sopts;
  sopts.tol_psd = opts.tol_psd;
  sopts.tol_obj = opts.tol_obj;
  ConicOutcome outcome = solve_min_linear(assembler.finish(), sopts);

  LevelSearch out;
  if (outcome.status == SolveStatus::infeasible) {
    out.status = CertifyStatus::refused;
    out.diagnostic = "block cannot be excluded at any level >= 0: " + outcome.diagnostic;
    return out;
  }
  if (outcome.status == SolveStatus::unknown) {
    out.status = CertifyStatus::unknown;
    out.diagnostic = outcome.diagnostic;
    return out;
  }
  out.status = CertifyStatus::certified;
  out.c = outcome.witness(c_scalar);
  SosCertificate cert = make_certificate("exclusion", assembler, info, outcome.witness, m);
  for (size_t i = 0; i < T.size(); ++i)
    cert.multipliers.insert_or_assign("t" + std::to_string(i), assembler.extract(T[i], outcome.witness, m));
  out.certificate = std::move(cert);
  return out;
}

// ---------------------------------------------------------------------------
// GEVP path
// ---------------------------------------------------------------------------

namespace {

struct GevpPieces {
  SosAssembler assembler;
  GramRef S;
  std::vector<GramRef> R;
  SosBlockInfo main;
  int s_block_index = 0;
  bool s_relaxed = false;

  explicit GevpPieces(double bound) : assembler(bound) {}
};

// sigma1 is normalized away (the multiplier absorbs the scale), so the level
// map is c = -e / (1 + sigma2_hat e) with sigma2_hat = sigma2 / sigma1.
double level_of(double e, double sigma2_hat) { return -e / (1.0 + sigma2_hat * e); }
double e_of_level(double c, double sigma2_hat) { return -c / (1.0 + sigma2_hat * c); }

std::unique_ptr<GevpPieces> assemble_gevp_pieces(const Polynomial& W, const Polynomial& Wdot,
                                                 const std::vector<Polynomial>& unsafe_q, double e,
                                                 double sigma2_hat, const EstimatorOptions& opts) {
  const int m = W.num_vars();
  auto pieces = std::make_unique<GevpPieces>(opts.scalar_bound);
  SosAssembler& assembler = pieces->assembler;

  PowerVector phi_s(m, default_deg_s(W, Wdot, opts) / 2);
  pieces->s_relaxed = unsafe_q.empty();
  pieces->s_block_index = 0;
  pieces->S = assembler.add_gram(phi_s.monomials(), pieces->s_relaxed ? 0.0 : opts.mu_strict);

  for (const auto& w : unsafe_q) {
    PowerVector phi_r(m, default_deg_r(Wdot, w, opts) / 2);
    pieces->R.push_back(assembler.add_gram(phi_r.monomials(), 0.0));
  }

  // Main block polynomial:
  //   -Wdot + [e + (1 + e sigma2_hat) W] s - sum_j r_j w_j
  // which is -(Wdot + s'(c(e) - W) + sum r_j w_j) for s' = (1 + e sigma2_hat) s.
  AffineTarget target;
  target.constant = -Wdot;
  const Polynomial s_factor = Polynomial::constant(m, e) + W * (1.0 + e * sigma2_hat);
  for (auto& pr : assembler.gram_polynomial_parts(pieces->S, s_factor).parts)
    target.parts.push_back(std::move(pr));
  for (size_t j = 0; j < unsafe_q.size(); ++j)
    for (auto& pr : assembler.gram_polynomial_parts(pieces->R[j], -unsafe_q[j]).parts)
      target.parts.push_back(std::move(pr));
  pieces->main = assembler.add_sos(target, m);
  return pieces;
}

struct WGram {
  bool ok = false;
  double margin = 0;
  std::string message;
};

// W must be SOS for the scaling matrix Lambda to stay PSD along the
// bisection; the check doubles as the positive-definiteness report.
WGram w_psd_check(const Polynomial& W, const EstimatorOptions& opts) {
  SosAssembler assembler(opts.scalar_bound);
  AffineTarget t;
  t.constant = W;
  SosBlockInfo info = assembler.add_sos(t, W.num_vars());
  SolverOptions sopts;
  sopts.tol_psd = opts.tol_psd;
  ConicOutcome outcome = solve_feasibility(assembler.finish(), sopts);
  WGram out;
  if (outcome.status == SolveStatus::feasible) {
    out.ok = true;
    if (info.block_index >= 0) {
      Eigen::MatrixXd G = assembler.block_value(info.block_index, outcome.witness);
      if (G.rows() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
        out.margin = es.eigenvalues().minCoeff();
      }
    }
  } else {
    out.message = outcome.diagnostic;
  }
  return out;
}

}  // namespace

GevpAssembly assemble_gevp_lmi(const Polynomial& W, const Polynomial& Wdot,
                               const std::vector<Polynomial>& unsafe_q, double e,
                               const EstimatorOptions& opts) {
  const double sigma2_hat = opts.sigma2 / opts.sigma1;
  auto pieces = assemble_gevp_pieces(W, Wdot, unsafe_q, e, sigma2_hat, opts);
  GevpAssembly out;
  out.psi_basis = pieces->main.basis.monomials;
  out.delta_count = pieces->main.null_count;
  out.s_offset = pieces->S.first_scalar;
  out.s_entries = pieces->S.entry_count();
  for (const auto& r : pieces->R) out.r_offsets.push_back(r.first_scalar);
  out.s_relaxed = pieces->s_relaxed;
  out.program = pieces->assembler.finish();
  return out;
}

RegionResult estimate_c_gevp(const Polynomial& W, const Polynomial& Wdot,
                             const std::vector<std::vector<Polynomial>>& unsafe_blocks_q,
                             const EstimatorOptions& opts) {
  RegionResult result;
  const int m = W.num_vars();
  if (opts.sigma1 <= 0 || opts.sigma2 <= 0) throw ConfigError("sigma1 and sigma2 must be positive");
  const double sigma2_hat = opts.sigma2 / opts.sigma1;

  check_capacity(m, (std::max(Wdot.degree(), default_deg_s(W, Wdot, opts) + W.degree()) + 1) / 2,
                 opts);
  WGram wg = w_psd_check(W, opts);
  if (!wg.ok) {
    result.status = CertifyStatus::refused;
    result.diagnostic = "W is not SOS-representable: " + wg.message;
    return result;
  }

  std::vector<Polynomial> unsafe_flat;
  for (const auto& block : unsafe_blocks_q)
    for (const auto& w : block) unsafe_flat.push_back(w);

  SolverOptions sopts;
  sopts.tol_psd = opts.tol_psd;
  sopts.tol_obj = opts.tol_obj;

  struct Probe {
    bool feasible = false;
    bool unknown = false;
    Eigen::VectorXd witness;
    std::unique_ptr<GevpPieces> pieces;
  };
  auto probe = [&](double e) {
    Probe p;
    p.pieces = assemble_gevp_pieces(W, Wdot, unsafe_flat, e, sigma2_hat, opts);
    ConicOutcome outcome = solve_feasibility(p.pieces->assembler.finish(), sopts);
    p.feasible = outcome.status == SolveStatus::feasible;
    p.unknown = outcome.status == SolveStatus::unknown;
    if (p.feasible) {
      if (!unsafe_flat.empty()) {
        // The strict shift on S-bar must survive verification.
        Eigen::MatrixXd Sv =
            p.pieces->assembler.block_value(p.pieces->s_block_index, outcome.witness);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sv, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -0.5 * opts.mu_strict) p.feasible = false;
      }
      p.witness = outcome.witness;
    }
    return p;
  };

  const double bracket_lo = -(1.0 / sigma2_hat) * (1.0 - opts.e_margin);
  int unknown_midpoints = 0;
  double e_tilde = 0;
  Probe best;
  bool unbounded = false;

  Probe lo_probe = probe(bracket_lo);
  if (lo_probe.feasible) {
    e_tilde = bracket_lo;
    best = std::move(lo_probe);
    unbounded = true;
  } else {
    Probe hi_probe = probe(0.0);
    if (hi_probe.unknown) {
      result.status = CertifyStatus::unknown;
      result.diagnostic = "solver could not decide feasibility at e = 0";
      return result;
    }
    if (!hi_probe.feasible) {
      result.status = CertifyStatus::refused;
      result.diagnostic = "no feasible e in the bracket (even e = 0 fails)";
      return result;
    }
    double lo = bracket_lo, hi = 0.0;
    best = std::move(hi_probe);
    const double width_tol = opts.bisect_tol * std::abs(bracket_lo);
    while (hi - lo > width_tol) {
      const double mid = 0.5 * (lo + hi);
      Probe p = probe(mid);
      if (p.feasible) {
        hi = mid;
        best = std::move(p);
      } else {
        if (p.unknown) ++unknown_midpoints;
        lo = mid;
      }
    }
    e_tilde = hi;
  }

  const double c_decrease = level_of(e_tilde, sigma2_hat);

  CertifiedRegion region;
  region.W = W;
  region.sigma1 = opts.sigma1;
  region.sigma2 = opts.sigma2;
  region.e_tilde = e_tilde;
  region.unbounded = unbounded;
  region.s_relaxed = unsafe_flat.empty();
  region.strict_exclusion = opts.strict_exclusion && !unsafe_blocks_q.empty();
  if (unknown_midpoints > 0)
    region.notes.push_back(std::to_string(unknown_midpoints) +
                           " bisection midpoints were undecided and treated as infeasible");
  if (wg.margin < opts.tol_psd)
    region.notes.push_back("W Gram is positive semidefinite but not definite (margin " +
                           std::to_string(wg.margin) + ")");

  // Exclusion pass: shrink the level until every unsafe block is excluded.
  double c_final = c_decrease;
  std::vector<std::pair<double, SosCertificate>> exclusion_certs;
  if (region.strict_exclusion) {
    for (size_t b = 0; b < unsafe_blocks_q.size(); ++b) {
      LevelSearch ls = max_exclusion_level(W, unsafe_blocks_q[b], c_decrease, opts);
      if (ls.status != CertifyStatus::certified) {
        result.status = ls.status;
        result.diagnostic = "unsafe block " + std::to_string(b) + ": " + ls.diagnostic;
        return result;
      }
      SosCertificate cert = std::move(*ls.certificate);
      cert.label = "exclusion_block" + std::to_string(b);
      exclusion_certs.emplace_back(ls.c, std::move(cert));
      // The level search solves to tol_obj on a slightly relaxed program and
      // can overshoot the true boundary; shaving a tolerance-sized slack puts
      // the shifted certificate strictly inside.
      const double c_safe = std::max(0.0, ls.c - 2.0 * opts.tol_obj * std::max(1.0, std::abs(ls.c)));
      c_final = std::min(c_final, c_safe);
    }
  }

  if (c_final < c_decrease - 1e-12 && !unsafe_flat.empty()) {
    // Re-anchor the decrease certificate at the final level.
    const double e_final = e_of_level(c_final, sigma2_hat);
    Probe p = probe(e_final);
    if (p.feasible) {
      e_tilde = e_final;
      best = std::move(p);
      region.e_tilde = e_tilde;
      region.unbounded = false;
    } else {
      region.notes.push_back(
          "decrease certificate retained at the pre-exclusion level; the re-solve at the final "
          "level was " +
          std::string(p.unknown ? "undecided" : "infeasible"));
    }
  }
  region.c = c_final;

  {
    GevpPieces& pieces = *best.pieces;
    SosCertificate cert =
        make_certificate("decrease", pieces.assembler, pieces.main, best.witness, m);
    const Polynomial s_raw = pieces.assembler.extract(pieces.S, best.witness, m);
    cert.multipliers.insert_or_assign("s", s_raw * (1.0 + e_tilde * sigma2_hat));
    for (size_t j = 0; j < pieces.R.size(); ++j)
      cert.multipliers.insert_or_assign("r" + std::to_string(j),
                                        pieces.assembler.extract(pieces.R[j], best.witness, m));
    if (!verify_certificate(cert, opts.recon_tol, -opts.tol_psd)) {
      result.status = CertifyStatus::unknown;
      result.diagnostic = "decrease certificate failed independent re-verification";
      return result;
    }
    region.certificates.push_back(std::move(cert));
  }

  for (auto& [c_b, cert] : exclusion_certs) {
    if (c_b > c_final) {
      // Shifting the constant diagonal keeps the Gram PSD and re-anchors the
      // identity at the smaller level.
      int const_idx = -1;
      for (size_t i = 0; i < cert.phi_basis.size(); ++i)
        if (cert.phi_basis[i].degree() == 0) const_idx = static_cast<int>(i);
      if (const_idx >= 0) {
        cert.gram(const_idx, const_idx) += c_b - c_final;
        cert.target += Polynomial::constant(m, c_b - c_final);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cert.gram, Eigen::EigenvaluesOnly);
        cert.margin = es.eigenvalues().minCoeff();
      }
    }
    if (!verify_certificate(cert, opts.recon_tol, -opts.tol_psd)) {
      result.status = CertifyStatus::unknown;
      result.diagnostic = "exclusion certificate failed re-verification after the level shift";
      return result;
    }
    region.certificates.push_back(std::move(cert));
  }

  result.status = CertifyStatus::certified;
  result.region = std::move(region);
  return result;
}

bool verify_certificate(const SosCertificate& cert, double recon_tol, double min_margin) {
  if (cert.gram.rows() != cert.gram.cols()) return false;
  if (cert.gram.rows() != static_cast<int>(cert.phi_basis.size())) return false;
  const Eigen::MatrixXd sym = 0.5 * (cert.gram + cert.gram.transpose());
  double margin = 0.0;
  if (sym.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    margin = es.eigenvalues().minCoeff();
  }
  const double scale = std::max(1.0, cert.target.max_abs_coefficient());
  if (margin < min_margin * std::max(1.0, scale)) return false;
  Polynomial reconstructed(cert.num_vars);
  for (size_t a = 0; a < cert.phi_basis.size(); ++a)
    for (size_t b = a; b < cert.phi_basis.size(); ++b) {
      const double v = (a == b) ? sym(a, a) : 2.0 * sym(a, b);
      if (v != 0.0) reconstructed.add_term(cert.phi_basis[a].times(cert.phi_basis[b]), v);
    }
  return (cert.target - reconstructed).max_abs_coefficient() <= recon_tol * scale;
}

std::vector<std::vector<Polynomial>> unsafe_blocks_in_q(const CoordinationModel& model) {
  std::vector<std::vector<Polynomial>> out;
  for (size_t b = 0; b < model.unsafe.blocks.size(); ++b)
    for (int agent = 0; agent < model.num_agents; ++agent)
      out.push_back(unsafe_block_in_q(model, static_cast<int>(b), agent));
  return out;
}

RegionResult estimate_region(const CoordinationModel& model, const EstimatorOptions& opts) {
  const TopologySnapshot topology = initial_topology(model, model.initial);
  const Polynomial W = lyapunov_polynomial(model, topology);
  const Polynomial Wdot = build_wdot(W, model, topology, opts.wdot_degree_cap);
  return estimate_c_gevp(W, Wdot, unsafe_blocks_in_q(model), opts);
}

// ---------------------------------------------------------------------------

CertifyResult barrier_validity_sos(const BarrierShape& shape, double interval_lo,
                                   double interval_hi, const EstimatorOptions& opts) {
  shape.validate_even();
  CertifyResult result;
  if (interval_hi <= interval_lo) throw ConfigError("barrier validity: empty interval");

  const double scale = std::max(1.0, std::abs(shape.mu));
  const double boundary_point = shape.kind == BarrierKind::connectivity ? interval_hi : interval_lo;
  if (std::abs(shape.value(boundary_point) - shape.mu) > 1e-6 * scale) {
    result.status = CertifyStatus::refused;
    result.diagnostic = "boundary value does not interpolate mu";
    return result;
  }
  if (shape.kind == BarrierKind::connectivity && std::abs(shape.value(0.0)) > 1e-12 * scale) {
    result.status = CertifyStatus::refused;
    result.diagnostic = "connectivity shape must vanish at z = 0";
    return result;
  }

  SosAssembler assembler(opts.scalar_bound);
  const Polynomial z = Polynomial::variable(1, 0);
  const Polynomial dz = shape.poly.derivative(0);
  const int mult_deg = even_at_least(shape.poly.degree() - 2, 0);
  PowerVector phi_m(1, mult_deg / 2);

  std::vector<SosBlockInfo> infos;
  if (shape.kind == BarrierKind::connectivity) {
    AffineTarget shape_sos;
    shape_sos.constant = shape.poly;
    infos.push_back(assembler.add_sos(shape_sos, 1));
    AffineTarget ratio_sos;
    ratio_sos.constant = radial_slope_in_z(shape);
    infos.push_back(assembler.add_sos(ratio_sos, 1));
    // dz - m1 z - m2 (hi - z) SOS  =>  dz >= 0 on [0, hi].
    GramRef m1 = assembler.add_gram(phi_m.monomials(), 0.0);
    GramRef m2 = assembler.add_gram(phi_m.monomials(), 0.0);
    AffineTarget slope;
    slope.constant = dz;
    for (auto& pr : assembler.gram_polynomial_parts(m1, -z).parts)
      slope.parts.push_back(std::move(pr));
    const Polynomial hi_minus_z = Polynomial::constant(1, interval_hi) - z;
    for (auto& pr : assembler.gram_polynomial_parts(m2, -hi_minus_z).parts)
      slope.parts.push_back(std::move(pr));
    infos.push_back(assembler.add_sos(slope, 1));
  } else {
    const Polynomial z_minus_lo = z - Polynomial::constant(1, interval_lo);
    const Polynomial hi_minus_z = Polynomial::constant(1, interval_hi) - z;
    GramRef u1 = assembler.add_gram(phi_m.monomials(), 0.0);
    GramRef u2 = assembler.add_gram(phi_m.monomials(), 0.0);
    AffineTarget nonneg;
    nonneg.constant = shape.poly;
    for (auto& pr : assembler.gram_polynomial_parts(u1, -z_minus_lo).parts)
      nonneg.parts.push_back(std::move(pr));
    for (auto& pr : assembler.gram_polynomial_parts(u2, -hi_minus_z).parts)
      nonneg.parts.push_back(std::move(pr));
    infos.push_back(assembler.add_sos(nonneg, 1));
    // -dz - m3 (z - lo) - m4 (hi - z) SOS  =>  dz <= 0 on [lo, hi].
    GramRef m3 = assembler.add_gram(phi_m.monomials(), 0.0);
    GramRef m4 = assembler.add_gram(phi_m.monomials(), 0.0);
    AffineTarget slope;
    slope.constant = -dz;
    for (auto& pr : assembler.gram_polynomial_parts(m3, -z_minus_lo).parts)
      slope.parts.push_back(std::move(pr));
    for (auto& pr : assembler.gram_polynomial_parts(m4, -hi_minus_z).parts)
      slope.parts.push_back(std::move(pr));
    infos.push_back(assembler.add_sos(slope, 1));
  }

  SolverOptions sopts;
  sopts.tol_psd = opts.tol_psd;
  ConicOutcome outcome = solve_feasibility(assembler.finish(), sopts);
  if (outcome.status == SolveStatus::infeasible) {
    result.status = CertifyStatus::refused;
    result.diagnostic =
        "validity conditions are not certifiable at this degree: " + outcome.diagnostic;
    return result;
  }
  if (outcome.status == SolveStatus::unknown) {
    result.status = CertifyStatus::unknown;
    result.diagnostic = outcome.diagnostic;
    return result;
  }
  SosCertificate cert = make_certificate("slope_sign", assembler, infos.back(), outcome.witness, 1);
  if (!verify_certificate(cert, opts.recon_tol, -opts.tol_psd)) {
    result.status = CertifyStatus::unknown;
    result.diagnostic = "validity certificate failed re-verification";
    return result;
  }
  result.status = CertifyStatus::certified;
  result.certificate = std::move(cert);
  return result;
}

double canonical_trace(const Polynomial& W) { return smr_of(W).base.trace(); }

VolumeSurrogates volume_surrogates(const CertifiedRegion& region) {
  const int m = region.W.num_vars();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [mono, coeff] : region.W.terms()) {
    if (mono.degree() != 2) continue;
    int first = -1, second = -1;
    for (int v = 0; v < m; ++v) {
      for (unsigned k = 0; k < mono.exponent(v); ++k) {
        if (first < 0)
          first = v;
        else
          second = v;
      }
    }
    if (second < 0 || first == second) {
      Q(first, first) += coeff;
    } else {
      Q(first, second) += 0.5 * coeff;
      Q(second, first) += 0.5 * coeff;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-12)
    throw ConfigError("volume surrogates need a positive definite quadratic part");
  VolumeSurrogates out;
  out.linear_surrogate = region.c / Q.trace();
  out.eta = std::pow(region.c, m) / Q.determinant();
  return out;
}

// ---------------------------------------------------------------------------
// Optimal barrier search
// ---------------------------------------------------------------------------

namespace {

struct ShapeVars {
  std::vector<int> conn_scalars;  ///< a_k multiplies z^{2(k+1)}, k = 0..db/2-1
  std::vector<int> coll_scalars;  ///< b_k multiplies z^{2k},     k = 0..db/2

  BarrierShape conn_shape(const Eigen::VectorXd& x, double mu1) const {
    BarrierShape s;
    s.kind = BarrierKind::connectivity;
    s.mu = mu1;
    s.poly = Polynomial(1);
    for (size_t k = 0; k < conn_scalars.size(); ++k)
      s.poly.add_term(Monomial::var_power(1, 0, 2 * (k + 1)), x(conn_scalars[k]));
    return s;
  }
  BarrierShape coll_shape(const Eigen::VectorXd& x, double mu2) const {
    BarrierShape s;
    s.kind = BarrierKind::collision;
    s.mu = mu2;
    s.poly = Polynomial(1);
    for (size_t k = 0; k < coll_scalars.size(); ++k)
      s.poly.add_term(Monomial::var_power(1, 0, 2 * k), x(coll_scalars[k]));
    return s;
  }
};

// W(a, b, q) split into a fixed part plus one polynomial per shape
// coefficient, over the frozen topology.
struct WPieces {
  Polynomial fixed = Polynomial(1);
  std::vector<Polynomial> conn;
  std::vector<Polynomial> coll;
};

WPieces lyapunov_pieces(const CoordinationModel& model, const TopologySnapshot& topology, int db) {
  const int m = model.q_dim();
  WPieces pieces;

  CoordinationModel bare = model;
  bare.conn_barrier.poly = Polynomial(1);
  bare.coll_barrier.poly = Polynomial(1);
  pieces.fixed = lyapunov_polynomial(bare, topology);

  std::set<Edge> sf_pairs, sz_pairs;
  for (int i = 0; i < model.num_agents; ++i) {
    for (int j : topology.sets[i].formation) sf_pairs.insert(make_edge(i, j));
    for (int j : topology.sets[i].collision) sz_pairs.insert(make_edge(i, j));
  }
  auto gap = [&](const Edge& e) {
    Polynomial w(m);
    for (int d = 0; d < model.spatial_dim; ++d) {
      Polynomial diff = Polynomial::variable(m, model.y_offset(e.first) + d) -
                        Polynomial::variable(m, model.y_offset(e.second) + d);
      w += diff * diff;
    }
    return w;
  };
  for (int k = 1; k <= db / 2; ++k) {
    Polynomial sum(m);
    for (const auto& e : sf_pairs) sum += gap(e).pow(k);
    pieces.conn.push_back(std::move(sum));
  }
  for (int k = 0; k <= db / 2; ++k) {
    Polynomial sum(m);
    for (const auto& e : sz_pairs) sum += gap(e).pow(k);
    pieces.coll.push_back(std::move(sum));
  }
  return pieces;
}

}  // namespace

BarrierOptimum optimize_barriers(const CoordinationModel& model, const EstimatorOptions& opts) {
  BarrierOptimum out;
  const int db = even_at_least(opts.barrier_degree, 2);
  const TopologySnapshot topology = initial_topology(model, model.initial);
  const double tau_norm = model.worst_case_tau_norm();
  const double r_hat = connectivity_interval_end(model.geo, tau_norm);
  const double d_hat = collision_interval_start(model.geo, tau_norm);
  const double z_max =
        model.geo.r_z + tau_norm > d_hat ? model.geo.r_z + tau_norm : 1.5 * d_hat;
  if (r_hat <= 0) throw ConfigError("optimize_barriers: r_s - ||tau|| must be positive");

  CoordinationModel work = model;
  const auto unsafe_q = unsafe_blocks_in_q(model);

  auto evaluate_region = [&](const CoordinationModel& mdl) -> RegionResult {
    const Polynomial W = lyapunov_polynomial(mdl, topology);
    const Polynomial Wdot = build_wdot(W, mdl, topology, opts.wdot_degree_cap);
    return estimate_c_gevp(W, Wdot, unsafe_q, opts);
  };

  RegionResult incumbent = evaluate_region(work);
  if (incumbent.status != CertifyStatus::certified) {
    out.status = incumbent.status;
    out.diagnostic = "initial shapes are not certifiable: " + incumbent.diagnostic;
    return out;
  }
  double trace_now = canonical_trace(lyapunov_polynomial(work, topology));
  out.baseline_kappa = incumbent.region->c / trace_now;
  out.trace_iters.push_back(trace_now);
  out.region = incumbent.region;

  const WPieces pieces = lyapunov_pieces(model, topology, db);
  const int m = model.q_dim();
  const Polynomial wdot_fixed = lyapunov_rate_polynomial(model, topology);

  // Only shape families that actually enter W are optimized; the others pass
  // through unchanged (their coefficients would be unconstrained noise).
  bool conn_active = false, coll_active = false;
  for (const auto& piece : pieces.conn) conn_active = conn_active || !piece.is_zero();
  for (const auto& piece : pieces.coll) coll_active = coll_active || !piece.is_zero();
  if (model.conn_barrier.poly.degree() > db && conn_active) {
    out.status = CertifyStatus::refused;
    out.diagnostic = "initial connectivity shape has degree " +
                     std::to_string(model.conn_barrier.poly.degree()) +
                     " but the search space is capped at " + std::to_string(db) +
                     "; raise barrier degree or supply matching initial shapes";
    return out;
  }
  if (model.coll_barrier.poly.degree() > db && coll_active) {
    out.status = CertifyStatus::refused;
    out.diagnostic = "initial collision shape exceeds the search degree";
    return out;
  }

  for (int iter = 0; iter < opts.n_iters; ++iter) {
    // (A) freeze the shapes; take (s, c) from the certified region.
    RegionResult step_a = (iter == 0) ? std::move(incumbent) : evaluate_region(work);
    if (step_a.status != CertifyStatus::certified) {
      out.diagnostic = "iteration " + std::to_string(iter) + " A-step failed: " + step_a.diagnostic;
      break;
    }
    const double c_fixed = step_a.region->c;
    Polynomial s_fixed(m);
    for (const auto& cert : step_a.region->certificates) {
      if (cert.label == "decrease") {
        auto it = cert.multipliers.find("s");
        if (it != cert.multipliers.end()) s_fixed = it->second;
      }
    }
    out.region = std::move(step_a.region);

    // (B) freeze (s, c); minimize the Gram trace over the shape coefficients.
    SosAssembler assembler(opts.scalar_bound);
    ShapeVars vars;
    if (conn_active)
      for (int k = 1; k <= db / 2; ++k) vars.conn_scalars.push_back(assembler.new_scalar());
    if (coll_active)
      for (int k = 0; k <= db / 2; ++k) vars.coll_scalars.push_back(assembler.new_scalar());

    if (conn_active) {
      std::map<int, double> eq;
      for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
        eq[vars.conn_scalars[k]] = std::pow(r_hat, 2.0 * (k + 1));
      assembler.add_linear_equality(eq, -model.conn_barrier.mu);
    }
    if (coll_active) {
      std::map<int, double> eq;
      for (size_t k = 0; k < vars.coll_scalars.size(); ++k)
        eq[vars.coll_scalars[k]] = std::pow(d_hat, 2.0 * k);
      assembler.add_linear_equality(eq, -model.coll_barrier.mu);
    }

    // W(a, b) SOS. The fixed part carries pass-through barrier terms.
    Polynomial fixed_part = pieces.fixed;
    if (!conn_active) {
      CoordinationModel frozen = work;
      frozen.coll_barrier.poly = Polynomial(1);
      fixed_part = lyapunov_polynomial(frozen, topology);
    } else if (!coll_active) {
      CoordinationModel frozen = work;
      frozen.conn_barrier.poly = Polynomial(1);
      Polynomial with_coll = lyapunov_polynomial(frozen, topology);
      fixed_part = with_coll;  // consensus + kinetic + pass-through collision terms
    }
    {
      AffineTarget w_target;
      w_target.constant = fixed_part;
      for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
        if (!pieces.conn[k].is_zero())
          w_target.parts.emplace_back(vars.conn_scalars[k], pieces.conn[k]);
      for (size_t k = 0; k < vars.coll_scalars.size(); ++k)
        if (!pieces.coll[k].is_zero())
          w_target.parts.emplace_back(vars.coll_scalars[k], pieces.coll[k]);
      assembler.add_sos(w_target, m);
    }

    // Decrease at the frozen (s, c): -(wdot + s (c - W(a,b)) + sum r_j w_j).
    {
      AffineTarget psi;
      psi.constant = -wdot_fixed - s_fixed * c_fixed + s_fixed * fixed_part;
      for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
        if (!pieces.conn[k].is_zero())
          psi.parts.emplace_back(vars.conn_scalars[k], s_fixed * pieces.conn[k]);
      for (size_t k = 0; k < vars.coll_scalars.size(); ++k)
        if (!pieces.coll[k].is_zero())
          psi.parts.emplace_back(vars.coll_scalars[k], s_fixed * pieces.coll[k]);
      for (const auto& block : unsafe_q) {
        for (const auto& w : block) {
          PowerVector phi_r(m, default_deg_r(wdot_fixed, w, opts) / 2);
          GramRef R = assembler.add_gram(phi_r.monomials(), 0.0);
          for (auto& pr : assembler.gram_polynomial_parts(R, -w).parts)
            psi.parts.push_back(std::move(pr));
        }
      }
      assembler.add_sos(psi, m);
    }

    // Shape validity in z.
    {
      const Polynomial z = Polynomial::variable(1, 0);
      const int mult_deg = even_at_least(db - 2, 0);
      PowerVector phi_m(1, mult_deg / 2);

      if (conn_active) {
      AffineTarget conn_sos;
      conn_sos.constant = Polynomial(1);
      for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
        conn_sos.parts.emplace_back(vars.conn_scalars[k],
                                    Polynomial::term(1, Monomial::var_power(1, 0, 2 * (k + 1)), 1.0));
      assembler.add_sos(conn_sos, 1);

      AffineTarget ratio;
      ratio.constant = Polynomial(1);
      for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
        ratio.parts.emplace_back(vars.conn_scalars[k],
                                 Polynomial::term(1, Monomial::var_power(1, 0, 2 * k),
                                                  2.0 * static_cast<double>(k + 1)));
      assembler.add_sos(ratio, 1);

      {
        GramRef m1 = assembler.add_gram(phi_m.monomials(), 0.0);
        GramRef m2 = assembler.add_gram(phi_m.monomials(), 0.0);
        AffineTarget slope;
        slope.constant = Polynomial(1);
        for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
          slope.parts.emplace_back(vars.conn_scalars[k],
                                   Polynomial::term(1, Monomial::var_power(1, 0, 2 * k + 1),
                                                    2.0 * static_cast<double>(k + 1)));
        for (auto& pr : assembler.gram_polynomial_parts(m1, -z).parts)
          slope.parts.push_back(std::move(pr));
        const Polynomial hi_minus_z = Polynomial::constant(1, r_hat) - z;
        for (auto& pr : assembler.gram_polynomial_parts(m2, -hi_minus_z).parts)
          slope.parts.push_back(std::move(pr));
        assembler.add_sos(slope, 1);
      }
      }
      if (coll_active) {
      const Polynomial z_minus_lo = z - Polynomial::constant(1, d_hat);
      const Polynomial hi_minus_z = Polynomial::constant(1, z_max) - z;
      {
        GramRef u1 = assembler.add_gram(phi_m.monomials(), 0.0);
        GramRef u2 = assembler.add_gram(phi_m.monomials(), 0.0);
        AffineTarget nonneg;
        nonneg.constant = Polynomial(1);
        for (size_t k = 0; k < vars.coll_scalars.size(); ++k)
          nonneg.parts.emplace_back(vars.coll_scalars[k],
                                    Polynomial::term(1, Monomial::var_power(1, 0, 2 * k), 1.0));
        for (auto& pr : assembler.gram_polynomial_parts(u1, -z_minus_lo).parts)
          nonneg.parts.push_back(std::move(pr));
        for (auto& pr : assembler.gram_polynomial_parts(u2, -hi_minus_z).parts)
          nonneg.parts.push_back(std::move(pr));
        assembler.add_sos(nonneg, 1);
      }
      {
        GramRef m3 = assembler.add_gram(phi_m.monomials(), 0.0);
        GramRef m4 = assembler.add_gram(phi_m.monomials(), 0.0);
        AffineTarget slope;
        slope.constant = Polynomial(1);
        for (size_t k = 1; k < vars.coll_scalars.size(); ++k)
          slope.parts.emplace_back(vars.coll_scalars[k],
                                   Polynomial::term(1, Monomial::var_power(1, 0, 2 * k - 1),
                                                    -2.0 * static_cast<double>(k)));
        for (auto& pr : assembler.gram_polynomial_parts(m3, -z_minus_lo).parts)
          slope.parts.push_back(std::move(pr));
        for (auto& pr : assembler.gram_polynomial_parts(m4, -hi_minus_z).parts)
          slope.parts.push_back(std::move(pr));
        assembler.add_sos(slope, 1);
      }
      }
    }

    std::map<int, double> objective;
    for (size_t k = 0; k < vars.conn_scalars.size(); ++k)
      if (!pieces.conn[k].is_zero())
        objective[vars.conn_scalars[k]] = canonical_trace(pieces.conn[k]);
    for (size_t k = 0; k < vars.coll_scalars.size(); ++k)
      if (!pieces.coll[k].is_zero())
        objective[vars.coll_scalars[k]] = canonical_trace(pieces.coll[k]);
    if (objective.empty()) {
      out.diagnostic = "no shape coefficient enters W on this topology; nothing to optimize";
      break;
    }
    assembler.set_objective(objective);

    SolverOptions sopts;
    sopts.tol_psd = opts.tol_psd;
    sopts.tol_obj = opts.tol_obj;
    ConicOutcome outcome = solve_min_linear(assembler.finish(), sopts);
    if (outcome.status != SolveStatus::feasible) {
      out.diagnostic = "iteration " + std::to_string(iter) +
                       " B-step did not return a feasible shape: " + outcome.diagnostic;
      break;
    }
    if (conn_active) work.conn_barrier = vars.conn_shape(outcome.witness, model.conn_barrier.mu);
    if (coll_active) work.coll_barrier = vars.coll_shape(outcome.witness, model.coll_barrier.mu);
    trace_now = canonical_trace(lyapunov_polynomial(work, topology));
    out.trace_iters.push_back(trace_now);
  }

  if (opts.n_iters > 0) {
    RegionResult final_region = evaluate_region(work);
    if (final_region.status == CertifyStatus::certified)
      out.region = std::move(final_region.region);
  }
  out.conn = work.conn_barrier;
  out.coll = work.coll_barrier;
  out.zeta = trace_now;
  if (out.region) {
    out.kappa = out.region->c / out.zeta;
    out.status = CertifyStatus::certified;
  } else {
    out.status = CertifyStatus::refused;
    if (out.diagnostic.empty()) out.diagnostic = "no certified region at the final shapes";
  }
  return out;
}

}  // namespace sgr

#include "sgr/conic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace sgr {

void ConicProgram::validate() const {
  for (const auto& b : blocks) {
    if (b.constant.rows() != b.side || b.constant.cols() != b.side)
      throw DimensionError("conic block constant has wrong side");
    for (const auto& [scalar, trips] : b.coeffs) {
      if (scalar < 0 || scalar >= num_scalars)
        throw DimensionError("conic block references scalar out of range");
      for (const auto& t : trips)
        if (t.row() >= b.side || t.col() >= b.side)
          throw DimensionError("conic block triplet out of range");
    }
  }
  for (const auto& e : equalities) {
    if (e.coeffs.size() != num_scalars) throw DimensionError("equality coefficient length mismatch");
  }
  if (objective && objective->size() != num_scalars)
    throw DimensionError("objective length mismatch");
}

void BlockBuilder::add_constant(int r, int c, double v) {
  constant_(r, c) += v;
  if (r != c) constant_(c, r) += v;
}

void BlockBuilder::add_coeff(int scalar, int r, int c, double v) {
  if (v == 0.0) return;
  auto& trips = coeffs_[scalar];
  trips.emplace_back(r, c, v);
  if (r != c) trips.emplace_back(c, r, v);
}

void BlockBuilder::add_coeff_matrix(int scalar, const Eigen::MatrixXd& m, double scale) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = r; c < m.cols(); ++c)
      if (m(r, c) != 0.0) add_coeff(scalar, r, c, m(r, c) * scale);
}

void BlockBuilder::add_coeff_matrix(int scalar, const Eigen::SparseMatrix<double>& m, double scale) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (it.row() <= it.col() && it.value() != 0.0)
        add_coeff(scalar, static_cast<int>(it.row()), static_cast<int>(it.col()), it.value() * scale);
    }
  }
}

ConicProgram::Block BlockBuilder::finish() {
  ConicProgram::Block b;
  b.side = side_;
  b.constant = std::move(constant_);
  b.coeffs.assign(coeffs_.begin(), coeffs_.end());
  return b;
}

namespace {

using Trip = Eigen::Triplet<double>;

struct WorkBlock {
  int side = 0;
  Eigen::MatrixXd constant;
  std::vector<std::pair<int, std::vector<Trip>>> coeffs;
};

// Internal program after adding the box and (for phase I) the margin scalar.
struct Work {
  int n = 0;  // scalars including any augmentation
  std::vector<WorkBlock> blocks;
  Eigen::MatrixXd E;   // equality rows
  Eigen::VectorXd e0;  // E x + e0 = 0
  Eigen::VectorXd c;   // minimize c . x
  int barrier_count = 0;

  Eigen::MatrixXd block_value(const WorkBlock& b, const Eigen::VectorXd& x) const {
    Eigen::MatrixXd A = b.constant;
    for (const auto& [scalar, trips] : b.coeffs) {
      const double xv = x(scalar);
      if (xv == 0.0) continue;
      for (const auto& t : trips) A(t.row(), t.col()) += xv * t.value();
    }
    return A;
  }

  bool interior(const Eigen::VectorXd& x, double* log_det_sum = nullptr) const {
    double acc = 0.0;
    for (const auto& b : blocks) {
      Eigen::LLT<Eigen::MatrixXd> llt(block_value(b, x));
      if (llt.info() != Eigen::Success) return false;
      const auto& L = llt.matrixLLT();
      for (int i = 0; i < b.side; ++i) {
        if (!(L(i, i) > 0) || !std::isfinite(L(i, i))) return false;
        acc += std::log(L(i, i));
      }
    }
    if (log_det_sum) *log_det_sum = 2.0 * acc;
    return true;
  }
};

void add_box_blocks(Work& w, int first_scalar, int count, double bound) {
  for (int i = first_scalar; i < first_scalar + count; ++i) {
    WorkBlock lo, hi;
    lo.side = hi.side = 1;
    lo.constant = Eigen::MatrixXd::Constant(1, 1, bound);
    lo.coeffs.push_back({i, {Trip(0, 0, 1.0)}});   // bound + x_i >= 0
    hi.constant = Eigen::MatrixXd::Constant(1, 1, bound);
    hi.coeffs.push_back({i, {Trip(0, 0, -1.0)}});  // bound - x_i >= 0
    w.blocks.push_back(std::move(lo));
    w.blocks.push_back(std::move(hi));
  }
}

struct CenterResult {
  bool ok = false;
  std::string message;
};

// Damped Newton centering of tau * c.x + Phi(x) on the equality manifold.
CenterResult center(const Work& w, double tau, Eigen::VectorXd& x, int max_inner) {
  const int n = w.n;
  const int meq = static_cast<int>(w.E.rows());

  for (int inner = 0; inner < max_inner; ++inner) {
    // Gradient and Hessian of the barrier.
    Eigen::VectorXd g = tau * w.c;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (const auto& b : w.blocks) {
      Eigen::LLT<Eigen::MatrixXd> llt(w.block_value(b, x));
      if (llt.info() != Eigen::Success) return {false, "iterate left the interior"};
      Eigen::MatrixXd Ainv = llt.solve(Eigen::MatrixXd::Identity(b.side, b.side));
      const int nb = static_cast<int>(b.coeffs.size());
      for (int bi = 0; bi < nb; ++bi) {
        const auto& [si, trips_i] = b.coeffs[bi];
        double gi = 0.0;
        for (const auto& t : trips_i) gi += t.value() * Ainv(t.col(), t.row());
        g(si) -= gi;
        // M = Ainv * F_i * Ainv via outer products of Ainv columns.
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(b.side, b.side);
        for (const auto& t : trips_i)
          M.noalias() += t.value() * (Ainv.col(t.row()) * Ainv.row(t.col()));
        for (int bj = bi; bj < nb; ++bj) {
          const auto& [sj, trips_j] = b.coeffs[bj];
          double hij = 0.0;
          for (const auto& t : trips_j) hij += t.value() * M(t.col(), t.row());
          H(si, sj) += hij;
          if (si != sj) H(sj, si) += hij;
        }
      }
    }

    // KKT step restricted to E dx = 0.
    Eigen::VectorXd dx(n);
    double ridge = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      Eigen::MatrixXd Hr = H;
      if (ridge > 0) Hr.diagonal().array() += ridge;
      if (meq == 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Hr);
        if (ldlt.info() == Eigen::Success) {
          dx = ldlt.solve(-g);
          if (dx.allFinite()) break;
        }
      } else {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + meq, n + meq);
        K.topLeftCorner(n, n) = Hr;
        K.topRightCorner(n, meq) = w.E.transpose();
        K.bottomLeftCorner(meq, n) = w.E;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + meq);
        rhs.head(n) = -g;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
        Eigen::VectorXd sol = lu.solve(rhs);
        dx = sol.head(n);
        if (dx.allFinite()) break;
      }
      ridge = ridge == 0 ? 1e-12 * (1.0 + H.trace() / n) : ridge * 100;
      if (attempt == 5) return {false, "Newton system could not be solved"};
    }

    const double decrement2 = -g.dot(dx);
    if (!(decrement2 > 0)) {
      // Ascent or numerically flat: converged as far as the algebra allows.
      return {true, ""};
    }
    if (decrement2 < 1e-10) return {true, ""};

    // Backtracking line search: stay interior, then Armijo on the merit.
    double merit0;
    {
      double logdet = 0.0;
      if (!w.interior(x, &logdet)) return {false, "lost interiority"};
      merit0 = tau * w.c.dot(x) - logdet;
    }
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd xn = x + alpha * dx;
      double logdet = 0.0;
      if (w.interior(xn, &logdet)) {
        const double merit = tau * w.c.dot(xn) - logdet;
        if (merit <= merit0 - 0.25 * alpha * decrement2) {
          x = xn;
          accepted = true;
          break;
        }
      }
      alpha *= 0.7;
    }
    if (!accepted) return {true, "line search stalled"};
  }
  return {true, "inner iteration limit"};
}

struct PathResult {
  Eigen::VectorXd x;
  double gap = 0;
  bool ok = false;           ///< path ended in a usable state
  bool bound_valid = false;  ///< certified_lower carries a valid duality bound
  double certified_lower = 0;  ///< objective* >= certified_lower (at some centered point)
  std::string message;
};

PathResult follow_path(const Work& w, Eigen::VectorXd x, double gap_target, int max_outer,
                       int max_inner) {
  PathResult out;
  const bool trace = std::getenv("SGR_TRACE_SOLVER") != nullptr;
  double tau = 1.0;
  for (int outer = 0; outer < max_outer; ++outer) {
    Eigen::VectorXd before = x;
    CenterResult c = center(w, tau, x, max_inner);
    if (trace)
      std::fprintf(stderr, "  outer %d tau %.3e centered=%d msg=%s obj=%.9f\n", outer, tau,
                   (int)(c.ok && c.message.empty()), c.message.c_str(), w.c.dot(x));
    if (!c.ok) {
      x = before;  // the failed attempt may have left the interior
      out.message = c.message;
      break;
    }
    out.gap = w.barrier_count / tau;
    // The duality bound (objective* >= current - gap) holds at centered
    // points only; keep the tightest certified one.
    if (c.message.empty()) {
      const double lower = w.c.dot(x) - out.gap;
      out.certified_lower = out.bound_valid ? std::max(out.certified_lower, lower) : lower;
      out.bound_valid = true;
    }
    if (out.gap <= gap_target) break;
    tau *= 20.0;
  }
  out.x = std::move(x);
  out.ok = true;
  return out;
}

Work build_work(const ConicProgram& p, bool add_margin_scalar) {
  Work w;
  w.n = p.num_scalars + (add_margin_scalar ? 1 : 0);
  for (const auto& b : p.blocks) {
    WorkBlock wb;
    wb.side = b.side;
    wb.constant = b.constant;
    wb.coeffs = b.coeffs;
    if (add_margin_scalar) {
      std::vector<Trip> diag;
      diag.reserve(b.side);
      for (int i = 0; i < b.side; ++i) diag.emplace_back(i, i, -1.0);
      wb.coeffs.push_back({p.num_scalars, std::move(diag)});
    }
    w.blocks.push_back(std::move(wb));
  }
  add_box_blocks(w, 0, p.num_scalars, p.scalar_bound);
  if (add_margin_scalar) {
    // margin <= cap as a 1x1 block; the lower side is covered by its own box.
    WorkBlock cap;
    cap.side = 1;
    cap.constant = Eigen::MatrixXd::Constant(1, 1, 1.0);
    cap.coeffs.push_back({p.num_scalars, {Trip(0, 0, -1.0)}});
    w.blocks.push_back(std::move(cap));
    WorkBlock floor;
    floor.side = 1;
    floor.constant = Eigen::MatrixXd::Constant(1, 1, 10.0 * p.scalar_bound);
    floor.coeffs.push_back({p.num_scalars, {Trip(0, 0, 1.0)}});
    w.blocks.push_back(std::move(floor));
  }
  const int meq = static_cast<int>(p.equalities.size());
  w.E = Eigen::MatrixXd::Zero(meq, w.n);
  w.e0 = Eigen::VectorXd::Zero(meq);
  for (int r = 0; r < meq; ++r) {
    w.E.row(r).head(p.num_scalars) = p.equalities[r].coeffs.transpose();
    w.e0(r) = p.equalities[r].constant;
  }
  w.c = Eigen::VectorXd::Zero(w.n);
  if (add_margin_scalar) {
    w.c(p.num_scalars) = -1.0;  // maximize the margin
  } else if (p.objective) {
    w.c.head(p.num_scalars) = *p.objective;
  }
  int count = 0;
  for (const auto& b : w.blocks) count += b.side;
  w.barrier_count = count;
  return w;
}

// Minimum-norm solution of the equalities; empty optional when inconsistent.
std::optional<Eigen::VectorXd> equality_start(const Work& w) {
  const int n = w.n;
  if (w.E.rows() == 0) return Eigen::VectorXd::Zero(n);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(w.E);
  Eigen::VectorXd x = cod.solve(-w.e0);
  if ((w.E * x + w.e0).lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + w.e0.lpNorm<Eigen::Infinity>()))
    return std::nullopt;
  return x;
}

double verified_margin(const ConicProgram& p, const Eigen::VectorXd& x) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& b : p.blocks) {
    Eigen::MatrixXd A = b.constant;
    for (const auto& [scalar, trips] : b.coeffs) {
      const double xv = x(scalar);
      for (const auto& t : trips) A(t.row(), t.col()) += xv * t.value();
    }
    if (b.side == 1) {
      margin = std::min(margin, A(0, 0));
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
      margin = std::min(margin, es.eigenvalues().minCoeff());
    }
  }
  return margin;
}

struct PhaseOne {
  bool have_point = false;
  Eigen::VectorXd x;  // without the margin scalar
  double margin_lb = 0;
  double margin_ub = 0;
  std::string message;
};

PhaseOne phase_one(const ConicProgram& p, const SolverOptions& opts) {
  PhaseOne result;
  Work w = build_work(p, /*add_margin_scalar=*/true);

  auto start = equality_start(w);
  if (!start) {
    result.message = "equality constraints are inconsistent";
    result.margin_ub = -std::numeric_limits<double>::infinity();
    return result;
  }
  Eigen::VectorXd x = *start;
  if (x.head(p.num_scalars).lpNorm<Eigen::Infinity>() > 0.9 * p.scalar_bound) {
    result.message = "equality solution violates the scalar box";
    return result;
  }
  // Strictly interior start for the margin variable.
  double min_eig = std::numeric_limits<double>::infinity();
  for (const auto& b : p.blocks) {
    Eigen::MatrixXd A = b.constant;
    for (const auto& [scalar, trips] : b.coeffs) {
      const double xv = x(scalar);
      if (xv == 0.0) continue;
      for (const auto& t : trips) A(t.row(), t.col()) += xv * t.value();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  if (p.blocks.empty()) min_eig = 1.0;
  x(p.num_scalars) = std::min(min_eig - std::max(1.0, 0.1 * std::abs(min_eig)), -1.0);

  if (!w.interior(x)) {
    result.message = "failed to construct an interior starting point";
    return result;
  }

  PathResult path = follow_path(w, x, std::min(opts.gap_tol, 0.25 * opts.tol_psd), opts.max_outer,
                                opts.max_inner);
  result.have_point = true;
  result.x = path.x.head(p.num_scalars);
  result.margin_lb = path.x(p.num_scalars);
  // The phase objective is -margin; a certified objective lower bound turns
  // into an upper bound on the best achievable margin. Without any converged
  // center there is no valid bound.
  result.margin_ub = path.bound_valid ? -path.certified_lower
                                      : std::numeric_limits<double>::infinity();
  result.message = path.message;
  return result;
}

}  // namespace

ConicOutcome solve_feasibility(const ConicProgram& p, const SolverOptions& opts) {
  p.validate();
  ConicOutcome out;
  if (p.num_scalars == 0) {
    out.witness = Eigen::VectorXd::Zero(0);
    out.margin = p.blocks.empty() ? 0.0 : verified_margin(p, out.witness);
    out.status = out.margin >= -opts.tol_psd ? SolveStatus::feasible : SolveStatus::infeasible;
    return out;
  }
  PhaseOne ph = phase_one(p, opts);
  if (!ph.have_point) {
    out.status = SolveStatus::infeasible;
    out.diagnostic = ph.message;
    if (ph.message != "equality constraints are inconsistent") out.status = SolveStatus::unknown;
    return out;
  }
  out.witness = ph.x;
  out.margin = verified_margin(p, ph.x);
  out.gap = ph.margin_ub - ph.margin_lb;
  if (out.margin >= -opts.tol_psd) {
    out.status = SolveStatus::feasible;
  } else if (ph.margin_ub < -opts.tol_psd) {
    out.status = SolveStatus::infeasible;
    out.diagnostic = "certified max block margin " + std::to_string(ph.margin_ub) +
                     " is negative within the scalar box";
  } else {
    out.status = SolveStatus::unknown;
    out.diagnostic = "max margin straddles zero: [" + std::to_string(ph.margin_lb) + ", " +
                     std::to_string(ph.margin_ub) + "]" +
                     (ph.message.empty() ? "" : " (" + ph.message + ")");
  }
  return out;
}

ConicOutcome solve_min_linear(const ConicProgram& p, const SolverOptions& opts) {
  p.validate();
  if (!p.objective) throw ConfigError("solve_min_linear requires an objective");
  PhaseOne ph = phase_one(p, opts);
  ConicOutcome out;
  if (!ph.have_point) {
    out.status = ph.message == "equality constraints are inconsistent" ? SolveStatus::infeasible
                                                                       : SolveStatus::unknown;
    out.diagnostic = ph.message;
    return out;
  }
  out.witness = ph.x;
  out.margin = verified_margin(p, ph.x);
  if (ph.margin_ub < -opts.tol_psd) {
    out.status = SolveStatus::infeasible;
    out.diagnostic = "certified max block margin " + std::to_string(ph.margin_ub) + " is negative";
    return out;
  }
  if (out.margin < -opts.tol_psd && ph.margin_lb <= 0) {
    out.status = SolveStatus::unknown;
    out.diagnostic = "could not reach the feasible set";
    return out;
  }

  // Feasible sets assembled from Gram identities routinely have empty
  // interior (structurally singular blocks). Path-following runs on a set
  // enlarged by `relax`, which only ever lowers the optimum; the witness is
  // still re-verified against the original blocks.
  const double relax = std::max(0.0, 1e-8 - ph.margin_lb);
  Work w = build_work(p, /*add_margin_scalar=*/false);
  if (relax > 0) {
    for (auto& b : w.blocks)
      b.constant.diagonal().array() += relax;
  }
  Eigen::VectorXd x = ph.x;
  if (!w.interior(x)) {
    out.status = SolveStatus::unknown;
    out.diagnostic = "feasible point is not strictly interior even after relaxation";
    return out;
  }
  PathResult path = follow_path(w, x, opts.tol_obj, opts.max_outer, opts.max_inner);
  out.status = SolveStatus::feasible;
  out.witness = path.x;
  out.margin = verified_margin(p, path.x);
  out.gap = path.gap;
  out.objective_value = p.objective->dot(path.x);
  out.hit_scalar_bound =
      path.x.head(p.num_scalars).lpNorm<Eigen::Infinity>() > 0.99 * p.scalar_bound;
  if (out.hit_scalar_bound)
    out.diagnostic = "optimum presses against the scalar box; problem may be unbounded";
  if (out.margin < -std::max(opts.tol_psd, 2.0 * relax)) {
    out.status = SolveStatus::unknown;
    out.diagnostic = "phase-two witness violates a block beyond tolerance";
  }
  return out;
}

void write_sdpa(const ConicProgram& p, std::ostream& os) {
  p.validate();
  // Our blocks are F0 + sum x_i F_i >= 0; SDPA wants sum x_i F_i - C >= 0.
  std::vector<ConicProgram::Block> blocks = p.blocks;
  for (const auto& e : p.equalities) {
    for (double sign : {1.0, -1.0}) {
      BlockBuilder bb(1);
      bb.add_constant(0, 0, sign * e.constant);
      for (int i = 0; i < e.coeffs.size(); ++i)
        if (e.coeffs(i) != 0.0) bb.add_coeff(i, 0, 0, sign * e.coeffs(i));
      blocks.push_back(bb.finish());
    }
  }
  os << "* sparse SDPA dump (box constraints omitted; |x_i| <= " << p.scalar_bound << ")\n";
  os << p.num_scalars << " = mDIM\n";
  os << blocks.size() << " = nBLOCK\n";
  for (size_t b = 0; b < blocks.size(); ++b) os << blocks[b].side << (b + 1 < blocks.size() ? " " : "");
  os << " = bLOCKsTRUCT\n";
  for (int i = 0; i < p.num_scalars; ++i) {
    const double c = p.objective ? (*p.objective)(i) : 0.0;
    os << c << (i + 1 < p.num_scalars ? " " : "");
  }
  if (p.num_scalars > 0) os << "\n";
  // Matrix 0 holds C = -F0.
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    for (int r = 0; r < blk.side; ++r)
      for (int c = r; c < blk.side; ++c)
        if (blk.constant(r, c) != 0.0)
          os << "0 " << (b + 1) << " " << (r + 1) << " " << (c + 1) << " " << -blk.constant(r, c)
             << "\n";
  }
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    for (const auto& [scalar, trips] : blk.coeffs) {
      for (const auto& t : trips) {
        if (t.row() <= t.col())
          os << (scalar + 1) << " " << (b + 1) << " " << (t.row() + 1) << " " << (t.col() + 1)
             << " " << t.value() << "\n";
      }
    }
  }
}

}  // namespace sgr

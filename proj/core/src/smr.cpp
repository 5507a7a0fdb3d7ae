#include "sgr/smr.hpp"

#include <map>

namespace sgr {

namespace {

// All unordered basis index pairs (a <= b) with phi[a] * phi[b] == m.
std::vector<std::pair<int, int>> gram_positions(const Monomial& m, const PowerVector& phi) {
  std::vector<std::pair<int, int>> positions;
  const unsigned deg = m.degree();
  for (int a = 0; a < phi.size(); ++a) {
    const Monomial& ma = phi[a];
    if (ma.degree() > deg) break;  // canonical order is degree-ascending
    bool divides = true;
    std::vector<unsigned> rest(m.exponents());
    for (int v = 0; v < phi.num_vars(); ++v) {
      if (ma.exponent(v) > rest[v]) {
        divides = false;
        break;
      }
      rest[v] -= ma.exponent(v);
    }
    if (!divides) continue;
    int b = phi.index_of(Monomial(std::move(rest)));
    if (b >= a) positions.emplace_back(a, b);
  }
  return positions;
}

void place_coefficient(Eigen::MatrixXd& base, const Monomial& m, double coeff,
                       const PowerVector& phi) {
  // Even-exponent monomials sit on the diagonal at their square root; all
  // others are split evenly across the off-diagonal positions producing them.
  if (m.all_even()) {
    int d = phi.index_of(m.half());
    if (d >= 0) {
      base(d, d) += coeff;
      return;
    }
  }
  auto positions = gram_positions(m, phi);
  std::vector<std::pair<int, int>> off_diag;
  for (auto& [a, b] : positions)
    if (a != b) off_diag.emplace_back(a, b);
  if (off_diag.empty()) {
    if (positions.empty())
      throw DimensionError("no Gram position for monomial " +
                           Polynomial::term(phi.num_vars(), m, 1.0).to_string());
    // Only a diagonal position exists (square monomial whose root is present
    // was handled above; this covers roots missing from a custom basis).
    auto [a, b] = positions.front();
    base(a, b) += coeff;
    return;
  }
  const double share = coeff / (2.0 * static_cast<double>(off_diag.size()));
  for (auto& [a, b] : off_diag) {
    base(a, b) += share;
    base(b, a) += share;
  }
}

}  // namespace

Eigen::MatrixXd smr_base(const Polynomial& p, const PowerVector& phi) {
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(phi.size(), phi.size());
  for (const auto& [m, c] : p.terms()) place_coefficient(base, m, c, phi);
  return base;
}

SmrForm smr_of(const Polynomial& p) {
  const int half_degree = (p.degree() + 1) / 2;
  PowerVector phi(p.num_vars(), half_degree);
  Eigen::MatrixXd base = smr_base(p, phi);
  return SmrForm{std::move(phi), std::move(base), smr_null_basis(p.num_vars(), half_degree)};
}

Eigen::MatrixXd smr_lift(const Polynomial& p, const PowerVector& phi) {
  if (p.num_vars() != phi.num_vars()) throw DimensionError("smr_lift: variable counts differ");
  if (p.degree() > 2 * phi.max_degree())
    throw DimensionError("smr_lift: polynomial degree " + std::to_string(p.degree()) +
                         " exceeds basis capacity " + std::to_string(2 * phi.max_degree()));
  return smr_base(p, phi);
}

std::vector<Eigen::SparseMatrix<double>> smr_null_basis(const PowerVector& phi) {
  const int l = phi.size();
  // Group Gram positions by the product monomial they generate.
  std::map<Monomial, std::vector<std::pair<int, int>>, GradedLexLess> groups;
  for (int a = 0; a < l; ++a) {
    for (int b = a; b < l; ++b) {
      groups[phi[a].times(phi[b])].emplace_back(a, b);
    }
  }
  std::vector<Eigen::SparseMatrix<double>> basis;
  for (const auto& [m, positions] : groups) {
    if (positions.size() < 2) continue;
    const auto& [a0, b0] = positions.front();
    const double w0 = (a0 == b0) ? 1.0 : 2.0;
    for (size_t t = 1; t < positions.size(); ++t) {
      const auto& [a, b] = positions[t];
      const double w = (a == b) ? 1.0 : 2.0;
      // w0 * E(a,b) - w * E(a0,b0) annihilates phi as a quadratic form and the
      // integer weights reproduce the familiar one-variable quartic example.
      Eigen::SparseMatrix<double> N(l, l);
      std::vector<Eigen::Triplet<double>> trips;
      if (a == b) {
        trips.emplace_back(a, a, w0);
      } else {
        trips.emplace_back(a, b, w0);
        trips.emplace_back(b, a, w0);
      }
      if (a0 == b0) {
        trips.emplace_back(a0, a0, -w);
      } else {
        trips.emplace_back(a0, b0, -w);
        trips.emplace_back(b0, a0, -w);
      }
      N.setFromTriplets(trips.begin(), trips.end());
      basis.push_back(std::move(N));
    }
  }
  return basis;
}

std::vector<Eigen::SparseMatrix<double>> smr_null_basis(int num_vars, int half_degree) {
  return smr_null_basis(PowerVector(num_vars, half_degree));
}

Polynomial gram_to_polynomial(const Eigen::MatrixXd& M, const PowerVector& phi) {
  if (M.rows() != phi.size() || M.cols() != phi.size())
    throw DimensionError("gram_to_polynomial: matrix side does not match power vector");
  Polynomial p(phi.num_vars());
  for (int a = 0; a < phi.size(); ++a) {
    for (int b = a; b < phi.size(); ++b) {
      const double v = (a == b) ? M(a, a) : M(a, b) + M(b, a);
      if (v != 0.0) p.add_term(phi[a].times(phi[b]), v);
    }
  }
  return p;
}

Polynomial gram_to_polynomial(const Eigen::SparseMatrix<double>& M, const PowerVector& phi) {
  Polynomial p(phi.num_vars());
  for (int k = 0; k < M.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it) {
      if (it.value() != 0.0) p.add_term(phi[it.row()].times(phi[it.col()]), it.value());
    }
  }
  return p;
}

}  // namespace sgr

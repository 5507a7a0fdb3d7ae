#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sgr/power_vector.hpp"

namespace sgr {

/// Square matrix representation of a polynomial: phi^T * (base + N(delta)) * phi
/// reconstructs the source for any combination N(delta) of the null-space
/// basis matrices.
struct SmrForm {
  PowerVector phi;
  Eigen::MatrixXd base;
  std::vector<Eigen::SparseMatrix<double>> null_basis;
};

/// Gram matrix of `p` over the complete power vector of half-degree
/// ceil(deg(p)/2), built with the deterministic splitting rule:
/// a monomial with all-even exponents is placed entirely on the diagonal at
/// its square root; any other monomial is split evenly across the
/// off-diagonal positions that produce it.
Eigen::MatrixXd smr_base(const Polynomial& p, const PowerVector& phi);

/// smr_base over the canonical basis plus the full null-space basis.
SmrForm smr_of(const Polynomial& p);

/// Same splitting rule against a caller-supplied power vector. Throws
/// DimensionError when deg(p) exceeds 2 * phi.max_degree().
Eigen::MatrixXd smr_lift(const Polynomial& p, const PowerVector& phi);

/// Basis of the space of symmetric matrices N with phi^T N phi == 0,
/// one sparse matrix per free parameter; size equals
/// smr_dimensions(n, d).theta.
std::vector<Eigen::SparseMatrix<double>> smr_null_basis(int num_vars, int half_degree);
std::vector<Eigen::SparseMatrix<double>> smr_null_basis(const PowerVector& phi);

/// Expands phi^T M phi back into a polynomial (dense or sparse M).
Polynomial gram_to_polynomial(const Eigen::MatrixXd& M, const PowerVector& phi);
Polynomial gram_to_polynomial(const Eigen::SparseMatrix<double>& M, const PowerVector& phi);

}  // namespace sgr

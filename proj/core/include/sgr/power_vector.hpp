#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "sgr/polynomial.hpp"

namespace sgr {

/// Sizes of the Gram machinery for n variables at half-degree d:
/// `l` is the power vector length C(n+d, d) and `theta` the dimension of the
/// space of symmetric matrices annihilating the power vector as a quadratic
/// form, l(l+1)/2 - l(n, 2d).
struct SmrDimensions {
  std::uint64_t l = 0;
  std::uint64_t theta = 0;
};

SmrDimensions smr_dimensions(int num_vars, int half_degree);

/// All monomials of degree <= max_degree in the canonical graded-lex order.
class PowerVector {
 public:
  PowerVector(int num_vars, int max_degree);

  int num_vars() const { return num_vars_; }
  int max_degree() const { return max_degree_; }
  int size() const { return static_cast<int>(monomials_.size()); }
  const Monomial& operator[](int i) const { return monomials_[i]; }
  const std::vector<Monomial>& monomials() const { return monomials_; }

  /// Index of a monomial, or -1 when it is not in the vector.
  int index_of(const Monomial& m) const;

  /// Numeric evaluation of every entry at a point.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& point) const;

 private:
  int num_vars_;
  int max_degree_;
  std::vector<Monomial> monomials_;
  std::map<Monomial, int, GradedLexLess> index_;
};

}  // namespace sgr

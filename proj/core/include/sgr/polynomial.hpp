#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgr/errors.hpp"

namespace sgr {

/// Exponent vector of a single monomial. The length always equals the ambient
/// variable count of the polynomial that owns it.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(std::vector<unsigned> exponents) : exps_(std::move(exponents)) {}
  static Monomial unit(int num_vars) { return Monomial(std::vector<unsigned>(num_vars, 0)); }
  /// x_var^power as a monomial in num_vars variables.
  static Monomial var_power(int num_vars, int var, unsigned power);

  int num_vars() const { return static_cast<int>(exps_.size()); }
  unsigned degree() const;
  unsigned exponent(int var) const { return exps_[var]; }
  const std::vector<unsigned>& exponents() const { return exps_; }
  bool is_unit() const { return degree() == 0; }
  /// True when every exponent is even (the monomial is a perfect square).
  bool all_even() const;
  /// Component-wise halved exponents; only valid when all_even().
  Monomial half() const;
  Monomial times(const Monomial& other) const;

  double evaluate(std::span<const double> point) const;

  bool operator==(const Monomial& other) const { return exps_ == other.exps_; }
  bool operator!=(const Monomial& other) const { return !(*this == other); }

 private:
  std::vector<unsigned> exps_;
};

/// Canonical monomial order used everywhere: graded (total degree ascending),
/// ties broken lexicographically with higher powers of earlier variables
/// first. For one variable this reads 1, x, x^2, ...; for two variables
/// 1, x1, x2, x1^2, x1*x2, x2^2, ...
struct GradedLexLess {
  bool operator()(const Monomial& a, const Monomial& b) const;
};

/// Sparse multivariate polynomial with double coefficients over variables
/// x1..xn. Terms with zero coefficient are never stored. Immutable in spirit:
/// all operations return new values.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double, GradedLexLess>;

  explicit Polynomial(int num_vars);
  Polynomial(int num_vars, double constant);

  static Polynomial zero(int num_vars) { return Polynomial(num_vars); }
  static Polynomial constant(int num_vars, double value) { return Polynomial(num_vars, value); }
  /// The monomial x_var (1-based grammar name is "x<var+1>"; var is 0-based).
  static Polynomial variable(int num_vars, int var);
  static Polynomial term(int num_vars, const Monomial& m, double coeff);

  int num_vars() const { return num_vars_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int degree() const;
  double coefficient(const Monomial& m) const;
  double max_abs_coefficient() const;

  Polynomial operator+(const Polynomial& other) const;
  Polynomial operator-(const Polynomial& other) const;
  Polynomial operator-() const;
  Polynomial operator*(const Polynomial& other) const;
  Polynomial operator*(double scalar) const;
  Polynomial& operator+=(const Polynomial& other);
  Polynomial& operator-=(const Polynomial& other);

  Polynomial pow(unsigned exponent) const;
  double evaluate(std::span<const double> point) const;
  double evaluate(const Eigen::VectorXd& point) const;
  /// Partial derivatives, one polynomial per variable.
  std::vector<Polynomial> gradient() const;
  Polynomial derivative(int var) const;

  /// Composes with the affine substitution x = A*y + b. A is num_vars x k,
  /// b has num_vars entries; the result is a polynomial in k variables.
  Polynomial substitute_affine(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) const;

  /// Coefficient-wise comparison under the documented numeric policy:
  /// absolute tolerance `tol` scaled by the larger max coefficient magnitude.
  bool almost_equal(const Polynomial& other, double tol = 1e-9) const;

  /// Renders in the text grammar, e.g. "3*x1^4 + 4*x1^3 + 6*x1^2 + 7".
  std::string to_string() const;
  /// Parses the text grammar. Variables are x1..x<num_vars>; whitespace is
  /// ignored; terms are joined by + and -.
  static Polynomial parse(const std::string& text, int num_vars);

  void add_term(const Monomial& m, double coeff);

 private:
  int num_vars_;
  TermMap terms_;
};

inline Polynomial operator*(double scalar, const Polynomial& p) { return p * scalar; }

}  // namespace sgr

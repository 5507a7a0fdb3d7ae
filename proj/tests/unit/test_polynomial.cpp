#include <doctest.h>

#include "../helpers.hpp"
#include "sgr/polynomial.hpp"

using namespace sgr;

TEST_CASE("parse and print the reference quartic") {
  Polynomial p = Polynomial::parse("3*x1^4 + 4*x1^3 + 6*x1^2 + 7", 1);
  CHECK(p.degree() == 4);
  CHECK(p.coefficient(Monomial::var_power(1, 0, 4)) == 3.0);
  CHECK(p.coefficient(Monomial::var_power(1, 0, 3)) == 4.0);
  CHECK(p.coefficient(Monomial::unit(1)) == 7.0);
  CHECK(Polynomial::parse(p.to_string(), 1).almost_equal(p, 1e-14));
}

TEST_CASE("grammar corner cases") {
  CHECK(Polynomial::parse("  3*x1 - x2 ", 2).coefficient(Monomial::var_power(2, 1, 1)) == -1.0);
  CHECK(Polynomial::parse("2.5e-3*x1^2", 1).coefficient(Monomial::var_power(1, 0, 2)) ==
        doctest::Approx(2.5e-3));
  CHECK(Polynomial::parse("-x1", 1).coefficient(Monomial::var_power(1, 0, 1)) == -1.0);
  CHECK(Polynomial::parse("x1*x2", 2).coefficient(
            Monomial(std::vector<unsigned>{1, 1})) == 1.0);
  // Cancelling terms leave the zero polynomial.
  CHECK(Polynomial::parse("x1 - x1", 1).is_zero());
  CHECK_THROWS_AS(Polynomial::parse("x3", 2), ParseError);
  CHECK_THROWS_AS(Polynomial::parse("x1 +", 1), ParseError);
  CHECK_THROWS_AS(Polynomial::parse("", 1), ParseError);
  CHECK_THROWS_AS(Polynomial::parse("x1^-2", 1), ParseError);
}

TEST_CASE("evaluate at the origin picks the constant") {
  Polynomial p = Polynomial::parse("3*x1^4 + 4*x1^3 + 6*x1^2 + 7", 1);
  double zero = 0.0;
  CHECK(p.evaluate(std::span<const double>(&zero, 1)) == 7.0);
}

TEST_CASE("gradient of x1^2 x2") {
  Polynomial p(2);
  p.add_term(Monomial(std::vector<unsigned>{2, 1}), 1.0);
  auto g = p.gradient();
  REQUIRE(g.size() == 2);
  Polynomial expected0(2);
  expected0.add_term(Monomial(std::vector<unsigned>{1, 1}), 2.0);
  Polynomial expected1(2);
  expected1.add_term(Monomial(std::vector<unsigned>{2, 0}), 1.0);
  CHECK(g[0].almost_equal(expected0));
  CHECK(g[1].almost_equal(expected1));
}

TEST_CASE("affine substitution shifts a square") {
  Polynomial p(1);
  p.add_term(Monomial::var_power(1, 0, 2), 1.0);  // x^2
  Eigen::MatrixXd A(1, 1);
  A << 1.0;
  Eigen::VectorXd b(1);
  b << 1.0;
  Polynomial q = p.substitute_affine(A, b);  // (y + 1)^2
  CHECK(q.almost_equal(Polynomial::parse("x1^2 + 2*x1 + 1", 1)));
}

TEST_CASE("affine substitution can change dimension") {
  // p(x1, x2) = x1 * x2 with x1 = u + v, x2 = u - v gives u^2 - v^2.
  Polynomial p(2);
  p.add_term(Monomial(std::vector<unsigned>{1, 1}), 1.0);
  Eigen::MatrixXd A(2, 2);
  A << 1, 1, 1, -1;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2);
  CHECK(p.substitute_affine(A, b).almost_equal(Polynomial::parse("x1^2 - x2^2", 2)));
}

TEST_CASE("gradient matches central finite differences on random polynomials") {
  testing::Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = rng.integer(1, 4);
    Polynomial p(n);
    const int terms = rng.integer(1, 10);
    for (int t = 0; t < terms; ++t) {
      std::vector<unsigned> exps(n);
      for (int v = 0; v < n; ++v) exps[v] = static_cast<unsigned>(rng.integer(0, 3));
      p.add_term(Monomial(std::move(exps)), rng.uniform(-3, 3));
    }
    std::vector<double> x(n);
    for (int v = 0; v < n; ++v) x[v] = rng.uniform(-1, 1);
    auto grad = p.gradient();
    const double h = 1e-5;
    for (int v = 0; v < n; ++v) {
      std::vector<double> hi(x), lo(x);
      hi[v] += h;
      lo[v] -= h;
      const double fd = (p.evaluate(std::span<const double>(hi.data(), hi.size())) -
                         p.evaluate(std::span<const double>(lo.data(), lo.size()))) /
                        (2 * h);
      const double exact = grad[v].evaluate(std::span<const double>(x.data(), x.size()));
      CHECK(std::abs(fd - exact) <= 1e-6 * std::max(1.0, std::abs(exact)));
    }
  }
}

TEST_CASE("arithmetic dimension checks") {
  Polynomial a(2), b(3);
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(a * b, DimensionError);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(a.substitute_affine(A, Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("canonical monomial order is graded with earlier variables first") {
  GradedLexLess less;
  const Monomial one = Monomial::unit(2);
  const Monomial x1 = Monomial::var_power(2, 0, 1);
  const Monomial x2 = Monomial::var_power(2, 1, 1);
  const Monomial x1x2 = Monomial(std::vector<unsigned>{1, 1});
  CHECK(less(one, x1));
  CHECK(less(x1, x2));
  CHECK(less(x2, x1x2));
  CHECK(!less(x1, x1));
}

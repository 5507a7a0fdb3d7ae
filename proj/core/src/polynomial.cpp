#include "sgr/polynomial.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace sgr {

Monomial Monomial::var_power(int num_vars, int var, unsigned power) {
  if (var < 0 || var >= num_vars) throw DimensionError("monomial variable index out of range");
  std::vector<unsigned> e(num_vars, 0);
  e[var] = power;
  return Monomial(std::move(e));
}

unsigned Monomial::degree() const {
  unsigned d = 0;
  for (unsigned e : exps_) d += e;
  return d;
}

bool Monomial::all_even() const {
  for (unsigned e : exps_)
    if (e % 2 != 0) return false;
  return true;
}

Monomial Monomial::half() const {
  std::vector<unsigned> e(exps_);
  for (unsigned& v : e) v /= 2;
  return Monomial(std::move(e));
}

Monomial Monomial::times(const Monomial& other) const {
  if (exps_.size() != other.exps_.size()) throw DimensionError("monomial product: variable counts differ");
  std::vector<unsigned> e(exps_);
  for (size_t i = 0; i < e.size(); ++i) e[i] += other.exps_[i];
  return Monomial(std::move(e));
}

double Monomial::evaluate(std::span<const double> point) const {
  if (point.size() != exps_.size()) throw DimensionError("monomial evaluate: point dimension mismatch");
  double v = 1.0;
  for (size_t i = 0; i < exps_.size(); ++i) {
    unsigned e = exps_[i];
    if (e == 0) continue;
    double base = point[i];
    double acc = 1.0;
    while (e > 0) {  // fast exponentiation
      if (e & 1u) acc *= base;
      base *= base;
      e >>= 1u;
    }
    v *= acc;
  }
  return v;
}

bool GradedLexLess::operator()(const Monomial& a, const Monomial& b) const {
  const unsigned da = a.degree(), db = b.degree();
  if (da != db) return da < db;
  const auto& ea = a.exponents();
  const auto& eb = b.exponents();
  for (size_t i = 0; i < ea.size(); ++i) {
    if (ea[i] != eb[i]) return ea[i] > eb[i];
  }
  return false;
}

Polynomial::Polynomial(int num_vars) : num_vars_(num_vars) {
  if (num_vars < 1) throw DimensionError("polynomial needs at least one variable");
}

Polynomial::Polynomial(int num_vars, double constant) : Polynomial(num_vars) {
  add_term(Monomial::unit(num_vars), constant);
}

Polynomial Polynomial::variable(int num_vars, int var) {
  return term(num_vars, Monomial::var_power(num_vars, var, 1), 1.0);
}

Polynomial Polynomial::term(int num_vars, const Monomial& m, double coeff) {
  Polynomial p(num_vars);
  p.add_term(m, coeff);
  return p;
}

void Polynomial::add_term(const Monomial& m, double coeff) {
  if (m.num_vars() != num_vars_) throw DimensionError("term variable count mismatch");
  if (coeff == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m, coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0.0) terms_.erase(it);
  }
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, static_cast<int>(m.degree()));
  return d;
}

double Polynomial::coefficient(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::max_abs_coefficient() const {
  double v = 0.0;
  for (const auto& [m, c] : terms_) v = std::max(v, std::abs(c));
  return v;
}

Polynomial Polynomial::operator+(const Polynomial& other) const {
  Polynomial r(*this);
  r += other;
  return r;
}

Polynomial& Polynomial::operator+=(const Polynomial& other) {
  if (other.num_vars_ != num_vars_) throw DimensionError("polynomial add: variable counts differ");
  for (const auto& [m, c] : other.terms_) add_term(m, c);
  return *this;
}

Polynomial Polynomial::operator-(const Polynomial& other) const {
  Polynomial r(*this);
  r -= other;
  return r;
}

Polynomial& Polynomial::operator-=(const Polynomial& other) {
  if (other.num_vars_ != num_vars_) throw DimensionError("polynomial subtract: variable counts differ");
  for (const auto& [m, c] : other.terms_) add_term(m, -c);
  return *this;
}

Polynomial Polynomial::operator-() const { return (*this) * -1.0; }

Polynomial Polynomial::operator*(const Polynomial& other) const {
  if (other.num_vars_ != num_vars_) throw DimensionError("polynomial multiply: variable counts differ");
  Polynomial r(num_vars_);
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : other.terms_) {
      r.add_term(ma.times(mb), ca * cb);
    }
  }
  return r;
}

Polynomial Polynomial::operator*(double scalar) const {
  Polynomial r(num_vars_);
  if (scalar == 0.0) return r;
  for (const auto& [m, c] : terms_) r.terms_.emplace(m, c * scalar);
  return r;
}

Polynomial Polynomial::pow(unsigned exponent) const {
  Polynomial acc = Polynomial::constant(num_vars_, 1.0);
  Polynomial base(*this);
  while (exponent > 0) {
    if (exponent & 1u) acc = acc * base;
    exponent >>= 1u;
    if (exponent > 0) base = base * base;
  }
  return acc;
}

double Polynomial::evaluate(std::span<const double> point) const {
  if (static_cast<int>(point.size()) != num_vars_) throw DimensionError("evaluate: point dimension mismatch");
  double v = 0.0;
  for (const auto& [m, c] : terms_) v += c * m.evaluate(point);
  return v;
}

double Polynomial::evaluate(const Eigen::VectorXd& point) const {
  return evaluate(std::span<const double>(point.data(), static_cast<size_t>(point.size())));
}

std::vector<Polynomial> Polynomial::gradient() const {
  std::vector<Polynomial> g;
  g.reserve(num_vars_);
  for (int v = 0; v < num_vars_; ++v) g.push_back(derivative(v));
  return g;
}

Polynomial Polynomial::derivative(int var) const {
  if (var < 0 || var >= num_vars_) throw DimensionError("derivative variable index out of range");
  Polynomial r(num_vars_);
  for (const auto& [m, c] : terms_) {
    unsigned e = m.exponent(var);
    if (e == 0) continue;
    std::vector<unsigned> exps = m.exponents();
    exps[var] -= 1;
    r.add_term(Monomial(std::move(exps)), c * static_cast<double>(e));
  }
  return r;
}

Polynomial Polynomial::substitute_affine(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) const {
  if (A.rows() != num_vars_ || b.size() != num_vars_)
    throw DimensionError("substitute_affine: A/b rows must match variable count");
  const int k = static_cast<int>(A.cols());

  // Linear image of each source variable.
  std::vector<Polynomial> images;
  images.reserve(num_vars_);
  for (int v = 0; v < num_vars_; ++v) {
    Polynomial lin(k, b(v));
    for (int j = 0; j < k; ++j) {
      if (A(v, j) != 0.0) lin += Polynomial::variable(k, j) * A(v, j);
    }
    images.push_back(std::move(lin));
  }

  // Memoized powers keep repeated exponents cheap.
  std::vector<std::vector<Polynomial>> powers(num_vars_);
  auto power_of = [&](int v, unsigned e) -> const Polynomial& {
    auto& cache = powers[v];
    if (cache.empty()) cache.push_back(Polynomial::constant(k, 1.0));
    while (cache.size() <= e) cache.push_back(cache.back() * images[v]);
    return cache[e];
  };

  Polynomial r(k);
  for (const auto& [m, c] : terms_) {
    Polynomial t = Polynomial::constant(k, c);
    for (int v = 0; v < num_vars_; ++v) {
      unsigned e = m.exponent(v);
      if (e > 0) t = t * power_of(v, e);
    }
    r += t;
  }
  return r;
}

bool Polynomial::almost_equal(const Polynomial& other, double tol) const {
  if (other.num_vars_ != num_vars_) return false;
  const double scale = std::max({1.0, max_abs_coefficient(), other.max_abs_coefficient()});
  Polynomial diff = (*this) - other;
  return diff.max_abs_coefficient() <= tol * scale;
}

namespace {

void append_coefficient(std::ostringstream& out, double c) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", c);
  out << buf;
}

}  // namespace

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream out;
  bool first = true;
  // Highest degree first reads naturally.
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const auto& [m, c] = *it;
    double coeff = c;
    if (first) {
      if (coeff < 0) {
        out << "-";
        coeff = -coeff;
      }
    } else {
      out << (coeff < 0 ? " - " : " + ");
      coeff = std::abs(coeff);
    }
    first = false;
    bool printed_coeff = false;
    if (m.is_unit() || coeff != 1.0) {
      append_coefficient(out, coeff);
      printed_coeff = true;
    }
    bool printed_var = false;
    for (int v = 0; v < num_vars_; ++v) {
      unsigned e = m.exponent(v);
      if (e == 0) continue;
      if (printed_coeff || printed_var) out << "*";
      out << "x" << (v + 1);
      if (e > 1) out << "^" << e;
      printed_var = true;
    }
  }
  return out.str();
}

namespace {

struct Lexer {
  const std::string& s;
  size_t i = 0;
  explicit Lexer(const std::string& text) : s(text) {}
  void skip_ws() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool done() {
    skip_ws();
    return i >= s.size();
  }
  char peek() {
    skip_ws();
    return i < s.size() ? s[i] : '\0';
  }
  char take() {
    skip_ws();
    return s[i++];
  }
};

double parse_number(Lexer& lx) {
  lx.skip_ws();
  size_t start = lx.i;
  size_t end = start;
  const std::string& s = lx.s;
  auto is_digit = [&](size_t p) { return p < s.size() && std::isdigit(static_cast<unsigned char>(s[p])); };
  while (is_digit(end)) ++end;
  if (end < s.size() && s[end] == '.') {
    ++end;
    while (is_digit(end)) ++end;
  }
  if (end < s.size() && (s[end] == 'e' || s[end] == 'E')) {
    size_t mark = end + 1;
    if (mark < s.size() && (s[mark] == '+' || s[mark] == '-')) ++mark;
    if (mark < s.size() && std::isdigit(static_cast<unsigned char>(s[mark]))) {
      end = mark;
      while (is_digit(end)) ++end;
    }
  }
  if (end == start) throw ParseError("expected a number at position " + std::to_string(start));
  lx.i = end;
  return std::stod(s.substr(start, end - start));
}

// factor := number | x<i>[^<k>]
void parse_factor(Lexer& lx, int num_vars, double& coeff, std::vector<unsigned>& exps) {
  char c = lx.peek();
  if (c == 'x' || c == 'X') {
    lx.take();
    if (!std::isdigit(static_cast<unsigned char>(lx.peek())))
      throw ParseError("expected variable index after 'x'");
    int idx = static_cast<int>(parse_number(lx));
    if (idx < 1 || idx > num_vars)
      throw ParseError("variable x" + std::to_string(idx) + " out of range (have " +
                       std::to_string(num_vars) + " variables)");
    unsigned power = 1;
    if (lx.peek() == '^') {
      lx.take();
      double p = parse_number(lx);
      if (p < 0 || p != std::floor(p)) throw ParseError("exponents must be non-negative integers");
      power = static_cast<unsigned>(p);
    }
    exps[idx - 1] += power;
  } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
    coeff *= parse_number(lx);
  } else {
    throw ParseError(std::string("unexpected character '") + c + "' in polynomial");
  }
}

}  // namespace

Polynomial Polynomial::parse(const std::string& text, int num_vars) {
  Polynomial result(num_vars);
  Lexer lx(text);
  if (lx.done()) throw ParseError("empty polynomial text");
  bool expect_term = true;
  double sign = 1.0;
  while (!lx.done()) {
    char c = lx.peek();
    if (c == '+' || c == '-') {
      lx.take();
      if (expect_term) {
        sign *= (c == '-') ? -1.0 : 1.0;
      } else {
        sign = (c == '-') ? -1.0 : 1.0;
        expect_term = true;
      }
      continue;
    }
    if (!expect_term) throw ParseError("expected '+' or '-' between terms");
    // term := factor (* factor)*
    double coeff = sign;
    std::vector<unsigned> exps(num_vars, 0);
    parse_factor(lx, num_vars, coeff, exps);
    while (lx.peek() == '*') {
      lx.take();
      parse_factor(lx, num_vars, coeff, exps);
    }
    result.add_term(Monomial(std::move(exps)), coeff);
    expect_term = false;
    sign = 1.0;
  }
  if (expect_term) throw ParseError("dangling sign at end of polynomial");
  return result;
}

}  // namespace sgr

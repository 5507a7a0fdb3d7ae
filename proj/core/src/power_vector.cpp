#include "sgr/power_vector.hpp"

#include <limits>

namespace sgr {

namespace {

std::uint64_t checked_binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    std::uint64_t num = n - k + i;
    // r * num / i is integral at every step; guard the multiply.
    if (r > std::numeric_limits<std::uint64_t>::max() / num)
      throw CapacityError("binomial overflow computing power vector length");
    r = r * num / i;
  }
  return r;
}

void enumerate(int var, int remaining_degree, std::vector<unsigned>& current,
               std::vector<Monomial>& out) {
  if (var == static_cast<int>(current.size())) {
    out.emplace_back(current);
    return;
  }
  // Higher powers of earlier variables first matches GradedLexLess within a
  // degree block when driven by ascending total degree (see below).
  for (int e = remaining_degree; e >= 0; --e) {
    current[var] = static_cast<unsigned>(e);
    enumerate(var + 1, remaining_degree - e, current, out);
  }
  current[var] = 0;
}

}  // namespace

SmrDimensions smr_dimensions(int num_vars, int half_degree) {
  if (num_vars < 1) throw DimensionError("smr_dimensions: need at least one variable");
  if (half_degree < 0) throw DimensionError("smr_dimensions: negative degree");
  const std::uint64_t n = static_cast<std::uint64_t>(num_vars);
  const std::uint64_t d = static_cast<std::uint64_t>(half_degree);
  SmrDimensions dims;
  dims.l = checked_binomial(n + d, d);
  const std::uint64_t l2 = checked_binomial(n + 2 * d, 2 * d);
  if (dims.l > (1u << 20))
    throw CapacityError("power vector length " + std::to_string(dims.l) + " exceeds capacity");
  dims.theta = dims.l * (dims.l + 1) / 2 - l2;
  return dims;
}

PowerVector::PowerVector(int num_vars, int max_degree)
    : num_vars_(num_vars), max_degree_(max_degree) {
  const SmrDimensions dims = smr_dimensions(num_vars, max_degree);
  monomials_.reserve(dims.l);
  std::vector<unsigned> current(num_vars, 0);
  for (int deg = 0; deg <= max_degree; ++deg) {
    std::vector<Monomial> block;
    enumerate(0, deg, current, block);
    // enumerate() emits a fixed-degree block already in canonical order except
    // that it walks total degree implicitly; keep only the exact-degree rows.
    for (auto& m : block) {
      if (m.degree() == static_cast<unsigned>(deg)) monomials_.push_back(std::move(m));
    }
  }
  for (int i = 0; i < static_cast<int>(monomials_.size()); ++i) index_[monomials_[i]] = i;
}

int PowerVector::index_of(const Monomial& m) const {
  auto it = index_.find(m);
  return it == index_.end() ? -1 : it->second;
}

Eigen::VectorXd PowerVector::evaluate(const Eigen::VectorXd& point) const {
  Eigen::VectorXd v(size());
  std::span<const double> p(point.data(), static_cast<size_t>(point.size()));
  for (int i = 0; i < size(); ++i) v(i) = monomials_[i].evaluate(p);
  return v;
}

}  // namespace sgr

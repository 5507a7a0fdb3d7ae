#include "sgr/barrier.hpp"

#include <cmath>

namespace sgr {

void BarrierShape::validate_even() const {
  if (poly.num_vars() != 1) throw ConfigError("barrier shape must be univariate in z");
  for (const auto& [m, c] : poly.terms()) {
    if (m.exponent(0) % 2 != 0) throw ConfigError("barrier shape must use even powers of z only");
  }
}

double BarrierShape::slope(double z) const {
  return poly.derivative(0).evaluate(std::span<const double>(&z, 1));
}

Polynomial BarrierShape::radial_slope_in_w() const {
  validate_even();
  // d/dz [a_k z^{2k}] / z = 2k a_k z^{2k-2} = 2k a_k w^{k-1}.
  Polynomial r(1);
  for (const auto& [m, c] : poly.terms()) {
    const unsigned e = m.exponent(0);
    if (e == 0) continue;
    r.add_term(Monomial::var_power(1, 0, e / 2 - 1), c * static_cast<double>(e));
  }
  return r;
}

Polynomial BarrierShape::poly_in_w() const {
  validate_even();
  Polynomial r(1);
  for (const auto& [m, c] : poly.terms()) {
    r.add_term(Monomial::var_power(1, 0, m.exponent(0) / 2), c);
  }
  return r;
}

BarrierShape quartic_connectivity(double mu1, double r_hat) {
  if (r_hat <= 0) throw ConfigError("connectivity barrier: r_s - ||tau_ij|| must be positive");
  BarrierShape s;
  s.kind = BarrierKind::connectivity;
  s.mu = mu1;
  s.poly = Polynomial::term(1, Monomial::var_power(1, 0, 4), mu1 / std::pow(r_hat, 4));
  return s;
}

BarrierShape ring_collision(double mu2, double d_hat, double ring) {
  const double denom = d_hat * d_hat - ring * ring;
  if (denom == 0) throw ConfigError("collision barrier: ring radius coincides with d_hat");
  const double c2 = mu2 / (denom * denom);
  BarrierShape s;
  s.kind = BarrierKind::collision;
  s.mu = mu2;
  // c2 (z^2 - ring^2)^2 = c2 z^4 - 2 c2 ring^2 z^2 + c2 ring^4
  s.poly = Polynomial(1);
  s.poly.add_term(Monomial::var_power(1, 0, 4), c2);
  s.poly.add_term(Monomial::var_power(1, 0, 2), -2.0 * c2 * ring * ring);
  s.poly.add_term(Monomial::unit(1), c2 * std::pow(ring, 4));
  return s;
}

double connectivity_interval_end(const Geometry& geo, double tau_norm) {
  return geo.r_s - tau_norm;
}

double collision_interval_start(const Geometry& geo, double tau_norm) {
  return geo.d_s + tau_norm;
}

BarrierCheck validate_barrier_numeric(const BarrierShape& shape, const Geometry& geo,
                                      double tau_norm, int grid_points, double z_max_override) {
  shape.validate_even();
  BarrierCheck out;
  auto fail = [&](const std::string& reason, double z) {
    out.pass = false;
    out.reason = reason;
    out.witness_z = z;
    return out;
  };
  const double tol = 1e-9 * std::max(1.0, shape.poly.max_abs_coefficient());

  if (shape.kind == BarrierKind::connectivity) {
    const double r_hat = connectivity_interval_end(geo, tau_norm);
    if (r_hat <= 0) throw ConfigError("connectivity barrier interval is empty (r_s <= ||tau_ij||)");
    if (std::abs(shape.value(0.0)) > tol) return fail("value at 0 must vanish", 0.0);
    if (std::abs(shape.value(r_hat) - shape.mu) > 1e-6 * std::max(1.0, shape.mu))
      return fail("boundary value at r_hat must equal mu1", r_hat);
    // Strict slope positivity cannot be resolved numerically near z = 0 (the
    // reference quartic has slope ~ z^3 there); the grid enforces the
    // non-strict versions plus monotone growth up to the boundary value.
    const Polynomial ratio = shape.radial_slope_in_w();
    double prev_value = 0.0;
    for (int k = 0; k <= grid_points; ++k) {
      const double z = r_hat * static_cast<double>(k) / grid_points;
      const double v = shape.value(z);
      if (v < -tol) return fail("shape must be non-negative on [0, r_hat]", z);
      if (v < prev_value - tol) return fail("shape must be non-decreasing on [0, r_hat]", z);
      prev_value = std::max(prev_value, v);
      if (shape.slope(z) < -tol) return fail("slope must be non-negative on [0, r_hat]", z);
      const double w = z * z;
      if (ratio.evaluate(std::span<const double>(&w, 1)) < -tol)
        return fail("radial slope (dY/dz)/z must stay non-negative (and bounded) near 0", z);
    }
    if (!(shape.value(r_hat) > 0)) return fail("shape must reach a positive boundary value", r_hat);
  } else {
    const double d_hat = collision_interval_start(geo, tau_norm);
    const double z_max = z_max_override > 0 ? z_max_override : geo.r_z + tau_norm;
    if (z_max <= d_hat) throw ConfigError("collision barrier interval [d_hat, z_max] is empty");
    if (std::abs(shape.value(d_hat) - shape.mu) > 1e-6 * std::max(1.0, shape.mu))
      return fail("boundary value at d_hat must equal mu2", d_hat);
    for (int k = 0; k <= grid_points; ++k) {
      const double z = d_hat + (z_max - d_hat) * static_cast<double>(k) / grid_points;
      if (shape.value(z) < -tol) return fail("shape must be non-negative on [d_hat, z_max]", z);
      if (shape.slope(z) >= -tol) return fail("slope must be negative on [d_hat, z_max]", z);
    }
  }
  return out;
}

}  // namespace sgr

#pragma once

#include <optional>
#include <string>

#include "sgr/graph.hpp"
#include "sgr/polynomial.hpp"

namespace sgr {

enum class BarrierKind { connectivity, collision };

/// An even univariate polynomial in z = ||y_ij|| together with its boundary
/// value. Evenness keeps the induced gradient polynomial in y_ij: for
/// shape(z) = sum a_k z^{2k} the vector gradient is radial_slope(z^2) * y_ij.
struct BarrierShape {
  BarrierKind kind = BarrierKind::connectivity;
  Polynomial poly = Polynomial(1);  ///< in z, even powers only
  double mu = 0;                    ///< boundary value mu1 or mu2

  /// Throws ConfigError when an odd power appears.
  void validate_even() const;

  double value(double z) const { return poly.evaluate(std::span<const double>(&z, 1)); }
  double slope(double z) const;

  /// (d shape / dz)(z) / z as a polynomial in w = z^2.
  Polynomial radial_slope_in_w() const;
  /// The shape itself as a polynomial in w = z^2.
  Polynomial poly_in_w() const;
};

/// Connectivity shape c1 * z^4 with c1 = mu1 / r_hat^4.
BarrierShape quartic_connectivity(double mu1, double r_hat);
/// Collision shape c2 * (z^2 - ring^2)^2 with c2 = mu2 / (d_hat^2 - ring^2)^2.
BarrierShape ring_collision(double mu2, double d_hat, double ring);

struct BarrierCheck {
  bool pass = true;
  std::string reason;               ///< first violated condition
  std::optional<double> witness_z;  ///< where it failed
};

/// Dense grid check (default 10^4 points) of the shape conditions on its
/// interval: sign, boundary values, monotonicity and boundedness of the
/// radial slope near zero. Returns the first violating point.
BarrierCheck validate_barrier_numeric(const BarrierShape& shape, const Geometry& geo,
                                      double tau_norm, int grid_points = 10000,
                                      double z_max_override = -1.0);

/// r_hat = r_s - tau_norm (positive required), d_hat = d_s + tau_norm.
double connectivity_interval_end(const Geometry& geo, double tau_norm);
double collision_interval_start(const Geometry& geo, double tau_norm);

}  // namespace sgr

#include "bridgekit/interp.hpp"

#include <algorithm>
#include <cmath>

namespace bridgekit {

void linear_path(double t, std::span<const double> x0, std::span<const double> x1,
                 std::span<double> x_t, std::span<double> xdot_t) {
  const std::size_t d = x0.size();
  if (x1.size() != d || x_t.size() != d || xdot_t.size() != d) {
    throw DimensionError("linear_path: dimension mismatch");
  }
  for (std::size_t j = 0; j < d; ++j) {
    x_t[j] = (1.0 - t) * x0[j] + t * x1[j];
    xdot_t[j] = x1[j] - x0[j];
  }
}

PathPoint linear_path(double t, const Vector& x0, const Vector& x1) {
  PathPoint p{Vector(x0.size()), Vector(x0.size())};
  linear_path(t, {x0.data(), static_cast<std::size_t>(x0.size())},
              {x1.data(), static_cast<std::size_t>(x1.size())},
              {p.x.data(), static_cast<std::size_t>(p.x.size())},
              {p.xdot.data(), static_cast<std::size_t>(p.xdot.size())});
  return p;
}

void brownian_bridge_point(double t, std::span<const double> z0, std::span<const double> z1,
                           double sigma, std::span<const double> noise, std::span<double> z_t) {
  const std::size_t d = z0.size();
  if (z1.size() != d || noise.size() != d || z_t.size() != d) {
    throw DimensionError("brownian_bridge_point: dimension mismatch");
  }
  if (sigma < 0.0) throw std::invalid_argument("brownian_bridge_point: sigma must be >= 0");
  const double spread = sigma * std::sqrt(std::max(0.0, t * (1.0 - t)));
  for (std::size_t j = 0; j < d; ++j) {
    z_t[j] = t * z1[j] + (1.0 - t) * z0[j] + spread * noise[j];
  }
}

Vector brownian_bridge_point(double t, const Vector& z0, const Vector& z1, double sigma,
                             const Vector& noise) {
  if (z1.size() != z0.size()) throw DimensionError("brownian_bridge_point: dimension mismatch");
  Vector z(z0.size());
  brownian_bridge_point(t, {z0.data(), static_cast<std::size_t>(z0.size())},
                        {z1.data(), static_cast<std::size_t>(z1.size())}, sigma,
                        {noise.data(), static_cast<std::size_t>(noise.size())},
                        {z.data(), static_cast<std::size_t>(z.size())});
  return z;
}

}  // namespace bridgekit

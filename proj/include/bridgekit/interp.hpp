#pragma once

#include <span>

#include "bridgekit/common.hpp"

namespace bridgekit {

enum class InterpolantKind { linear, brownian_bridge };

/// Endpoint interpolant. sigma is the bridge diffusion strength; ignored for linear.
struct Interpolant {
  InterpolantKind kind = InterpolantKind::linear;
  double sigma = 0.0;
};

/// x_t = (1 - t) x0 + t x1 and its exact time derivative x1 - x0.
void linear_path(double t, std::span<const double> x0, std::span<const double> x1,
                 std::span<double> x_t, std::span<double> xdot_t);

struct PathPoint {
  Vector x;
  Vector xdot;
};
PathPoint linear_path(double t, const Vector& x0, const Vector& x1);

/// z_t = t z1 + (1 - t) z0 + sigma sqrt(t (1 - t)) noise.
void brownian_bridge_point(double t, std::span<const double> z0, std::span<const double> z1,
                           double sigma, std::span<const double> noise, std::span<double> z_t);
Vector brownian_bridge_point(double t, const Vector& z0, const Vector& z1, double sigma,
                             const Vector& noise);

}  // namespace bridgekit

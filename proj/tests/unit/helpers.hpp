#pragma once

#include <cmath>
#include <memory>
#include <numbers>

#include "nls/fem.hpp"
#include "nls/mesh.hpp"

namespace testutil {

constexpr double pi = std::numbers::pi;

inline std::shared_ptr<const nls::Mesh> line(double a, double b, int n) {
  return std::make_shared<const nls::Mesh>(nls::build_periodic_mesh_1d(a, b, n));
}

inline std::shared_ptr<const nls::Mesh> square(double a, double b, int n) {
  return std::make_shared<const nls::Mesh>(nls::build_periodic_mesh(2, {a, a}, {b, b}, {n, n}));
}

inline nls::ScalarFunction zero() {
  return [](const nls::Point&) { return 0.0; };
}

inline nls::ScalarFunction constant(double c) {
  return [c](const nls::Point&) { return c; };
}

/// Periodic distance on [a, b).
inline double periodic_distance(double x, double y, double a, double b) {
  const double L = b - a;
  double d = std::fmod(std::abs(x - y), L);
  return std::min(d, L - d);
}

}  // namespace testutil

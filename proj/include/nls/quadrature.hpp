#pragma once

#include <array>
#include <vector>

#include "nls/mesh.hpp"

namespace nls {

/// Reference-cell rule in barycentric coordinates. Weights sum to one, so the
/// physical weight of a node is weight * cell measure. For 1D cells only the
/// first two barycentric entries are used.
struct CellRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weights;
  int size() const { return static_cast<int>(weights.size()); }
};

/// 3-point Gauss-Legendre on an interval (degree 5).
const CellRule& gauss3_interval();
/// 6-point symmetric rule on a triangle (degree 4).
const CellRule& dunavant6_triangle();
/// Rule used for all cell integrals of a mesh of the given dimension.
const CellRule& cell_rule(int dimension);

/// Physical coordinates of quadrature node q on cell c.
Point quadrature_point(const Mesh& mesh, int c, const std::array<double, 3>& bary);

}  // namespace nls

#include "nls/quadrature.hpp"

#include <cmath>

namespace nls {

const CellRule& gauss3_interval() {
  static const CellRule rule = [] {
    CellRule r;
    const double d = 0.5 * std::sqrt(0.6);
    for (double t : {0.5 - d, 0.5, 0.5 + d}) r.bary.push_back({1.0 - t, t, 0.0});
    r.weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    return r;
  }();
  return rule;
}

const CellRule& dunavant6_triangle() {
  static const CellRule rule = [] {
    CellRule r;
    const double a1 = 0.44594849091596488632;
    const double w1 = 0.22338158967801146570;
    const double a2 = 0.09157621350977074346;
    const double w2 = 0.10995174365532186764;
    for (auto [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
      const double b = 1.0 - 2.0 * a;
      r.bary.push_back({b, a, a});
      r.bary.push_back({a, b, a});
      r.bary.push_back({a, a, b});
      r.weights.insert(r.weights.end(), 3, w);
    }
    return r;
  }();
  return rule;
}

const CellRule& cell_rule(int dimension) {
  return dimension == 1 ? gauss3_interval() : dunavant6_triangle();
}

Point quadrature_point(const Mesh& mesh, int c, const std::array<double, 3>& bary) {
  const auto pts = mesh.cell_points(c);
  Point x{0.0, 0.0};
  for (std::size_t v = 0; v < pts.size(); ++v) {
    x[0] += bary[v] * pts[v][0];
    x[1] += bary[v] * pts[v][1];
  }
  return x;
}

}  // namespace nls

#include "nls/observables.hpp"

#include <stdexcept>
#include <string>

namespace nls {

namespace {

void check(const Eigen::VectorXcd& U, const AssembledOperators& ops, const char* where) {
  if (U.size() != ops.mesh->num_nodes()) {
    throw std::invalid_argument(std::string(where) + ": field does not live on the operators' mesh");
  }
}

}  // namespace

double mass(const Eigen::VectorXcd& U, const AssembledOperators& ops) {
  check(U, ops, "mass");
  return std::max(0.0, quadratic(ops.M, U));
}

double energy(const Eigen::VectorXcd& U, const AssembledOperators& ops, const PotentialSample& v, double lambda) {
  check(U, ops, "energy");
  const double kinetic = 0.5 * ops.eps * ops.eps * quadratic(ops.S, U);
  const double pot = integrate_weighted_density(*ops.mesh, U, v.function());
  return kinetic + pot + 0.5 * lambda * integrate_quartic(*ops.mesh, U);
}

double energy(const Eigen::VectorXcd& U, const AssembledOperators& ops, double lambda) {
  check(U, ops, "energy");
  const double kinetic = 0.5 * ops.eps * ops.eps * quadratic(ops.S, U);
  const double quartic = lambda == 0.0 ? 0.0 : integrate_quartic(*ops.mesh, U);
  return kinetic + quadratic(ops.V, U) + 0.5 * lambda * quartic;
}

double second_moment(const Eigen::VectorXcd& U, const AssembledOperators& ops, const Point& center) {
  check(U, ops, "second_moment");
  const int dim = ops.mesh->dimension();
  return integrate_weighted_density(*ops.mesh, U, [center, dim](const Point& x) {
    double r = (x[0] - center[0]) * (x[0] - center[0]);
    if (dim == 2) r += (x[1] - center[1]) * (x[1] - center[1]);
    return r;
  });
}

SpMat second_moment_matrix(const Mesh& mesh, const Point& center) {
  const int dim = mesh.dimension();
  return assemble_weighted_mass(mesh, [center, dim](const Point& x) {
    double r = (x[0] - center[0]) * (x[0] - center[0]);
    if (dim == 2) r += (x[1] - center[1]) * (x[1] - center[1]);
    return r;
  });
}

Eigen::VectorXd nodal_density(const Eigen::VectorXcd& U) { return U.cwiseAbs2(); }

void DensityAccumulator::add(const Eigen::VectorXcd& U) { add_density(U.cwiseAbs2()); }

void DensityAccumulator::add_density(const Eigen::VectorXd& density) {
  if (count_ == 0) {
    sum_ = density;
  } else {
    if (density.size() != sum_.size()) throw std::invalid_argument("DensityAccumulator: size mismatch");
    sum_ += density;
  }
  ++count_;
}

void DensityAccumulator::merge(const DensityAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.sum_.size() != sum_.size()) throw std::invalid_argument("DensityAccumulator: size mismatch");
  sum_ += other.sum_;
  count_ += other.count_;
}

Eigen::VectorXd DensityAccumulator::expected() const {
  if (count_ == 0) throw std::logic_error("expected_density: accumulator is empty");
  return sum_ / static_cast<double>(count_);
}

cplx linear_functional(const Eigen::VectorXcd& U, const AssembledOperators& ops, const Eigen::VectorXcd& g) {
  check(U, ops, "linear_functional");
  check(g, ops, "linear_functional");
  return form(ops.M, g, U);
}

}  // namespace nls

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "nls/fem.hpp"
#include "nls/potential.hpp"

namespace nls {

/// Time series of the standard diagnostics. Unrecorded quantities stay empty.
struct ObservableSeries {
  std::vector<double> t;
  std::vector<double> mass;
  std::vector<double> energy;
  std::vector<double> second_moment;
};

/// U^* M U.
double mass(const Eigen::VectorXcd& U, const AssembledOperators& ops);

/// (eps^2/2)|grad psi|^2 + (v, |psi|^2) + (lambda/2)|psi|_{L4}^4, with the
/// potential term integrated by quadrature of the given sample.
double energy(const Eigen::VectorXcd& U, const AssembledOperators& ops, const PotentialSample& v, double lambda);
/// Same energy with the potential term taken from the assembled V (identical quadrature).
double energy(const Eigen::VectorXcd& U, const AssembledOperators& ops, double lambda);

/// Integral of |x - center|^2 |psi_h|^2 by cell quadrature.
double second_moment(const Eigen::VectorXcd& U, const AssembledOperators& ops, const Point& center = {0.0, 0.0});
/// Matrix of the form above, so the moment is U^* X U.
SpMat second_moment_matrix(const Mesh& mesh, const Point& center = {0.0, 0.0});

/// Running nodal sum of |U_p|^2.
class DensityAccumulator {
 public:
  void add(const Eigen::VectorXcd& U);
  void add_density(const Eigen::VectorXd& density);
  void merge(const DensityAccumulator& other);
  long count() const { return count_; }
  const Eigen::VectorXd& sum() const { return sum_; }
  /// Mean density; throws std::logic_error when empty.
  Eigen::VectorXd expected() const;

 private:
  Eigen::VectorXd sum_;
  long count_ = 0;
};

/// Nodal |U_p|^2.
Eigen::VectorXd nodal_density(const Eigen::VectorXcd& U);

/// (psi_h, g) = g^* M U.
cplx linear_functional(const Eigen::VectorXcd& U, const AssembledOperators& ops, const Eigen::VectorXcd& g);

}  // namespace nls

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nls/fem.hpp"
#include "nls/mesh.hpp"

namespace nls {

/// Named numeric parameters for built-in potentials.
struct PotentialParams {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<double>> lists;

  double require(const std::string& key, const std::string& tag) const;
  double get(const std::string& key, double fallback) const;
  const std::vector<double>& require_list(const std::string& key, const std::string& tag) const;
};

/// Affine random potential v(x, xi) = vbar(x) + sum_j s_j xi_j v_j(x).
class PotentialModel {
 public:
  PotentialModel(std::string tag, int dimension, ScalarFunction mean, std::vector<ScalarFunction> modes,
                 std::vector<double> scales);

  const std::string& tag() const { return tag_; }
  int dimension() const { return dim_; }
  int m() const { return static_cast<int>(modes_.size()); }
  const std::vector<double>& scales() const { return scales_; }

  double mean(const Point& x) const { return mean_(x); }
  /// Mode function v_{j+1} (zero-based j).
  double mode(int j, const Point& x) const { return modes_[j](x); }
  const ScalarFunction& mean_function() const { return mean_; }
  const ScalarFunction& mode_function(int j) const { return modes_[j]; }

  double evaluate(const Point& x, const Eigen::VectorXd& xi) const;

  /// Covariance eigenvalues for KL models (empty otherwise).
  const Eigen::VectorXd& kl_eigenvalues() const { return kl_eigenvalues_; }
  void set_kl_eigenvalues(Eigen::VectorXd ev) { kl_eigenvalues_ = std::move(ev); }

 private:
  std::string tag_;
  int dim_;
  ScalarFunction mean_;
  std::vector<ScalarFunction> modes_;
  std::vector<double> scales_;
  Eigen::VectorXd kl_eigenvalues_;
};

/// One realization of a model, fixed by its random coordinates.
struct PotentialSample {
  std::shared_ptr<const PotentialModel> model;
  Eigen::VectorXd xi;

  double operator()(const Point& x) const { return model->evaluate(x, xi); }
  ScalarFunction function() const;
};

/// Built-in models: harmonic, multiscale_cos, checkerboard, sine_series_1d,
/// sine_series_2d, discontinuous_step. Throws ConfigError on an unknown tag or
/// a missing parameter.
std::shared_ptr<const PotentialModel> builtin(const std::string& tag, const PotentialParams& params,
                                              int dimension = 1);

/// Deterministic model wrapping an arbitrary function.
std::shared_ptr<const PotentialModel> custom_potential(int dimension, ScalarFunction v);

/// Gaussian covariance sigma^2 exp(-sum_i |x_i - y_i|^2 / (2 l_i^2)).
struct KernelSpec {
  double variance = 1.0;
  std::array<double, 2> lengths{1.0, 1.0};

  double operator()(const Point& x, const Point& y, int dimension) const;
};

/// Truncated KL expansion by the Nystrom method on the closed uniform grid of
/// the mesh (endpoints included) with trapezoidal weights. Modes are
/// L2-normalized in the discrete weighted inner product.
std::shared_ptr<const PotentialModel> kl_build(const KernelSpec& kernel, const Mesh& mesh, int m,
                                               ScalarFunction mean = nullptr);

PotentialSample sample(std::shared_ptr<const PotentialModel> model, const Eigen::VectorXd& xi);

/// xi_j = sqrt(3) (2 u_j - 1).
Eigen::VectorXd map_unit_to_xi(const Eigen::VectorXd& u);

}  // namespace nls

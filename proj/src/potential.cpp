#include "nls/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "nls/errors.hpp"

namespace nls {

double PotentialParams::require(const std::string& key, const std::string& tag) const {
  auto it = scalars.find(key);
  if (it == scalars.end()) throw ConfigError("potential '" + tag + "' requires parameter '" + key + "'");
  return it->second;
}

double PotentialParams::get(const std::string& key, double fallback) const {
  auto it = scalars.find(key);
  return it == scalars.end() ? fallback : it->second;
}

const std::vector<double>& PotentialParams::require_list(const std::string& key, const std::string& tag) const {
  auto it = lists.find(key);
  if (it == lists.end()) throw ConfigError("potential '" + tag + "' requires list parameter '" + key + "'");
  return it->second;
}

PotentialModel::PotentialModel(std::string tag, int dimension, ScalarFunction mean,
                               std::vector<ScalarFunction> modes, std::vector<double> scales)
    : tag_(std::move(tag)), dim_(dimension), mean_(std::move(mean)), modes_(std::move(modes)),
      scales_(std::move(scales)) {
  if (!mean_) mean_ = [](const Point&) { return 0.0; };
  if (modes_.size() != scales_.size()) throw std::invalid_argument("PotentialModel: mode/scale count mismatch");
  for (double s : scales_) {
    if (!std::isfinite(s)) throw std::invalid_argument("PotentialModel: non-finite mode scale");
  }
}

double PotentialModel::evaluate(const Point& x, const Eigen::VectorXd& xi) const {
  double v = mean_(x);
  for (int j = 0; j < m(); ++j) {
    if (xi[j] != 0.0) v += scales_[j] * xi[j] * modes_[j](x);
  }
  return v;
}

ScalarFunction PotentialSample::function() const {
  auto self = *this;
  return [self](const Point& x) { return self(x); };
}

namespace {

std::shared_ptr<const PotentialModel> sine_series(const std::string& tag, const PotentialParams& p, bool two_d) {
  const double sigma = p.require("sigma", tag);
  const double beta = p.require("beta", tag);
  const double mraw = p.require("m", tag);
  const double mean = p.get("mean", 0.0);
  if (mraw < 0 || mraw != std::floor(mraw)) throw ConfigError(tag + ": m must be a nonnegative integer");
  const int m = static_cast<int>(mraw);
  std::vector<ScalarFunction> modes;
  std::vector<double> scales;
  for (int j = 1; j <= m; ++j) {
    if (two_d) {
      modes.emplace_back([j](const Point& x) { return std::sin(j * x[0]) * std::sin(j * x[1]); });
    } else {
      modes.emplace_back([j](const Point& x) { return std::sin(j * x[0]); });
    }
    scales.push_back(sigma / std::pow(static_cast<double>(j), beta));
  }
  return std::make_shared<PotentialModel>(tag, two_d ? 2 : 1, [mean](const Point&) { return mean; },
                                          std::move(modes), std::move(scales));
}

}  // namespace

std::shared_ptr<const PotentialModel> builtin(const std::string& tag, const PotentialParams& p, int dimension) {
  if (tag == "harmonic") {
    const double c = p.get("coefficient", 0.5);
    ScalarFunction f;
    if (dimension == 2) {
      f = [c](const Point& x) { return c * (x[0] * x[0] + x[1] * x[1]); };
    } else {
      f = [c](const Point& x) { return c * x[0] * x[0]; };
    }
    return std::make_shared<PotentialModel>(tag, dimension, f, std::vector<ScalarFunction>{}, std::vector<double>{});
  }
  if (tag == "multiscale_cos") {
    const double e = p.require("eps", tag);
    if (!(e > 0.0)) throw ConfigError("multiscale_cos: eps must be positive");
    auto f = [e](const Point& x) {
      return std::cos(x[0] * x[1] + x[0] / e + x[0] * x[1] / (e * e));
    };
    return std::make_shared<PotentialModel>(tag, 2, f, std::vector<ScalarFunction>{}, std::vector<double>{});
  }
  if (tag == "checkerboard") {
    const double e1 = p.get("eps1", 1.0 / 8.0);
    const double e2 = p.get("eps2", 1.0 / 6.0);
    if (!(e1 > 0.0) || !(e2 > 0.0)) throw ConfigError("checkerboard: eps1 and eps2 must be positive");
    auto f = [e1, e2](const Point& x) {
      const double a = x[0], b = x[1];
      const bool low = a >= 0.0 && a <= 0.5 && b >= 0.0 && b <= 0.5;
      const bool high = a >= 0.5 && a <= 1.0 && b >= 0.5 && b <= 1.0;
      const double e = (low || high) ? e2 : e1;
      constexpr double tau = 2.0 * std::numbers::pi;
      const double v1 = (a - 0.5) * (a - 0.5) + (b - 0.5) * (b - 0.5);
      const double v2 = (std::cos(tau * a / e) + 1.0) * (std::cos(tau * b / e) + 1.0);
      return v1 + v2;
    };
    return std::make_shared<PotentialModel>(tag, 2, f, std::vector<ScalarFunction>{}, std::vector<double>{});
  }
  if (tag == "sine_series_1d") return sine_series(tag, p, false);
  if (tag == "sine_series_2d") return sine_series(tag, p, true);
  if (tag == "discontinuous_step") {
    const auto& breaks = p.require_list("breakpoints", tag);
    const auto& levels = p.require_list("levels", tag);
    if (levels.size() != breaks.size() + 1) {
      throw ConfigError("discontinuous_step: need exactly one more level than breakpoints");
    }
    if (!std::is_sorted(breaks.begin(), breaks.end())) {
      throw ConfigError("discontinuous_step: breakpoints must be ascending");
    }
    const std::string side = p.get("side", 0.0) == 0.0 ? "left" : "right";
    auto f = [breaks, levels, right = side == "right"](const Point& x) {
      // Index of the first breakpoint not below x; on a breakpoint the left
      // side takes the lower interval, the right side the upper one.
      auto it = right ? std::upper_bound(breaks.begin(), breaks.end(), x[0])
                      : std::lower_bound(breaks.begin(), breaks.end(), x[0]);
      return levels[static_cast<std::size_t>(it - breaks.begin())];
    };
    return std::make_shared<PotentialModel>(tag, dimension, f, std::vector<ScalarFunction>{}, std::vector<double>{});
  }
  if (tag == "kl_gaussian") {
    throw ConfigError("kl_gaussian models need a mesh; build them with kl_build");
  }
  throw ConfigError("unknown potential tag '" + tag + "'");
}

std::shared_ptr<const PotentialModel> custom_potential(int dimension, ScalarFunction v) {
  return std::make_shared<PotentialModel>("custom", dimension, std::move(v), std::vector<ScalarFunction>{},
                                          std::vector<double>{});
}

double KernelSpec::operator()(const Point& x, const Point& y, int dimension) const {
  double s = 0.0;
  for (int i = 0; i < dimension; ++i) {
    const double d = x[i] - y[i];
    s += d * d / (2.0 * lengths[i] * lengths[i]);
  }
  return variance * std::exp(-s);
}

std::shared_ptr<const PotentialModel> kl_build(const KernelSpec& kernel, const Mesh& mesh, int m,
                                               ScalarFunction mean) {
  const int dim = mesh.dimension();
  if (!(kernel.variance > 0.0)) throw ConfigError("kl_build: variance must be positive");
  for (int i = 0; i < dim; ++i) {
    if (!(kernel.lengths[i] > 0.0)) throw ConfigError("kl_build: correlation lengths must be positive");
  }
  if (m < 0 || m > mesh.num_nodes()) throw ConfigError("kl_build: m must lie in [0, node count]");

  const auto cells = mesh.cells_per_axis();
  const Point s = mesh.spacing();
  const int n1 = cells[0] + 1;
  const int n2 = dim == 2 ? cells[1] + 1 : 1;
  const int n = n1 * n2;
  auto points = std::make_shared<std::vector<Point>>(n);
  Eigen::VectorXd w(n);
  for (int j = 0; j < n2; ++j) {
    for (int i = 0; i < n1; ++i) {
      const int k = i + n1 * j;
      (*points)[k] = {mesh.lower()[0] + i * s[0], dim == 2 ? mesh.lower()[1] + j * s[1] : 0.0};
      double wk = (i == 0 || i == n1 - 1) ? 0.5 * s[0] : s[0];
      if (dim == 2) wk *= (j == 0 || j == n2 - 1) ? 0.5 * s[1] : s[1];
      w[k] = wk;
    }
  }
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd A(n, n);
  for (int b = 0; b < n; ++b) {
    for (int a = b; a < n; ++a) {
      A(a, b) = A(b, a) = sw[a] * kernel((*points)[a], (*points)[b], dim) * sw[b];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw NumericalError("kl_build: eigensolver failed for size " + std::to_string(n));
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
  const double lmax = ev[n - 1];
  if (ev[0] < -1e-10 * lmax) {
    throw NumericalError("kl_build: covariance matrix has eigenvalue " + std::to_string(ev[0]) +
                         " below tolerance; kernel is not positive semidefinite");
  }

  Eigen::VectorXd lambdas(m);
  std::vector<ScalarFunction> modes;
  std::vector<double> scales;
  for (int j = 0; j < m; ++j) {
    const double lam = std::max(0.0, ev[n - 1 - j]);
    lambdas[j] = lam;
    scales.push_back(std::sqrt(lam));
    if (lam == 0.0) {
      modes.emplace_back([](const Point&) { return 0.0; });
      continue;
    }
    // Nodal values v(x_k) = u_k / sqrt(w_k); off-grid values use the Nystrom extension.
    Eigen::VectorXd coeff = es.eigenvectors().col(n - 1 - j).cwiseQuotient(sw);
    // Fix the sign so the weighted mean is nonnegative.
    if (w.dot(coeff) < 0.0) coeff = -coeff;
    auto weighted = std::make_shared<Eigen::VectorXd>(coeff.cwiseProduct(w) / lam);
    modes.emplace_back([kernel, dim, points, weighted](const Point& x) {
      double v = 0.0;
      for (std::size_t k = 0; k < points->size(); ++k) v += (*weighted)[k] * kernel(x, (*points)[k], dim);
      return v;
    });
  }
  auto model = std::make_shared<PotentialModel>("kl_gaussian", dim, std::move(mean), std::move(modes), std::move(scales));
  model->set_kl_eigenvalues(std::move(lambdas));
  spdlog::debug("kl_build: {} grid points, leading eigenvalue {:.6e}", n, lmax);
  return model;
}

PotentialSample sample(std::shared_ptr<const PotentialModel> model, const Eigen::VectorXd& xi) {
  if (!model) throw std::invalid_argument("sample: null model");
  if (xi.size() != model->m()) {
    throw std::invalid_argument("sample: xi has length " + std::to_string(xi.size()) + ", model expects " +
                                std::to_string(model->m()));
  }
  return {std::move(model), xi};
}

Eigen::VectorXd map_unit_to_xi(const Eigen::VectorXd& u) {
  Eigen::VectorXd xi(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    if (!(u[j] >= 0.0 && u[j] <= 1.0)) {
      throw std::invalid_argument("map_unit_to_xi: component " + std::to_string(j) + " outside [0, 1]");
    }
    xi[j] = std::sqrt(3.0) * (2.0 * u[j] - 1.0);
  }
  return xi;
}

}  // namespace nls

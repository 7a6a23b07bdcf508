#include "nls/harness/slope.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nls::harness {

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_slope: abscissa and error counts differ");
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("fit_slope: at least 3 rows are required");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0)) throw std::invalid_argument("fit_slope: abscissae must be positive");
    if (y[i] == 0.0) {
      throw std::domain_error("fit_slope: error is exactly zero in row " + std::to_string(i) +
                              " (exact match with the reference)");
    }
    if (!(y[i] > 0.0)) throw std::invalid_argument("fit_slope: errors must be positive");
    if (i > 0 && (x[i] - x[i - 1]) * (x[1] - x[0]) <= 0.0) {
      throw std::invalid_argument("fit_slope: abscissae must be strictly monotone");
    }
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y[i]) - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double r2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::log(y[i]) - (fit.intercept + fit.slope * std::log(x[i]));
    r2 += r * r;
  }
  fit.residual = std::sqrt(r2 / n);
  return fit;
}

}  // namespace nls::harness

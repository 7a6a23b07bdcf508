#pragma once

#include <vector>

namespace nls::harness {

struct ConvergenceRow {
  double abscissa = 0.0;
  double l2_error = 0.0;
  double h1_error = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Root-mean-square residual of the log-log fit.
  double residual = 0.0;
};

/// Least-squares slope of log(error) against log(abscissa). Needs at least 3
/// points, strictly monotone abscissae and positive errors.
SlopeFit fit_slope(const std::vector<double>& abscissa, const std::vector<double>& error);

}  // namespace nls::harness

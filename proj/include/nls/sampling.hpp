#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nls {

/// Rank-1 lattice rule with R random shifts.
struct LatticeRule {
  int m = 1;
  std::int64_t N = 1;
  std::vector<std::int64_t> z;
  std::vector<Eigen::VectorXd> shifts;
  std::uint64_t seed = 0;
};

/// Lattice with shifts drawn from a counter-based generator keyed by seed.
/// shift_count = 0 gives a single zero shift.
LatticeRule make_lattice(std::vector<std::int64_t> z, std::int64_t N, int shift_count, std::uint64_t seed);

/// z = (1, a, a^2, ..., a^{m-1}) mod N.
std::vector<std::int64_t> korobov_vector(int m, std::int64_t N, std::int64_t a);

/// Reads "m N" followed by m integers.
std::vector<std::int64_t> read_vector_file(const std::string& path, int& m, std::int64_t& N);

/// Points frac(i z / N + shift), i = 1..N, one row per point. shift_index is 1-based.
Eigen::MatrixXd lattice_points(const LatticeRule& rule, int shift_index);

/// Counter-based uniform double in [0, 1) keyed by (seed, index, dim).
double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint64_t dim);

struct EstimatorReport {
  std::vector<Eigen::VectorXd> per_shift;
  Eigen::VectorXd mean;
  /// sqrt(sum_r |Q_r - mean|^2 / R).
  double rms = 0.0;
  std::int64_t samples = 0;
  double wall_seconds = 0.0;
};

/// Integrand on [0,1]^m returning a vector of fixed length. Must be reentrant.
using Integrand = std::function<Eigen::VectorXd(const Eigen::VectorXd& u)>;

/// Per-shift lattice averages with pairwise summation; results do not depend on workers.
EstimatorReport qmc_estimate(const LatticeRule& rule, const Integrand& F, int workers = 1);

/// Plain Monte Carlo with N counter-based points (R = 1).
EstimatorReport mc_estimate(int m, std::int64_t N, std::uint64_t seed, const Integrand& F, int workers = 1);

/// Evaluate F at every row of pts. Failures are rethrown as NumericalError
/// naming the (1-based) point index and the label.
std::vector<Eigen::VectorXd> evaluate_points(const Eigen::MatrixXd& pts, const Integrand& F, int workers,
                                             const std::string& label);

/// Mean of equally sized vectors by a fixed pairwise summation tree.
Eigen::VectorXd pairwise_mean(const std::vector<Eigen::VectorXd>& values);

/// Evaluate F at the rows of pts and average with a fixed pairwise tree.
/// Failures are rethrown naming the point index and the label.
Eigen::VectorXd average_points(const Eigen::MatrixXd& pts, const Integrand& F, int workers, const std::string& label);

}  // namespace nls

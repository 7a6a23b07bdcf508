#include "nls/sampling.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "nls/errors.hpp"

namespace nls {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Pairwise sum of vals[lo, hi).
Eigen::VectorXd pairwise(const std::vector<Eigen::VectorXd>& vals, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return vals[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise(vals, lo, mid) + pairwise(vals, mid, hi);
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t index, std::uint64_t dim) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ (dim + 0x632be59bd9b4e019ull));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::vector<std::int64_t> korobov_vector(int m, std::int64_t N, std::int64_t a) {
  if (m < 1) throw std::invalid_argument("korobov_vector: m must be positive");
  if (N < 2) throw std::invalid_argument("korobov_vector: N must be at least 2");
  if (a <= 0 || a >= N) throw std::invalid_argument("korobov_vector: generator a must satisfy 1 <= a < N");
  std::vector<std::int64_t> z(m);
  __int128 v = 1;
  for (int j = 0; j < m; ++j) {
    z[j] = static_cast<std::int64_t>(v);
    v = (v * a) % N;
  }
  for (int j = 0; j < m; ++j) {
    if (z[j] == 0) throw std::invalid_argument("korobov_vector: component vanishes mod N");
    if (std::gcd(z[j], N) != 1) spdlog::debug("korobov_vector: component {} = {} shares a factor with N = {}", j, z[j], N);
  }
  return z;
}

LatticeRule make_lattice(std::vector<std::int64_t> z, std::int64_t N, int shift_count, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("make_lattice: N must be positive");
  if (z.empty()) throw std::invalid_argument("make_lattice: empty generating vector");
  LatticeRule rule;
  rule.m = static_cast<int>(z.size());
  rule.N = N;
  rule.seed = seed;
  for (auto& zj : z) {
    zj = ((zj % N) + N) % N;
    if (std::gcd(zj, N) != 1) spdlog::debug("lattice component {} is not coprime to N = {}", zj, N);
  }
  rule.z = std::move(z);
  if (shift_count <= 0) {
    rule.shifts.push_back(Eigen::VectorXd::Zero(rule.m));
  } else {
    for (int r = 0; r < shift_count; ++r) {
      Eigen::VectorXd d(rule.m);
      for (int j = 0; j < rule.m; ++j) d[j] = counter_uniform(seed ^ 0x5348494654ull, r, j);
      rule.shifts.push_back(d);
    }
  }
  return rule;
}

std::vector<std::int64_t> read_vector_file(const std::string& path, int& m, std::int64_t& N) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lattice vector file '" + path + "'");
  if (!(in >> m >> N) || m < 1 || N < 1) throw ConfigError("lattice vector file '" + path + "': bad header");
  std::vector<std::int64_t> z(m);
  for (auto& v : z) {
    if (!(in >> v)) throw ConfigError("lattice vector file '" + path + "': expected " + std::to_string(m) + " components");
  }
  return z;
}

Eigen::MatrixXd lattice_points(const LatticeRule& rule, int shift_index) {
  if (shift_index < 1 || shift_index > static_cast<int>(rule.shifts.size())) {
    throw std::out_of_range("lattice_points: shift index out of range");
  }
  const Eigen::VectorXd& d = rule.shifts[shift_index - 1];
  Eigen::MatrixXd pts(rule.N, rule.m);
  for (std::int64_t i = 1; i <= rule.N; ++i) {
    for (int j = 0; j < rule.m; ++j) {
      const std::int64_t r = static_cast<std::int64_t>((static_cast<__int128>(i) * rule.z[j]) % rule.N);
      double x = static_cast<double>(r) / static_cast<double>(rule.N) + d[j];
      x -= std::floor(x);
      if (x >= 1.0) x = 0.0;
      pts(i - 1, j) = x;
    }
  }
  return pts;
}

std::vector<Eigen::VectorXd> evaluate_points(const Eigen::MatrixXd& pts, const Integrand& F, int workers,
                                             const std::string& label) {
  const std::size_t n = static_cast<std::size_t>(pts.rows());
  std::vector<Eigen::VectorXd> vals(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;

  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        vals[i] = F(pts.row(static_cast<Eigen::Index>(i)).transpose());
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
        failed.store(true);
      }
    }
  };
  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (nw == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(err);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    throw NumericalError("sample evaluation failed at point " + std::to_string(err_index + 1) + " (" + label + "): " + what);
  }
  return vals;
}

Eigen::VectorXd pairwise_mean(const std::vector<Eigen::VectorXd>& vals) {
  if (vals.empty()) throw std::invalid_argument("pairwise_mean: no values");
  const Eigen::Index len = vals[0].size();
  for (const auto& v : vals) {
    if (v.size() != len) throw std::invalid_argument("pairwise_mean: vectors of different lengths");
  }
  return pairwise(vals, 0, vals.size()) / static_cast<double>(vals.size());
}

Eigen::VectorXd average_points(const Eigen::MatrixXd& pts, const Integrand& F, int workers, const std::string& label) {
  if (pts.rows() == 0) throw std::invalid_argument("average_points: no points");
  return pairwise_mean(evaluate_points(pts, F, workers, label));
}

namespace {

void finish(EstimatorReport& rep) {
  const std::size_t R = rep.per_shift.size();
  rep.mean = pairwise_mean(rep.per_shift);
  double s = 0.0;
  for (const auto& q : rep.per_shift) s += (q - rep.mean).squaredNorm();
  rep.rms = std::sqrt(s / static_cast<double>(R));
}

}  // namespace

EstimatorReport qmc_estimate(const LatticeRule& rule, const Integrand& F, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  EstimatorReport rep;
  for (int r = 1; r <= static_cast<int>(rule.shifts.size()); ++r) {
    rep.per_shift.push_back(average_points(lattice_points(rule, r), F, workers, "shift " + std::to_string(r)));
  }
  finish(rep);
  rep.samples = rule.N * static_cast<std::int64_t>(rule.shifts.size());
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

EstimatorReport mc_estimate(int m, std::int64_t N, std::uint64_t seed, const Integrand& F, int workers) {
  if (m < 1 || N < 1) throw std::invalid_argument("mc_estimate: m and N must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::MatrixXd pts(N, m);
  for (std::int64_t i = 0; i < N; ++i)
    for (int j = 0; j < m; ++j) pts(i, j) = counter_uniform(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
  EstimatorReport rep;
  rep.per_shift.push_back(average_points(pts, F, workers, "mc seed " + std::to_string(seed)));
  finish(rep);
  rep.samples = N;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace nls

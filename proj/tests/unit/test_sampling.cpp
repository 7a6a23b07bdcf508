#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nls/errors.hpp"
#include "nls/parallel.hpp"
#include "nls/sampling.hpp"

using namespace nls;

namespace {

Eigen::VectorXd scalar(double x) { return Eigen::VectorXd::Constant(1, x); }

}  // namespace

TEST_CASE("lattice points, unshifted and shifted") {
  LatticeRule r = make_lattice({1}, 4, 0, 1);
  const Eigen::MatrixXd p = lattice_points(r, 1);
  REQUIRE(p.rows() == 4);
  CHECK(p(0, 0) == 0.25);
  CHECK(p(1, 0) == 0.5);
  CHECK(p(2, 0) == 0.75);
  CHECK(p(3, 0) == 0.0);

  LatticeRule s = make_lattice({1}, 2, 0, 1);
  s.shifts = {Eigen::VectorXd::Constant(1, 0.1)};
  const Eigen::MatrixXd q = lattice_points(s, 1);
  CHECK(q(0, 0) == doctest::Approx(0.6));
  CHECK(q(1, 0) == doctest::Approx(0.1));
}

TEST_CASE("lattice points stay in the unit cube and shifts are circular translations") {
  const LatticeRule r = make_lattice(korobov_vector(5, 1021, 76), 1021, 3, 99);
  const Eigen::MatrixXd a = lattice_points(r, 1), b = lattice_points(r, 2);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() < 1.0);
  for (int j = 0; j < 5; ++j) {
    const double d = r.shifts[1][j] - r.shifts[0][j];
    for (int i = 0; i < 1021; i += 97) {
      double t = std::fmod(a(i, j) + d + 2.0, 1.0);
      CHECK(std::min(std::abs(t - b(i, j)), 1.0 - std::abs(t - b(i, j))) < 1e-12);
    }
  }
  CHECK_THROWS(lattice_points(r, 0));
  CHECK_THROWS(lattice_points(r, 4));
}

TEST_CASE("Korobov vectors") {
  CHECK(korobov_vector(4, 11, 1) == std::vector<std::int64_t>{1, 1, 1, 1});
  CHECK(korobov_vector(3, 7, 3) == std::vector<std::int64_t>{1, 3, 2});
  for (auto z : korobov_vector(10, 8191, 1571)) {
    CHECK(z >= 1);
    CHECK(z <= 8190);
  }
  CHECK_THROWS_AS(korobov_vector(3, 7, 0), std::invalid_argument);
}

TEST_CASE("qMC estimator: constants, direct average, linearity") {
  const LatticeRule r = make_lattice({1}, 4, 0, 1);
  const EstimatorReport c = qmc_estimate(r, [](const Eigen::VectorXd&) { return scalar(2.5); });
  CHECK(c.mean(0) == 2.5);
  CHECK(c.rms == 0.0);
  const EstimatorReport u = qmc_estimate(r, [](const Eigen::VectorXd& x) { return scalar(x(0)); });
  CHECK(u.mean(0) == doctest::Approx(0.375));

  const LatticeRule r3 = make_lattice(korobov_vector(2, 127, 40), 127, 3, 5);
  auto F = [](const Eigen::VectorXd& x) { return scalar(std::sin(x(0)) * x(1)); };
  auto G = [](const Eigen::VectorXd& x) { return scalar(x(0) * x(0) + x(1)); };
  auto H = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(1.7 * F(x) + G(x)); };
  const auto eF = qmc_estimate(r3, F), eG = qmc_estimate(r3, G), eH = qmc_estimate(r3, H);
  for (int k = 0; k < 3; ++k) CHECK(eH.per_shift[k](0) == doctest::Approx(1.7 * eF.per_shift[k](0) + eG.per_shift[k](0)).epsilon(1e-14));
}

TEST_CASE("qMC error decays close to 1/N on a smooth product integrand") {
  // prod_j (1 + (t_j^2 - 1/3) / j^2) with t the tent transform of x; exact integral 1.
  auto F = [](const Eigen::VectorXd& x) {
    double p = 1.0;
    for (int j = 0; j < x.size(); ++j) {
      const double t = 1.0 - std::abs(2.0 * x(j) - 1.0);
      p *= 1.0 + (t * t - 1.0 / 3.0) / ((j + 1.0) * (j + 1.0));
    }
    return scalar(p);
  };
  std::vector<double> logN, logE;
  for (std::int64_t N : {64, 256, 1024, 4096}) {
    double sq = 0.0;
    const int R = 16;
    const LatticeRule r = make_lattice(korobov_vector(3, N, 1571 % N), N, R, 7);
    for (const auto& q : qmc_estimate(r, F).per_shift) sq += (q(0) - 1.0) * (q(0) - 1.0);
    logN.push_back(std::log(static_cast<double>(N)));
    logE.push_back(0.5 * std::log(sq / R));
  }
  const double slope = (logE.back() - logE.front()) / (logN.back() - logN.front());
  CHECK(slope < -0.8);
}

TEST_CASE("Monte Carlo estimator") {
  const EstimatorReport c = mc_estimate(2, 50, 3, [](const Eigen::VectorXd&) { return scalar(4.0); });
  CHECK(c.mean(0) == 4.0);
  auto F = [](const Eigen::VectorXd& x) { return scalar(x(0)); };
  const EstimatorReport big = mc_estimate(1, 100000, 12345, F, 2);
  CHECK(big.mean(0) >= 0.497);
  CHECK(big.mean(0) <= 0.503);
  const EstimatorReport again = mc_estimate(1, 100000, 12345, F, 1);
  CHECK(again.mean(0) == big.mean(0));
}

TEST_CASE("evaluation is order independent across worker counts") {
  const LatticeRule r = make_lattice(korobov_vector(3, 509, 103), 509, 2, 4);
  auto F = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(2);
    v << std::exp(x(0)) * x(1), std::cos(x(2));
    return v;
  };
  const auto a = qmc_estimate(r, F, 1), b = qmc_estimate(r, F, 3);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("failures name the point") {
  const LatticeRule r = make_lattice({1}, 8, 0, 1);
  auto F = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    if (x(0) > 0.6) throw std::runtime_error("boom");
    return scalar(x(0));
  };
  try {
    qmc_estimate(r, F, 2);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("point 5") != std::string::npos);
  }
}

TEST_CASE("vector file") {
  const auto path = (std::filesystem::temp_directory_path() / "nls_vector.txt").string();
  {
    std::ofstream out(path);
    out << "3 31\n1 12 20\n";
  }
  int m = 0;
  std::int64_t N = 0;
  const auto z = read_vector_file(path, m, N);
  CHECK(m == 3);
  CHECK(N == 31);
  CHECK(z == std::vector<std::int64_t>{1, 12, 20});
  std::filesystem::remove(path);
  CHECK_THROWS(read_vector_file(path, m, N));
}

TEST_CASE("counter-based uniforms are keyed, not sequenced") {
  CHECK(counter_uniform(5, 10, 2) == counter_uniform(5, 10, 2));
  CHECK(counter_uniform(5, 10, 2) != counter_uniform(5, 11, 2));
  CHECK(counter_uniform(5, 10, 2) != counter_uniform(6, 10, 2));
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = counter_uniform(1, i, 0);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

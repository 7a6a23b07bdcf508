#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "nls/errors.hpp"
#include "nls/fem.hpp"

using namespace nls;
using testutil::pi;

namespace {

double max_abs(const SpMat& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

/// Integral over a triangle of prod_k lambda_k^{a_k}: 2|T| a! b! c! / (a + b + c + 2)!.
double bary_moment(double area, int a, int b, int c) {
  return 2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2);
}

}  // namespace

TEST_CASE("1D mass and stiffness entries, periodic wrap included") {
  auto mesh = testutil::line(0, 1, 10);
  const double h = 0.1;
  const Eigen::MatrixXd M(assemble_mass(*mesh));
  const Eigen::MatrixXd S(assemble_stiffness(*mesh));
  for (int p = 0; p < 10; ++p) {
    const int q = (p + 1) % 10;
    CHECK(M(p, p) == doctest::Approx(2 * h / 3));
    CHECK(M(p, q) == doctest::Approx(h / 6));
    CHECK(S(p, p) == doctest::Approx(2 / h));
    CHECK(S(p, q) == doctest::Approx(-1 / h));
    CHECK(M(p, (p + 3) % 10) == 0.0);
  }
  CHECK(M(0, 9) == doctest::Approx(h / 6));
  CHECK(S(9, 0) == doctest::Approx(-1 / h));
}

TEST_CASE("zero and unit potentials") {
  for (auto mesh : {testutil::line(-pi, pi, 32), testutil::square(0, 1, 8)}) {
    const AssembledOperators z = assemble(mesh, testutil::zero(), 0.5);
    CHECK(max_abs(z.V) == 0.0);
    const AssembledOperators one = assemble(mesh, testutil::constant(1.0), 0.5);
    CHECK(max_abs(one.V - one.M) < 1e-15);
  }
}

TEST_CASE("row sums, symmetry, positive definiteness") {
  auto v = [](const Point& x) { return std::sin(3 * x[0]) + x[1] * x[1]; };
  for (auto mesh : {testutil::line(-pi, pi, 40), testutil::square(0, 2 * pi, 10)}) {
    const AssembledOperators ops = assemble(mesh, v, 0.25);
    const Eigen::MatrixXd M(ops.M), S(ops.S), V(ops.V);
    CHECK(S.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
    // (1, phi_p) is h in 1D and 6 * (h^2 / 2) / 3 = h^2 on the 2D split of a square.
    const Point hs = mesh->spacing();
    const double hat_integral = mesh->dimension() == 1 ? hs[0] : hs[0] * hs[1];
    CHECK((M.rowwise().sum().array() - hat_integral).abs().maxCoeff() < 1e-13);
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((V - V.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    // Same sparsity pattern: V only where M is structurally nonzero.
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j)
        if (M(i, j) == 0.0) CHECK(V(i, j) == 0.0);
  }
}

TEST_CASE("linear potentials are integrated exactly (2D oracle by barycentric moments)") {
  auto mesh = testutil::square(0, 1, 6);
  auto v = [](const Point& x) { return 1.0 + 2.0 * x[0] - 3.0 * x[1]; };
  const Eigen::MatrixXd V(assemble_weighted_mass(*mesh, v));
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(V.rows(), V.cols());
  for (int c = 0; c < mesh->num_cells(); ++c) {
    const auto idx = mesh->cell(c);
    const auto pts = mesh->cell_points(c);
    const double area = mesh->cell_measure(c);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) {
          int e[3] = {0, 0, 0};
          ++e[i];
          ++e[j];
          ++e[k];
          s += v(pts[k]) * bary_moment(area, e[0], e[1], e[2]);
        }
        oracle(idx[i], idx[j]) += s;
      }
    }
  }
  CHECK((V - oracle).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("linear potentials are integrated exactly (1D oracle by Simpson)") {
  auto mesh = testutil::line(-1, 2, 9);
  auto v = [](const Point& x) { return 0.5 - 1.5 * x[0]; };
  const Eigen::MatrixXd V(assemble_weighted_mass(*mesh, v));
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(V.rows(), V.cols());
  for (int c = 0; c < mesh->num_cells(); ++c) {
    const auto idx = mesh->cell(c);
    const auto pts = mesh->cell_points(c);
    const double a = pts[0][0], b = pts[1][0], L = b - a;
    auto hat = [&](int i, double x) { return i == 0 ? (b - x) / L : (x - a) / L; };
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        auto f = [&](double x) { return v({x, 0}) * hat(i, x) * hat(j, x); };
        oracle(idx[i], idx[j]) += L / 6 * (f(a) + 4 * f(0.5 * (a + b)) + f(b));
      }
  }
  CHECK((V - oracle).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("non-finite potential aborts assembly naming the cell") {
  auto mesh = testutil::line(0, 1, 8);
  auto bad = [](const Point& x) { return x[0] > 0.5 ? std::nan("") : 0.0; };
  try {
    assemble(mesh, bad, 1.0);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("cell") != std::string::npos);
  }
}

TEST_CASE("L2 projection examples") {
  auto mesh = testutil::line(-pi, pi, 64);
  const AssembledOperators ops = assemble(mesh, testutil::zero(), 1.0);
  const Eigen::VectorXcd one = project_l2([](const Point&) { return cplx(1.0, 0.0); }, ops);
  CHECK((one.array() - 1.0).abs().maxCoeff() < 1e-12);

  // A fine hat projects to its own unit vector.
  const double h = mesh->h();
  const double x3 = mesh->node(3)[0];
  const Eigen::VectorXcd e3 = project_l2(
      [&](const Point& x) { return cplx(std::max(0.0, 1.0 - std::abs(x[0] - x3) / h), 0.0); }, ops);
  Eigen::VectorXcd expect = Eigen::VectorXcd::Zero(64);
  expect(3) = 1.0;
  CHECK((e3 - expect).cwiseAbs().maxCoeff() < 1e-12);

  // Idempotence on a P1 field.
  Eigen::VectorXcd U = Eigen::VectorXcd::Random(64);
  const Eigen::VectorXcd Uh = U;
  auto interp = [&](const Point& x) {
    const double s = (x[0] + pi) / h;
    int i = static_cast<int>(std::floor(s));
    const double t = s - i;
    return (1 - t) * Uh(mesh->node_index(i)) + t * Uh(mesh->node_index(i + 1));
  };
  CHECK((project_l2(interp, ops) - U).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("projected Gaussian has mass pi/2 in the fine limit") {
  double prev_err = 1.0;
  for (int n : {256, 1024}) {
    auto mesh = testutil::line(-pi, pi, n);
    const AssembledOperators ops = assemble(mesh, testutil::zero(), 1.0);
    const Eigen::VectorXcd U = project_l2(
        [](const Point& x) { return cplx(std::pow(10 * pi, 0.25) * std::exp(-20 * x[0] * x[0]), 0.0); }, ops);
    const double err = std::abs(quadratic(ops.M, U) - pi / 2);
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 1e-5);
}

TEST_CASE("norms of zero, constant and sine fields") {
  auto mesh = testutil::line(0, 2 * pi, 2048);
  const AssembledOperators ops = assemble(mesh, testutil::zero(), 1.0);
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(2048);
  CHECK(norm(zero, ops, NormKind::L2) == 0.0);
  CHECK(norm(zero, ops, NormKind::H1) == 0.0);
  CHECK(norm(zero, ops, NormKind::L4) == 0.0);

  const cplx c(1.5, -2.0);
  const Eigen::VectorXcd C = Eigen::VectorXcd::Constant(2048, c);
  const double D = 2 * pi;
  CHECK(norm(C, ops, NormKind::L2) == doctest::Approx(std::abs(c) * std::sqrt(D)));
  CHECK(norm(C, ops, NormKind::H1) == doctest::Approx(std::abs(c) * std::sqrt(D)));
  CHECK(norm(C, ops, NormKind::L4) == doctest::Approx(std::abs(c) * std::pow(D, 0.25)));

  const Eigen::VectorXcd s = nodal_values(*mesh, ComplexFunction([](const Point& x) { return cplx(std::sin(x[0]), 0); }));
  CHECK(norm(s, ops, NormKind::L2) == doctest::Approx(std::sqrt(pi)).epsilon(1e-5));
  CHECK(norm(s, ops, NormKind::H1) == doctest::Approx(std::sqrt(2 * pi)).epsilon(1e-5));
}

TEST_CASE("error_between: identity, constants, interpolation rate") {
  auto fine = testutil::line(0, 2 * pi, 1024);
  const AssembledOperators ops = assemble(fine, testutil::zero(), 1.0);
  const Eigen::VectorXcd f = project_l2([](const Point& x) { return cplx(std::sin(x[0]), 0); }, ops);
  CHECK(error_between(f, f, ops, nullptr, NormKind::H1) == 0.0);

  auto pair = build_mesh_pair(fine, 8);
  const Eigen::VectorXcd c1 = Eigen::VectorXcd::Ones(pair->coarse->num_nodes());
  const Eigen::VectorXcd f1 = Eigen::VectorXcd::Ones(1024);
  CHECK(error_between(f1, c1, ops, pair.get(), NormKind::L2) < 1e-13);

  std::vector<double> errs;
  for (int k : {32, 16, 8}) {
    auto p = build_mesh_pair(fine, k);
    const Eigen::VectorXcd c = nodal_values(*p->coarse, ComplexFunction([](const Point& x) { return cplx(std::sin(x[0]), 0); }));
    errs.push_back(error_between(f, c, ops, p.get(), NormKind::L2));
  }
  CHECK(errs[0] / errs[1] == doctest::Approx(4.0).epsilon(0.05));
  CHECK(errs[1] / errs[2] == doctest::Approx(4.0).epsilon(0.05));

  auto other = testutil::line(0, 2 * pi, 512);
  const Eigen::VectorXcd wrong = Eigen::VectorXcd::Ones(300);
  CHECK_THROWS(error_between(f, wrong, ops, nullptr, NormKind::L2));
}

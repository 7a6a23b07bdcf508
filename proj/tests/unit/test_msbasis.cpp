#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "nls/msbasis.hpp"
#include "nls/potential.hpp"

using namespace nls;
using testutil::pi;

namespace {

struct Setup {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const MeshPair> pair;
  AssembledOperators ops;
};

Setup make_setup(std::shared_ptr<const Mesh> mesh, int ratio, const ScalarFunction& v, double eps) {
  return {mesh, build_mesh_pair(mesh, ratio), assemble(mesh, v, eps)};
}

ScalarFunction wavy() {
  return [](const Point& x) { return 1.0 + 0.5 * std::sin(5 * x[0]) + 0.3 * std::cos(2 * x[1]); };
}

Eigen::VectorXd pseudo_random(int n, int seed) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = std::sin(12.9898 * (i + 1) * (seed + 1) + 78.233 * seed);
  return w;
}

}  // namespace

TEST_CASE("Clement interpolation: constants, kernel, coarse hats") {
  auto s = make_setup(testutil::line(-pi, pi, 96), 4, wavy(), 0.25);
  const int NH = s.pair->coarse->num_nodes();
  const Eigen::VectorXcd one = clement_interpolate(Eigen::VectorXcd::Ones(96), *s.pair, s.ops);
  CHECK((one.array() - 1.0).abs().maxCoeff() < 1e-13);

  const MultiscaleBasis basis = build_basis(s.ops, s.pair);
  const Eigen::VectorXd w = kernel_component(basis, pseudo_random(96, 1));
  CHECK(clement_interpolate(w.cast<cplx>(), *s.pair, s.ops).cwiseAbs().maxCoeff() < 1e-12);

  // Oracle: the coarse Gram matrix, computed directly on the coarse mesh.
  const Eigen::MatrixXd G(assemble_mass(*s.pair->coarse));
  const Eigen::VectorXd hat_int = G.rowwise().sum();
  for (int q : {0, 5, NH - 1}) {
    const Eigen::VectorXd phiq = Eigen::MatrixXd(s.pair->prolongation).col(q);
    const Eigen::VectorXcd c = clement_interpolate(phiq.cast<cplx>(), *s.pair, s.ops);
    for (int p = 0; p < NH; ++p) CHECK(c(p).real() == doctest::Approx(G(p, q) / hat_int(p)).epsilon(1e-12));
  }
}

TEST_CASE("ratio 1: constraints determine the basis") {
  auto s = make_setup(testutil::line(0, 1, 8), 1, wavy(), 0.5);
  const MultiscaleBasis basis = build_basis(s.ops, s.pair);
  const Eigen::MatrixXd M(s.ops.M);
  const Eigen::MatrixXd expect = M.inverse() * basis.lambda.asDiagonal();
  CHECK((basis.C - expect).cwiseAbs().maxCoeff() < 1e-10);

  // Coarse mass matrix for v = 0: diag(lambda) M^-1 diag(lambda).
  auto z = make_setup(testutil::line(0, 1, 8), 1, testutil::zero(), 0.5);
  const MultiscaleBasis b0 = build_basis(z.ops, z.pair);
  const CoarseOperators co = project_operators(b0, z.ops);
  const Eigen::MatrixXd Mz(z.ops.M);
  const Eigen::MatrixXd oracle = b0.lambda.asDiagonal() * Mz.inverse() * b0.lambda.asDiagonal();
  CHECK((co.M - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("partition of unity for zero potential (1D and 2D)") {
  for (auto mesh : {testutil::line(-pi, pi, 120), testutil::square(0, 2 * pi, 24)}) {
    auto s = make_setup(mesh, mesh->dimension() == 1 ? 6 : 4, testutil::zero(), 1.0 / 16);
    const MultiscaleBasis basis = build_basis(s.ops, s.pair);
    const Eigen::VectorXd sum = basis.C.rowwise().sum();
    CHECK((sum.array() - 1.0).abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("constraints and energy orthogonality") {
  for (auto mesh : {testutil::line(-pi, pi, 120), testutil::square(0, 2 * pi, 24)}) {
    auto s = make_setup(mesh, mesh->dimension() == 1 ? 5 : 3, wavy(), 1.0 / 8);
    const MultiscaleBasis basis = build_basis(s.ops, s.pair);
    CHECK(constraint_residual(basis) <= 1e-8 * basis.lambda.maxCoeff());
    // B C is diag(lambda) up to the residual, checked independently of constraint_residual.
    const Eigen::MatrixXd BC = Eigen::MatrixXd(basis.B) * basis.C;
    const Eigen::MatrixXd D = basis.lambda.asDiagonal();
    CHECK((BC - D).cwiseAbs().maxCoeff() <= 1e-8 * basis.lambda.maxCoeff());

    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd w = kernel_component(basis, pseudo_random(mesh->num_nodes(), t));
      w /= std::sqrt(w.dot(s.ops.M * w));
      worst = std::max(worst, (basis.C.transpose() * (basis.A * w)).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("direct sum: the detail part has vanishing Clement coefficients") {
  auto s = make_setup(testutil::line(-pi, pi, 90), 3, wavy(), 0.2);
  const MultiscaleBasis basis = build_basis(s.ops, s.pair);
  const Eigen::VectorXcd f = pseudo_random(90, 4).cast<cplx>();
  const Eigen::VectorXcd Ihf = clement_interpolate(f, *s.pair, s.ops);
  const Eigen::VectorXcd detail = f - reconstruct_fine(basis, Ihf);
  CHECK(clement_interpolate(detail, *s.pair, s.ops).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("unit normalization rescales the columns") {
  auto s = make_setup(testutil::line(-pi, pi, 96), 4, wavy(), 0.2);
  const MultiscaleBasis a = build_basis(s.ops, s.pair);
  BasisOptions unit;
  unit.normalization = Normalization::Unit;
  const MultiscaleBasis b = build_basis(s.ops, s.pair, unit);
  const Eigen::MatrixXd scaled = a.C * a.lambda.cwiseInverse().asDiagonal();
  CHECK((b.C - scaled).cwiseAbs().maxCoeff() <= 1e-8 * scaled.cwiseAbs().maxCoeff());
  CHECK((b.weights.array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("coarse operators: symmetry, definiteness, zero map") {
  auto s = make_setup(testutil::square(0, 1, 12), 3, wavy(), 0.3);
  MultiscaleBasis basis = build_basis(s.ops, s.pair);
  const CoarseOperators co = project_operators(basis, s.ops);
  CHECK((co.M - co.M.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((co.S - co.S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((co.V - co.V.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(co.M).eigenvalues().minCoeff() > 0.0);

  basis.C.setZero();
  const CoarseOperators zero = project_operators(basis, s.ops);
  CHECK(zero.M.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.S.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.V.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reconstruction") {
  auto s = make_setup(testutil::line(-pi, pi, 60), 3, wavy(), 0.3);
  const MultiscaleBasis basis = build_basis(s.ops, s.pair);
  const int NH = s.pair->coarse->num_nodes();
  CHECK(reconstruct_fine(basis, Eigen::VectorXcd::Zero(NH)).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(NH);
  e(4) = 1.0;
  CHECK((reconstruct_fine(basis, e).real() - basis.C.col(4)).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXcd u1 = Eigen::VectorXcd::Random(NH), u2 = Eigen::VectorXcd::Random(NH);
  const cplx alpha(0.3, -1.1);
  const Eigen::VectorXcd lhs = reconstruct_fine(basis, alpha * u1 + u2);
  const Eigen::VectorXcd rhs = alpha * reconstruct_fine(basis, u1) + reconstruct_fine(basis, u2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-13);
  CHECK_THROWS(reconstruct_fine(basis, Eigen::VectorXcd::Zero(NH + 1)));
}

TEST_CASE("decay profile on the harmonic configuration") {
  // H = 2 pi / 64 with eps = 1/16.
  auto mesh = testutil::line(-pi, pi, 256);
  auto s = make_setup(mesh, 4, [](const Point& x) { return 0.5 * x[0] * x[0]; }, 1.0 / 16);
  const MultiscaleBasis basis = build_basis(s.ops, s.pair);
  const int p = 32;
  const std::vector<double> e = decay_profile(basis, p, 40);
  const Eigen::VectorXd phi = basis.C.col(p);
  CHECK(e[0] <= std::sqrt(phi.dot(s.ops.S * phi)) * (1 + 1e-12));
  for (std::size_t l = 1; l < e.size(); ++l) CHECK(e[l] <= e[l - 1]);
  CHECK(e.back() == 0.0);
  for (std::size_t l = 0; l + 1 < e.size(); ++l) {
    if (e[l + 1] > 1e-12 * e[0]) CHECK(e[l + 1] / e[l] < 1.0);
  }
}

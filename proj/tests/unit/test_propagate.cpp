#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "nls/errors.hpp"
#include "nls/propagate.hpp"

using namespace nls;
using testutil::pi;

namespace {

Eigen::VectorXcd random_field(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::VectorXcd u(n);
  for (int i = 0; i < n; ++i) u(i) = cplx(N(gen), N(gen));
  return u;
}

ComplexFunction gaussian(double x0 = 0.0) {
  return [x0](const Point& x) { return cplx(std::pow(10 * pi, 0.25) * std::exp(-20 * (x[0] - x0) * (x[0] - x0)), 0.0); };
}

ScalarFunction harmonic() {
  return [](const Point& x) { return 0.5 * x[0] * x[0]; };
}

RunResult simulate(const Discretization& space, Scheme scheme, double dt, double T, double lambda,
                   const ScalarFunction& v) {
  StepperConfig cfg;
  cfg.scheme = scheme;
  cfg.dt = dt;
  cfg.eps = space.fine().eps;
  cfg.lambda = lambda;
  cfg.steps = static_cast<int>(std::lround(T / dt));
  const Stepper st(cfg, space, nodal_values(*space.fine().mesh, v));
  return run(st, initial_state(space, gaussian()));
}

double l2(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, const AssembledOperators& ops) {
  return norm(a - b, ops, NormKind::L2);
}

}  // namespace

TEST_CASE("cubic phase flow") {
  const Eigen::VectorXcd z = Eigen::VectorXcd::Zero(3);
  CHECK(phase_flow_cubic(z, 0.3, 2.0, 0.1).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXcd u = random_field(10, 1);
  CHECK((phase_flow_cubic(u, 0.3, 0.0, 0.1) - u).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXcd one(1);
  one << 1.0;
  const cplx r = phase_flow_cubic(one, pi / 2, 1.0, 1.0)(0);
  CHECK(r.real() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r.imag() == doctest::Approx(-1.0));
  const Eigen::VectorXcd w = phase_flow_cubic(u, 0.7, 3.0, 0.05);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(w(i)) == doctest::Approx(std::abs(u(i))).epsilon(1e-15));
}

TEST_CASE("potential plus cubic phase flow") {
  const Eigen::VectorXcd u = random_field(6, 2);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);
  CHECK((phase_flow_potential_cubic(u, zero, 0.2, 1.5, 0.1) - phase_flow_cubic(u, 0.2, 1.5, 0.1)).cwiseAbs().maxCoeff() <= 1e-14 * u.cwiseAbs().maxCoeff());
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(6, 0.8);
  const Eigen::VectorXcd g = phase_flow_potential_cubic(u, c, 0.2, 0.0, 0.1);
  const cplx phase = std::exp(cplx(0, -0.2 * 0.8 / 0.1));
  CHECK((g - phase * u).cwiseAbs().maxCoeff() < 1e-15);

  Eigen::VectorXcd U(2);
  U << 1.0, cplx(0, 1);
  Eigen::VectorXd v(2);
  v << pi, 0.0;
  const double eps = 0.3;
  const Eigen::VectorXcd out = phase_flow_potential_cubic(U, v, eps, 0.0, eps);
  CHECK(std::abs(out(0) - cplx(-1, 0)) < 1e-15);
  CHECK(std::abs(out(1) - cplx(0, 1)) < 1e-15);

  Eigen::VectorXd bad = zero;
  bad(2) = std::nan("");
  CHECK_THROWS_AS(phase_flow_potential_cubic(u, bad, 0.1, 1.0, 1.0), NumericalError);
}

TEST_CASE("eigenpairs of the free periodic pencil match the circulant formulas") {
  const int N = 32;
  const double eps = 0.25;
  auto mesh = testutil::line(0, 2 * pi, N);
  const AssembledOperators ops = assemble(mesh, testutil::zero(), eps);
  const EigenPropagator prop = eig_prepare(ops, true);
  const double h = mesh->h();
  std::vector<double> expect;
  for (int k = 0; k < N; ++k) {
    const double c = std::cos(2 * pi * k / N);
    expect.push_back(0.5 * eps * eps * ((2 - 2 * c) / h) / (h * (2 + c) / 3));
  }
  std::sort(expect.begin(), expect.end());
  for (int k = 0; k < N; ++k) CHECK(prop.Lambda(k) == doctest::Approx(expect[k]).epsilon(1e-10).scale(1.0));
  CHECK(std::abs(prop.Lambda(0)) < 1e-12);
  const Eigen::VectorXd p0 = prop.P.col(0);
  CHECK((p0.array() - p0(0)).abs().maxCoeff() < 1e-10);

  const Eigen::MatrixXd M(ops.M);
  CHECK((prop.P.transpose() * M * prop.P - Eigen::MatrixXd::Identity(N, N)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("eigen propagator: residual, zero step, semigroup, unitarity") {
  auto mesh = testutil::line(-pi, pi, 64);
  const AssembledOperators ops = assemble(mesh, harmonic(), 1.0 / 16);
  const EigenPropagator prop = eig_prepare(ops, true);
  const Eigen::MatrixXd H(ops.hamiltonian()), M(ops.M);
  const double res = (H * prop.P - M * prop.P * prop.Lambda.asDiagonal()).norm();
  CHECK(res <= 1e-8 * H.norm());

  const Eigen::VectorXcd U = random_field(64, 3);
  CHECK((eig_apply(prop, U, 0.0) - U).cwiseAbs().maxCoeff() < 1e-12 * U.cwiseAbs().maxCoeff());
  const Eigen::VectorXcd two = eig_apply(prop, eig_apply(prop, U, 0.01), 0.01);
  CHECK((two - eig_apply(prop, U, 0.02)).cwiseAbs().maxCoeff() < 1e-10 * U.cwiseAbs().maxCoeff());

  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXcd u = random_field(64, 100 + t);
    const double m0 = quadratic(ops.M, u);
    CHECK(std::abs(quadratic(ops.M, eig_apply(prop, u, 0.05)) - m0) <= 1e-10 * m0);
  }

  const AssembledOperators free_ops = assemble(mesh, testutil::zero(), 1.0 / 16);
  const EigenPropagator free_prop = eig_prepare(free_ops, true);
  const Eigen::VectorXcd c = Eigen::VectorXcd::Constant(64, cplx(0.3, 0.4));
  CHECK((eig_apply(free_prop, c, 0.7) - c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Crank-Nicolson: constants, unitarity, residual, consistency") {
  auto mesh = testutil::line(-pi, pi, 128);
  const AssembledOperators ops = assemble(mesh, harmonic(), 1.0 / 16);
  const CnFactor f = cn_prepare(ops, 0.01);
  const Eigen::VectorXcd c = Eigen::VectorXcd::Constant(128, cplx(1.0, -2.0));
  CHECK((cn_apply(f, c) - c).cwiseAbs().maxCoeff() < 1e-12);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXcd u = random_field(128, 200 + t);
    const Eigen::VectorXcd w = cn_apply(f, u);
    const double m0 = quadratic(ops.M, u);
    CHECK(std::abs(quadratic(ops.M, w) - m0) <= 1e-10 * m0);
    CHECK(f.residual(u, w) <= 1e-12);
  }
  const Eigen::VectorXcd U = project_l2(gaussian(), ops);
  std::vector<double> d;
  for (double dt : {1e-3, 5e-4, 2.5e-4}) d.push_back(l2(cn_apply(cn_prepare(ops, dt), U), U, ops));
  CHECK(d[0] / d[1] == doctest::Approx(2.0).epsilon(0.02));
  CHECK(d[1] / d[2] == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("linear SI is exact in time") {
  auto mesh = testutil::line(-pi, pi, 128);
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, harmonic(), 1.0 / 16));
  const Discretization space = Discretization::fem(ops);
  const RunResult a = simulate(space, Scheme::SI, 0.02, 1.0, 0.0, harmonic());
  const RunResult b = simulate(space, Scheme::SI, 0.01, 1.0, 0.0, harmonic());
  CHECK(l2(a.final_fine, b.final_fine, *ops) <= 1e-9);

  // Splitting symmetry: with lambda = 0 one SI step is one eigen step.
  const EigenPropagator prop = eig_prepare(*ops, true);
  const Eigen::VectorXcd U0 = initial_state(space, gaussian());
  const RunResult one = simulate(space, Scheme::SI, 0.01, 0.01, 0.0, harmonic());
  CHECK((eig_apply(prop, U0, 0.01) - one.final_fine).cwiseAbs().maxCoeff() <= 1e-12 * U0.cwiseAbs().maxCoeff());
}

TEST_CASE("stationary constant state, both schemes, both spaces") {
  auto mesh = testutil::line(-pi, pi, 60);
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, testutil::zero(), 1.0 / 8));
  auto pair = build_mesh_pair(mesh, 6);
  for (Scheme s : {Scheme::SI, Scheme::SII}) {
    BasisOptions o;
    o.include_potential = s == Scheme::SI;
    auto basis = std::make_shared<const MultiscaleBasis>(build_basis(*ops, pair, o));
    auto coarse = std::make_shared<const CoarseOperators>(project_operators(*basis, *ops));
    for (const Discretization& space : {Discretization::fem(ops), Discretization::msfem(ops, basis, coarse)}) {
      StepperConfig cfg;
      cfg.scheme = s;
      cfg.dt = 0.05;
      cfg.eps = 1.0 / 8;
      cfg.steps = 20;
      const Stepper st(cfg, space, Eigen::VectorXd::Zero(60));
      const RunResult r = run(st, initial_state(space, [](const Point&) { return cplx(0.6, 0.8); }));
      CHECK((r.final_fine.array() - cplx(0.6, 0.8)).abs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("time reversal returns the initial field") {
  auto mesh = testutil::line(-pi, pi, 256);
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, harmonic(), 1.0 / 16));
  const Discretization space = Discretization::fem(ops);
  for (Scheme s : {Scheme::SI, Scheme::SII}) {
    StepperConfig cfg;
    cfg.scheme = s;
    cfg.dt = 1e-2;
    cfg.eps = 1.0 / 16;
    cfg.lambda = 0.1;
    cfg.steps = 100;
    const Stepper fwd(cfg, space, nodal_values(*mesh, harmonic()));
    const Eigen::VectorXcd U0 = initial_state(space, gaussian());
    const RunResult there = run(fwd, U0);
    const RunResult back = run(fwd.reversed(), there.final_state);
    CHECK(l2(back.final_fine, U0, *ops) <= 1e-8);
  }
}

TEST_CASE("multiscale normalizations agree for linear dynamics") {
  auto mesh = testutil::line(-pi, pi, 240);
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, harmonic(), 1.0 / 8));
  auto pair = build_mesh_pair(mesh, 6);
  std::vector<Eigen::VectorXcd> finals;
  for (Normalization n : {Normalization::CoarseMass, Normalization::Unit}) {
    BasisOptions o;
    o.normalization = n;
    auto basis = std::make_shared<const MultiscaleBasis>(build_basis(*ops, pair, o));
    auto coarse = std::make_shared<const CoarseOperators>(project_operators(*basis, *ops));
    finals.push_back(simulate(Discretization::msfem(ops, basis, coarse), Scheme::SI, 0.01, 0.5, 0.0, harmonic()).final_fine);
  }
  CHECK(l2(finals[0], finals[1], *ops) <= 1e-8);
}

TEST_CASE("temporal order two for both schemes") {
  auto mesh = testutil::line(-pi, pi, 256);
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, harmonic(), 1.0 / 16));
  const Discretization space = Discretization::fem(ops);
  for (Scheme s : {Scheme::SI, Scheme::SII}) {
    const Eigen::VectorXcd ref = simulate(space, s, 5e-4, 0.5, 0.1, harmonic()).final_fine;
    const double e1 = l2(simulate(space, s, 1e-2, 0.5, 0.1, harmonic()).final_fine, ref, *ops);
    const double e2 = l2(simulate(space, s, 5e-3, 0.5, 0.1, harmonic()).final_fine, ref, *ops);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
  }
}

TEST_CASE("observables are recorded at the cadence and NaN aborts with the step") {
  auto mesh = testutil::line(-pi, pi, 64);
  auto ops = std::make_shared<const AssembledOperators>(assemble(mesh, harmonic(), 1.0 / 16));
  const Discretization space = Discretization::fem(ops);
  StepperConfig cfg;
  cfg.dt = 0.01;
  cfg.eps = 1.0 / 16;
  cfg.steps = 25;
  cfg.cadence = 10;
  cfg.record_energy = true;
  const Stepper st(cfg, space, nodal_values(*mesh, harmonic()));
  const RunResult r = run(st, initial_state(space, gaussian()));
  CHECK(r.series.t == std::vector<double>{0.0, 0.1, 0.2, 0.25});
  CHECK(r.series.mass.size() == 4);
  CHECK(r.series.energy.size() == 4);

  Eigen::VectorXcd bad = initial_state(space, gaussian());
  bad(7) = cplx(std::nan(""), 0.0);
  try {
    run(st, bad);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("large steps only warn") {
  StepperConfig cfg;
  cfg.dt = 0.5;
  cfg.eps = 0.1;
  cfg.validate();
  CHECK(cfg.large_step_warning);
  cfg.dt = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

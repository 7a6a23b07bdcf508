#pragma once

#include <complex>
#include <functional>
#include <memory>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "nls/mesh.hpp"

namespace nls {

using cplx = std::complex<double>;
using SpMat = Eigen::SparseMatrix<double>;
using ScalarFunction = std::function<double(const Point&)>;
using ComplexFunction = std::function<cplx(const Point&)>;

/// Nodal coefficients of a P1 wave function together with the mesh they live on.
struct WaveField {
  Eigen::VectorXcd values;
  std::shared_ptr<const Mesh> mesh;
  double t = 0.0;
};

/// P1 Galerkin matrices on a periodic mesh.
struct AssembledOperators {
  std::shared_ptr<const Mesh> mesh;
  SpMat M;
  SpMat S;
  SpMat V;
  double eps = 1.0;

  /// (eps^2/2) S + V.
  SpMat hamiltonian() const;
  /// (eps^2/2) S.
  SpMat kinetic() const;
};

enum class NormKind { L2, H1, L4 };

SpMat assemble_mass(const Mesh& mesh);
SpMat assemble_stiffness(const Mesh& mesh);
/// Weighted mass matrix (w phi_p, phi_q) by cell quadrature. Throws
/// NumericalError naming the cell if w is not finite at a quadrature node.
SpMat assemble_weighted_mass(const Mesh& mesh, const ScalarFunction& w);

AssembledOperators assemble(std::shared_ptr<const Mesh> mesh, const ScalarFunction& potential, double eps);

/// Values of f at the independent nodes.
Eigen::VectorXd nodal_values(const Mesh& mesh, const ScalarFunction& f);
Eigen::VectorXcd nodal_values(const Mesh& mesh, const ComplexFunction& f);

/// Load vector b_p = (f, phi_p) by cell quadrature.
Eigen::VectorXcd load_vector(const Mesh& mesh, const ComplexFunction& f);

/// L2 projection: solves M U = b with b_p = (f, phi_p).
Eigen::VectorXcd project_l2(const ComplexFunction& f, const AssembledOperators& ops);

/// Integral of w(x) |psi_h(x)|^2 by cell quadrature.
double integrate_weighted_density(const Mesh& mesh, const Eigen::VectorXcd& U, const ScalarFunction& w);
/// Integral of |psi_h|^4 by cell quadrature.
double integrate_quartic(const Mesh& mesh, const Eigen::VectorXcd& U);

double norm(const Eigen::VectorXcd& U, const AssembledOperators& ops, NormKind kind);

/// Norm of field_fine - P(field_other). With pair == nullptr both fields must
/// live on ops.mesh; otherwise field_other lives on pair->coarse and is
/// prolonged by nodal injection.
double error_between(const Eigen::VectorXcd& field_fine, const Eigen::VectorXcd& field_other,
                     const AssembledOperators& ops, const MeshPair* pair, NormKind kind);

/// Per-cell gradient energy of a real nodal vector, integral of |grad u|^2 over each cell.
Eigen::VectorXd cell_gradient_energy(const Mesh& mesh, const Eigen::VectorXd& u);

/// Complex quadratic form x^* A y for real symmetric A.
cplx form(const SpMat& A, const Eigen::VectorXcd& x, const Eigen::VectorXcd& y);
/// x^* A x for real symmetric A (imaginary part dropped).
double quadratic(const SpMat& A, const Eigen::VectorXcd& x);

}  // namespace nls

#include "nls/fem.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/SparseCholesky>

#include "nls/errors.hpp"
#include "nls/quadrature.hpp"

namespace nls {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Local matrices are pushed entry-by-entry from a symmetric local array so
// that (p,q) and (q,p) accumulate identical sums in identical order.
void push_local(const Mesh& mesh, int c, const double (&local)[3][3], Triplets& out) {
  const auto nodes = mesh.cell(c);
  const int nv = mesh.vertices_per_cell();
  for (int a = 0; a < nv; ++a) {
    for (int b = 0; b < nv; ++b) out.emplace_back(nodes[a], nodes[b], local[a][b]);
  }
}

SpMat from_triplets(const Mesh& mesh, const Triplets& t) {
  SpMat A(mesh.num_nodes(), mesh.num_nodes());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

void check_size(const Mesh& mesh, const Eigen::VectorXcd& U, const char* where) {
  if (U.size() != mesh.num_nodes()) {
    throw std::invalid_argument(std::string(where) + ": field length " + std::to_string(U.size()) +
                                " does not match mesh node count " + std::to_string(mesh.num_nodes()));
  }
}

// psi_h at quadrature node q of cell c.
cplx eval_at(const Mesh& mesh, int c, const std::array<double, 3>& bary, const Eigen::VectorXcd& U) {
  const auto nodes = mesh.cell(c);
  cplx s = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a) s += bary[a] * U[nodes[a]];
  return s;
}

}  // namespace

SpMat AssembledOperators::kinetic() const { return (0.5 * eps * eps) * S; }

SpMat AssembledOperators::hamiltonian() const { return SpMat((0.5 * eps * eps) * S + V); }

SpMat assemble_mass(const Mesh& mesh) {
  Triplets t;
  const int nv = mesh.vertices_per_cell();
  t.reserve(static_cast<std::size_t>(mesh.num_cells()) * nv * nv);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double m = mesh.cell_measure(c);
    double local[3][3] = {};
    if (mesh.dimension() == 1) {
      local[0][0] = local[1][1] = m / 3.0;
      local[0][1] = local[1][0] = m / 6.0;
    } else {
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) local[a][b] = (a == b ? 2.0 : 1.0) * m / 12.0;
    }
    push_local(mesh, c, local, t);
  }
  return from_triplets(mesh, t);
}

SpMat assemble_stiffness(const Mesh& mesh) {
  Triplets t;
  const int nv = mesh.vertices_per_cell();
  t.reserve(static_cast<std::size_t>(mesh.num_cells()) * nv * nv);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double m = mesh.cell_measure(c);
    double local[3][3] = {};
    if (mesh.dimension() == 1) {
      local[0][0] = local[1][1] = 1.0 / m;
      local[0][1] = local[1][0] = -1.0 / m;
    } else {
      const auto p = mesh.cell_points(c);
      double g[3][2];
      for (int i = 0; i < 3; ++i) {
        const Point& pj = p[(i + 1) % 3];
        const Point& pk = p[(i + 2) % 3];
        g[i][0] = (pj[1] - pk[1]) / (2.0 * m);
        g[i][1] = (pk[0] - pj[0]) / (2.0 * m);
      }
      for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
          local[a][b] = local[b][a] = m * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
      }
    }
    push_local(mesh, c, local, t);
  }
  return from_triplets(mesh, t);
}

SpMat assemble_weighted_mass(const Mesh& mesh, const ScalarFunction& w) {
  const CellRule& rule = cell_rule(mesh.dimension());
  const int nv = mesh.vertices_per_cell();
  Triplets t;
  t.reserve(static_cast<std::size_t>(mesh.num_cells()) * nv * nv);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double m = mesh.cell_measure(c);
    double local[3][3] = {};
    for (int q = 0; q < rule.size(); ++q) {
      const auto& bc = rule.bary[q];
      const double val = w(quadrature_point(mesh, c, bc));
      if (!std::isfinite(val)) {
        throw NumericalError("non-finite potential value in cell " + std::to_string(c));
      }
      const double wq = rule.weights[q] * m * val;
      for (int a = 0; a < nv; ++a)
        for (int b = a; b < nv; ++b) local[a][b] += wq * bc[a] * bc[b];
    }
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < a; ++b) local[a][b] = local[b][a];
    push_local(mesh, c, local, t);
  }
  return from_triplets(mesh, t);
}

AssembledOperators assemble(std::shared_ptr<const Mesh> mesh, const ScalarFunction& potential, double eps) {
  if (!mesh) throw std::invalid_argument("assemble: null mesh");
  if (!(eps > 0.0)) throw std::invalid_argument("assemble: eps must be positive");
  AssembledOperators ops;
  ops.M = assemble_mass(*mesh);
  ops.S = assemble_stiffness(*mesh);
  ops.V = assemble_weighted_mass(*mesh, potential);
  ops.eps = eps;
  ops.mesh = std::move(mesh);
  return ops;
}

Eigen::VectorXd nodal_values(const Mesh& mesh, const ScalarFunction& f) {
  Eigen::VectorXd v(mesh.num_nodes());
  for (int n = 0; n < mesh.num_nodes(); ++n) v[n] = f(mesh.node(n));
  return v;
}

Eigen::VectorXcd nodal_values(const Mesh& mesh, const ComplexFunction& f) {
  Eigen::VectorXcd v(mesh.num_nodes());
  for (int n = 0; n < mesh.num_nodes(); ++n) v[n] = f(mesh.node(n));
  return v;
}

Eigen::VectorXcd load_vector(const Mesh& mesh, const ComplexFunction& f) {
  const CellRule& rule = cell_rule(mesh.dimension());
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(mesh.num_nodes());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto nodes = mesh.cell(c);
    const double m = mesh.cell_measure(c);
    for (int q = 0; q < rule.size(); ++q) {
      const auto& bc = rule.bary[q];
      const cplx val = f(quadrature_point(mesh, c, bc)) * (rule.weights[q] * m);
      for (std::size_t a = 0; a < nodes.size(); ++a) b[nodes[a]] += bc[a] * val;
    }
  }
  return b;
}

Eigen::VectorXcd project_l2(const ComplexFunction& f, const AssembledOperators& ops) {
  const Eigen::VectorXcd b = load_vector(*ops.mesh, f);
  Eigen::SimplicialLDLT<SpMat> ldlt(ops.M);
  if (ldlt.info() != Eigen::Success) throw NumericalError("project_l2: mass matrix factorization failed");
  Eigen::VectorXcd U(b.size());
  U.real() = ldlt.solve(Eigen::VectorXd(b.real()));
  U.imag() = ldlt.solve(Eigen::VectorXd(b.imag()));
  const double res = (ops.M * U - b).norm();
  if (!(res <= 1e-12 * b.norm()) && b.norm() > 0.0) {
    throw NumericalError("project_l2: residual " + std::to_string(res) + " exceeds tolerance");
  }
  return U;
}

double integrate_weighted_density(const Mesh& mesh, const Eigen::VectorXcd& U, const ScalarFunction& w) {
  check_size(mesh, U, "integrate_weighted_density");
  const CellRule& rule = cell_rule(mesh.dimension());
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double m = mesh.cell_measure(c);
    double cs = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const auto& bc = rule.bary[q];
      const double val = w(quadrature_point(mesh, c, bc));
      if (!std::isfinite(val)) throw NumericalError("non-finite weight in cell " + std::to_string(c));
      cs += rule.weights[q] * val * std::norm(eval_at(mesh, c, bc, U));
    }
    s += cs * m;
  }
  return s;
}

double integrate_quartic(const Mesh& mesh, const Eigen::VectorXcd& U) {
  check_size(mesh, U, "integrate_quartic");
  const CellRule& rule = cell_rule(mesh.dimension());
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    double cs = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const double d = std::norm(eval_at(mesh, c, rule.bary[q], U));
      cs += rule.weights[q] * d * d;
    }
    s += cs * mesh.cell_measure(c);
  }
  return s;
}

Eigen::VectorXd cell_gradient_energy(const Mesh& mesh, const Eigen::VectorXd& u) {
  if (u.size() != mesh.num_nodes()) throw std::invalid_argument("cell_gradient_energy: length mismatch");
  Eigen::VectorXd e(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto nodes = mesh.cell(c);
    const double m = mesh.cell_measure(c);
    if (mesh.dimension() == 1) {
      const double d = u[nodes[1]] - u[nodes[0]];
      e[c] = d * d / m;
    } else {
      const auto p = mesh.cell_points(c);
      double gx = 0.0, gy = 0.0;
      for (int i = 0; i < 3; ++i) {
        const Point& pj = p[(i + 1) % 3];
        const Point& pk = p[(i + 2) % 3];
        gx += u[nodes[i]] * (pj[1] - pk[1]) / (2.0 * m);
        gy += u[nodes[i]] * (pk[0] - pj[0]) / (2.0 * m);
      }
      e[c] = m * (gx * gx + gy * gy);
    }
  }
  return e;
}

cplx form(const SpMat& A, const Eigen::VectorXcd& x, const Eigen::VectorXcd& y) {
  return x.dot(A * y);
}

double quadratic(const SpMat& A, const Eigen::VectorXcd& x) { return form(A, x, x).real(); }

double norm(const Eigen::VectorXcd& U, const AssembledOperators& ops, NormKind kind) {
  check_size(*ops.mesh, U, "norm");
  switch (kind) {
    case NormKind::L2:
      return std::sqrt(std::max(0.0, quadratic(ops.M, U)));
    case NormKind::H1:
      return std::sqrt(std::max(0.0, quadratic(ops.M, U) + quadratic(ops.S, U)));
    case NormKind::L4:
      return std::pow(integrate_quartic(*ops.mesh, U), 0.25);
  }
  return 0.0;
}

double error_between(const Eigen::VectorXcd& field_fine, const Eigen::VectorXcd& field_other,
                     const AssembledOperators& ops, const MeshPair* pair, NormKind kind) {
  check_size(*ops.mesh, field_fine, "error_between");
  if (pair == nullptr) {
    check_size(*ops.mesh, field_other, "error_between");
    return norm(field_fine - field_other, ops, kind);
  }
  if (!pair->fine->same_layout(*ops.mesh)) {
    throw std::invalid_argument("error_between: mesh pair fine mesh differs from the operators' mesh");
  }
  check_size(*pair->coarse, field_other, "error_between");
  const Eigen::VectorXcd prolonged = pair->prolongation.cast<cplx>() * field_other;
  return norm(field_fine - prolonged, ops, kind);
}

}  // namespace nls

#include "nls/msbasis.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <spdlog/spdlog.h>

#include "nls/errors.hpp"

namespace nls {

SpMat constraint_matrix(const MeshPair& pair, const SpMat& fine_mass) {
  SpMat B = SpMat(pair.prolongation.transpose()) * fine_mass;
  B.makeCompressed();
  return B;
}

Eigen::VectorXcd clement_interpolate(const Eigen::VectorXcd& fine_field, const MeshPair& pair,
                                     const AssembledOperators& fine) {
  if (!pair.fine->same_layout(*fine.mesh) || fine_field.size() != fine.mesh->num_nodes()) {
    throw std::invalid_argument("clement_interpolate: field does not live on the fine mesh of the pair");
  }
  const SpMat B = constraint_matrix(pair, fine.M);
  const Eigen::VectorXd lambda = B * Eigen::VectorXd::Ones(B.cols());
  Eigen::VectorXcd bf = B.cast<cplx>() * fine_field;
  return bf.cwiseQuotient(lambda.cast<cplx>());
}

namespace {

void check_rank(const SpMat& B) {
  const SpMat G = B * SpMat(B.transpose());
  Eigen::SimplicialLDLT<SpMat> ldlt(G);
  if (ldlt.info() != Eigen::Success) throw NumericalError("build_basis: constraint Gram factorization failed");
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 1e-14 * dmax)) {
    throw NumericalError("build_basis: constraint matrix B is rank deficient (coarse space not injected correctly)");
  }
}

void log_if_indefinite(const SpMat& A) {
  Eigen::SimplicialLDLT<SpMat> ldlt(A);
  if (ldlt.info() != Eigen::Success) return;
  const Eigen::VectorXd d = ldlt.vectorD();
  const double tol = 1e-12 * d.cwiseAbs().maxCoeff();
  const auto negative = (d.array() < -tol).count();
  if (negative > 0) spdlog::debug("build_basis: energy matrix is indefinite ({} negative pivots)", negative);
}

}  // namespace

MultiscaleBasis build_basis(const AssembledOperators& fine, std::shared_ptr<const MeshPair> pair,
                            const BasisOptions& options) {
  if (!pair) throw std::invalid_argument("build_basis: null mesh pair");
  if (!pair->fine->same_layout(*fine.mesh)) {
    throw std::invalid_argument("build_basis: operators are not assembled on the pair's fine mesh");
  }
  const int nh = fine.mesh->num_nodes();
  const int nH = pair->coarse->num_nodes();

  MultiscaleBasis basis;
  basis.pair = pair;
  basis.eps = fine.eps;
  basis.include_potential = options.include_potential;
  basis.A = options.include_potential ? fine.hamiltonian() : fine.kinetic();
  basis.B = constraint_matrix(*pair, fine.M);
  basis.lambda = basis.B * Eigen::VectorXd::Ones(nh);
  basis.weights = options.normalization == Normalization::CoarseMass ? basis.lambda : Eigen::VectorXd::Ones(nH);

  check_rank(basis.B);
  if (options.include_potential) log_if_indefinite(basis.A);

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(basis.A.nonZeros() + 2 * basis.B.nonZeros());
  for (int k = 0; k < basis.A.outerSize(); ++k)
    for (SpMat::InnerIterator it(basis.A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < basis.B.outerSize(); ++k) {
    for (SpMat::InnerIterator it(basis.B, k); it; ++it) {
      t.emplace_back(nh + it.row(), it.col(), it.value());
      t.emplace_back(it.col(), nh + it.row(), it.value());
    }
  }
  SpMat K(nh + nH, nh + nH);
  K.setFromTriplets(t.begin(), t.end());
  K.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) {
    throw NumericalError("build_basis: saddle-point factorization failed (size " + std::to_string(nh + nH) +
                         ", |K|_1 = " + std::to_string(K.cwiseAbs().sum()) + "): " + lu.lastErrorMessage());
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nh + nH, nH);
  rhs.bottomRows(nH).diagonal() = basis.weights;
  Eigen::MatrixXd x = lu.solve(rhs);
  // One step of iterative refinement keeps the constraint residual at round-off.
  const Eigen::MatrixXd r = rhs - K * x;
  x += lu.solve(r);
  basis.C = x.topRows(nh);

  const double res = constraint_residual(basis);
  const double tol = 1e-8 * basis.weights.maxCoeff();
  if (!(res <= tol)) {
    throw NumericalError("build_basis: constraint residual " + std::to_string(res) + " exceeds " +
                         std::to_string(tol) + "; saddle matrix is ill-conditioned");
  }
  spdlog::debug("build_basis: N_h={}, N_H={}, constraint residual {:.3e}", nh, nH, res);
  return basis;
}

double constraint_residual(const MultiscaleBasis& basis) {
  Eigen::MatrixXd BC = basis.B * basis.C;
  BC.diagonal() -= basis.weights;
  return BC.cwiseAbs().maxCoeff();
}

CoarseOperators project_operators(const MultiscaleBasis& basis, const AssembledOperators& fine) {
  if (basis.C.rows() != fine.mesh->num_nodes()) {
    throw std::invalid_argument("project_operators: basis and operators have different fine sizes");
  }
  auto congruence = [&](const SpMat& X) {
    const Eigen::MatrixXd XC = X * basis.C;
    Eigen::MatrixXd P = basis.C.transpose() * XC;
    return Eigen::MatrixXd(0.5 * (P + P.transpose()));
  };
  CoarseOperators ops;
  ops.M = congruence(fine.M);
  ops.S = congruence(fine.S);
  ops.V = congruence(fine.V);
  ops.eps = fine.eps;
  return ops;
}

Eigen::VectorXcd reconstruct_fine(const MultiscaleBasis& basis, const Eigen::VectorXcd& coarse) {
  if (coarse.size() != basis.C.cols()) {
    throw std::invalid_argument("reconstruct_fine: coefficient length " + std::to_string(coarse.size()) +
                                " does not match coarse node count " + std::to_string(basis.C.cols()));
  }
  Eigen::VectorXcd out(basis.C.rows());
  out.real() = basis.C * coarse.real();
  out.imag() = basis.C * coarse.imag();
  return out;
}

Eigen::VectorXd kernel_component(const MultiscaleBasis& basis, const Eigen::VectorXd& w) {
  const Eigen::VectorXd coeff = (basis.B * w).cwiseQuotient(basis.weights);
  return w - basis.C * coeff;
}

std::vector<double> decay_profile(const MultiscaleBasis& basis, int p, int l_max) {
  if (p < 0 || p >= basis.C.cols()) throw std::out_of_range("decay_profile: coarse node out of range");
  if (l_max < 1) throw std::invalid_argument("decay_profile: l_max must be at least 1");
  const MeshPair& pair = *basis.pair;
  const Eigen::VectorXd energy = cell_gradient_energy(*pair.fine, basis.C.col(p));
  std::vector<int> owner(pair.fine->num_cells());
  for (int c = 0; c < pair.fine->num_cells(); ++c) owner[c] = pair.coarse_cell_of(c);

  std::vector<double> tails;
  for (int l = 0; l <= l_max; ++l) {
    const NodalPatch patch = nodal_patch(pair, p, l);
    std::vector<char> inside(pair.coarse->num_cells(), 0);
    for (int c : patch.cells) inside[c] = 1;
    double e = 0.0;
    for (int c = 0; c < pair.fine->num_cells(); ++c) {
      if (!inside[owner[c]]) e += energy[c];
    }
    tails.push_back(std::sqrt(e));
  }
  return tails;
}

}  // namespace nls

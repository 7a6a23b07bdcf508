#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "nls/fem.hpp"
#include "nls/mesh.hpp"

namespace nls {

/// Right-hand side scaling of the basis constraints (phi_p, phi_q^H) = w_p delta_pq.
enum class Normalization {
  CoarseMass,  // w_p = (1, phi_p^H)
  Unit,        // w_p = 1
};

struct BasisOptions {
  /// Include V in the energy a(u, w) = (eps^2/2)(grad u, grad w) + (v u, w).
  bool include_potential = true;
  Normalization normalization = Normalization::CoarseMass;
};

/// Global multiscale basis: column p of C holds the fine nodal values of phi_p.
struct MultiscaleBasis {
  std::shared_ptr<const MeshPair> pair;
  Eigen::MatrixXd C;
  /// (1, phi_p^H) per coarse node, whatever the normalization.
  Eigen::VectorXd lambda;
  /// Constraint right-hand side actually used.
  Eigen::VectorXd weights;
  double eps = 1.0;
  bool include_potential = true;
  /// Energy matrix A and constraint matrix B used in the construction.
  SpMat A;
  SpMat B;
};

/// Galerkin matrices of the multiscale space (dense, N_H x N_H).
struct CoarseOperators {
  Eigen::MatrixXd M;
  Eigen::MatrixXd S;
  Eigen::MatrixXd V;
  double eps = 1.0;

  Eigen::MatrixXd hamiltonian() const { return 0.5 * eps * eps * S + V; }
};

/// B_{q,s} = (phi_s^h, phi_q^H), shape N_H x N_h.
SpMat constraint_matrix(const MeshPair& pair, const SpMat& fine_mass);

/// Weighted Clement coefficients (f, phi_p^H) / (1, phi_p^H).
Eigen::VectorXcd clement_interpolate(const Eigen::VectorXcd& fine_field, const MeshPair& pair,
                                     const AssembledOperators& fine);

/// Solve the constrained energy minimization for every coarse node with one
/// factorization of the KKT matrix [A B^T; B 0].
MultiscaleBasis build_basis(const AssembledOperators& fine, std::shared_ptr<const MeshPair> pair,
                            const BasisOptions& options = {});

CoarseOperators project_operators(const MultiscaleBasis& basis, const AssembledOperators& fine);

/// C * coarse.
Eigen::VectorXcd reconstruct_fine(const MultiscaleBasis& basis, const Eigen::VectorXcd& coarse);

/// Maps a fine vector into the Clement kernel W_h: w - C diag(weights)^-1 B w.
Eigen::VectorXd kernel_component(const MultiscaleBasis& basis, const Eigen::VectorXd& w);

/// Max-norm constraint residual |B C - diag(weights)|.
double constraint_residual(const MultiscaleBasis& basis);

/// Tail energies e_l = |grad phi_p|_{L2(D \ D_l)} for l = 0..l_max.
std::vector<double> decay_profile(const MultiscaleBasis& basis, int p, int l_max);

}  // namespace nls

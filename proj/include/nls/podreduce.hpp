#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nls/fem.hpp"
#include "nls/msbasis.hpp"
#include "nls/potential.hpp"

namespace nls {

/// Mean snapshot and M-orthonormal POD modes of one basis function across samples.
struct PodNodeBasis {
  int node = 0;
  Eigen::VectorXd mean;
  /// Retained modes as columns (possibly fewer than requested when the snapshots are degenerate).
  Eigen::MatrixXd modes;
  /// Leading singular values of the fluctuation snapshots, nonincreasing, length = requested m_p.
  Eigen::VectorXd singular_values;
  int m_p = 0;
};

/// Reduced matrices of one node for the affine online assembly.
struct PodAffineNode {
  Eigen::MatrixXd KS;               // Z^T S Z
  Eigen::MatrixXd K0;               // Z^T Vbar Z
  std::vector<Eigen::MatrixXd> Kj;  // Z^T V_j Z
  Eigen::MatrixXd G;                // B Z
};

struct PodBasisSet {
  std::vector<PodNodeBasis> nodes;
  int Q = 0;
  int m_p = 0;
  double eps = 1.0;
  BasisOptions options;
  std::shared_ptr<const MeshPair> pair;
  std::shared_ptr<const PotentialModel> model;
  /// Fine mass, stiffness and constraint data reused online.
  SpMat M, S, B;
  Eigen::VectorXd lambda;
  Eigen::VectorXd weights;
  std::vector<PodAffineNode> affine;
};

/// Builds a full basis per offline sample and compresses each node's snapshots.
PodBasisSet offline_build(std::shared_ptr<const PotentialModel> model, const std::vector<Eigen::VectorXd>& offline_xi,
                          std::shared_ptr<const MeshPair> pair, double eps, int m_p, const BasisOptions& options = {},
                          int workers = 1);

/// Per-node reduced solve: constraints in the least-squares sense first, the
/// energy minimized over what the constraints leave free.
MultiscaleBasis online_build(const PodBasisSet& pod, const PotentialSample& sample);

/// Reduced matrices for every node; called by offline_build and load_pod.
void prepare_affine(PodBasisSet& pod);

/// Stable content hashes used in the serialized manifest.
std::uint64_t mesh_pair_hash(const MeshPair& pair);
std::uint64_t model_fingerprint(const PotentialModel& model, const Mesh& mesh);

/// Writes pod_manifest.json and pod_data.bin into dir.
void save_pod(const PodBasisSet& pod, const std::string& dir);
/// Reads a set written by save_pod; the manifest must match pair, eps and model.
PodBasisSet load_pod(const std::string& dir, std::shared_ptr<const PotentialModel> model,
                     std::shared_ptr<const MeshPair> pair, double eps);

}  // namespace nls

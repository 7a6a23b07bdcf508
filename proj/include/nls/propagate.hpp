#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "nls/fem.hpp"
#include "nls/linalg.hpp"
#include "nls/msbasis.hpp"
#include "nls/observables.hpp"

namespace nls {

/// U'_p = exp(-i lambda tau |U_p|^2 / eps) U_p.
Eigen::VectorXcd phase_flow_cubic(const Eigen::VectorXcd& U, double tau, double lambda, double eps);

/// U'_p = exp(-i tau (v_p + lambda |U_p|^2) / eps) U_p.
Eigen::VectorXcd phase_flow_potential_cubic(const Eigen::VectorXcd& U, const Eigen::VectorXd& v, double tau,
                                            double lambda, double eps);

/// Generalized eigendecomposition H P = M P diag(Lambda) with P^T M P = I.
struct EigenPropagator {
  Eigen::MatrixXd P;
  /// P^T M, so that P^{-1} is never formed.
  Eigen::MatrixXd PtM;
  Eigen::VectorXd Lambda;
  double eps = 1.0;
};

EigenPropagator eig_prepare(const RealMatrix& H, const RealMatrix& M, double eps);
/// with_potential selects H = (eps^2/2) S + V, otherwise (eps^2/2) S.
EigenPropagator eig_prepare(const AssembledOperators& ops, bool with_potential);
EigenPropagator eig_prepare(const CoarseOperators& ops, bool with_potential);
/// Same as eig_prepare(H, M, eps) but memoized by a content hash of (H, M, eps).
std::shared_ptr<const EigenPropagator> eig_prepare_cached(const RealMatrix& H, const RealMatrix& M, double eps);

/// U' = P exp(-i dt Lambda / eps) P^T M U.
Eigen::VectorXcd eig_apply(const EigenPropagator& prop, const Eigen::VectorXcd& U, double dt);

/// Crank-Nicolson factor for i M (U' - U)/dt = (eps/2) S (U' + U)/2.
class CnFactor {
 public:
  CnFactor(const RealMatrix& M, const RealMatrix& S, double dt, double eps);
  Eigen::VectorXcd apply(const Eigen::VectorXcd& U) const;
  double dt() const { return dt_; }
  double eps() const { return eps_; }
  /// Relative residual of the last solve-like check on U.
  double residual(const Eigen::VectorXcd& U, const Eigen::VectorXcd& Unew) const;

 private:
  using SparseC = Eigen::SparseMatrix<cplx>;
  SparseC lhs_sparse_, rhs_sparse_;
  std::shared_ptr<Eigen::SparseLU<SparseC>> sparse_lu_;
  Eigen::MatrixXcd lhs_dense_, rhs_dense_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> dense_lu_;
  bool sparse_ = true;
  double dt_;
  double eps_;
};

CnFactor cn_prepare(const AssembledOperators& ops, double dt);
Eigen::VectorXcd cn_apply(const CnFactor& factor, const Eigen::VectorXcd& U);

enum class Scheme { SI, SII };
enum class SpaceKind { FEM, MsFEM };
/// How a fine field is mapped back to multiscale coefficients after a nodal phase.
enum class Compression {
  L2,       // (M^ms)^-1 C^T M^h U
  Clement,  // diag(w)^-1 B U
};

struct StepperConfig {
  Scheme scheme = Scheme::SI;
  double dt = 1e-3;
  double eps = 1.0;
  double lambda = 0.0;
  int steps = 0;
  /// Record observables every cadence steps (and at t = 0 and the final step). 0 disables.
  int cadence = 0;
  bool record_mass = true;
  bool record_energy = false;
  bool record_moment = false;
  Point moment_center{0.0, 0.0};
  bool keep_trajectory = false;
  /// True when dt >= eps, set by validate().
  bool large_step_warning = false;

  void validate();
};

/// The space in which the linear flow is computed: the fine FEM space or a
/// multiscale space reconstructed through C.
class Discretization {
 public:
  static Discretization fem(std::shared_ptr<const AssembledOperators> fine);
  static Discretization msfem(std::shared_ptr<const AssembledOperators> fine,
                              std::shared_ptr<const MultiscaleBasis> basis,
                              std::shared_ptr<const CoarseOperators> coarse, Compression compression = Compression::L2);

  SpaceKind kind() const { return kind_; }
  int state_size() const;
  const AssembledOperators& fine() const { return *fine_; }
  const std::shared_ptr<const AssembledOperators>& fine_ptr() const { return fine_; }
  const MultiscaleBasis* basis() const { return basis_.get(); }
  const CoarseOperators* coarse() const { return coarse_.get(); }

  RealMatrix mass() const;
  RealMatrix stiffness() const;
  RealMatrix hamiltonian() const;

  Eigen::VectorXcd to_fine(const Eigen::VectorXcd& state) const;
  Eigen::VectorXcd from_fine(const Eigen::VectorXcd& fine) const;

 private:
  SpaceKind kind_ = SpaceKind::FEM;
  std::shared_ptr<const AssembledOperators> fine_;
  std::shared_ptr<const MultiscaleBasis> basis_;
  std::shared_ptr<const CoarseOperators> coarse_;
  Compression compression_ = Compression::L2;
  // Dense compression map R with state = R * fine.
  std::shared_ptr<const Eigen::MatrixXd> compress_;
};

/// One Strang step of either scheme. Immutable once built; reentrant.
class Stepper {
 public:
  /// nodal_potential holds v at the fine nodes (used by SII only).
  Stepper(const StepperConfig& cfg, const Discretization& space, const Eigen::VectorXd& nodal_potential);

  Eigen::VectorXcd step(const Eigen::VectorXcd& state) const;
  /// Stepper for -dt; composing n forward and n reversed steps is the identity up to round-off.
  Stepper reversed() const;
  const StepperConfig& config() const { return cfg_; }
  const Discretization& space() const { return space_; }

 private:
  Eigen::VectorXcd half_phase(const Eigen::VectorXcd& state) const;

  StepperConfig cfg_;
  Discretization space_;
  Eigen::VectorXd potential_;
  std::shared_ptr<const EigenPropagator> eig_;
  std::shared_ptr<const CnFactor> cn_;
};

struct RunResult {
  Eigen::VectorXcd final_state;
  Eigen::VectorXcd final_fine;
  ObservableSeries series;
  std::vector<Eigen::VectorXcd> trajectory;
};

/// Steps the initial state cfg.steps times. Throws NumericalError naming the
/// step on the first non-finite value.
RunResult run(const Stepper& stepper, const Eigen::VectorXcd& initial_state);

/// Initial state in the given space: L2 projection on the fine mesh, then
/// compression for the multiscale space.
Eigen::VectorXcd initial_state(const Discretization& space, const ComplexFunction& psi0);

}  // namespace nls

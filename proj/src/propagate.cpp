#include "nls/propagate.hpp"

#include <cmath>
#include <list>
#include <mutex>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "nls/errors.hpp"

namespace nls {

Eigen::VectorXcd phase_flow_cubic(const Eigen::VectorXcd& U, double tau, double lambda, double eps) {
  if (lambda == 0.0 || tau == 0.0) return U;
  Eigen::VectorXcd out(U.size());
  const double c = lambda * tau / eps;
  for (Eigen::Index p = 0; p < U.size(); ++p) out[p] = std::polar(1.0, -c * std::norm(U[p])) * U[p];
  return out;
}

Eigen::VectorXcd phase_flow_potential_cubic(const Eigen::VectorXcd& U, const Eigen::VectorXd& v, double tau,
                                            double lambda, double eps) {
  if (v.size() != U.size()) throw std::invalid_argument("phase_flow_potential_cubic: potential length mismatch");
  Eigen::VectorXcd out(U.size());
  const double c = tau / eps;
  for (Eigen::Index p = 0; p < U.size(); ++p) {
    if (!std::isfinite(v[p])) throw NumericalError("phase_flow_potential_cubic: non-finite potential at node " + std::to_string(p));
    out[p] = std::polar(1.0, -c * (v[p] + lambda * std::norm(U[p]))) * U[p];
  }
  return out;
}

EigenPropagator eig_prepare(const RealMatrix& H, const RealMatrix& M, double eps) {
  if (H.rows() != M.rows()) throw std::invalid_argument("eig_prepare: matrix sizes differ");
  const Eigen::MatrixXd Hd = H.dense();
  const Eigen::MatrixXd Md = M.dense();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Hd, Md, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(Md);
    throw NumericalError("eig_prepare: generalized eigensolver failed for size " + std::to_string(Hd.rows()) +
                         " (mass matrix rcond estimate " + std::to_string(ldlt.rcond()) + ")");
  }
  EigenPropagator prop;
  prop.P = es.eigenvectors();
  prop.Lambda = es.eigenvalues();
  prop.PtM = (Md * prop.P).transpose();
  prop.eps = eps;
  return prop;
}

EigenPropagator eig_prepare(const AssembledOperators& ops, bool with_potential) {
  return eig_prepare(RealMatrix(with_potential ? ops.hamiltonian() : ops.kinetic()), RealMatrix(ops.M), ops.eps);
}

EigenPropagator eig_prepare(const CoarseOperators& ops, bool with_potential) {
  Eigen::MatrixXd H = 0.5 * ops.eps * ops.eps * ops.S;
  if (with_potential) H += ops.V;
  return eig_prepare(RealMatrix(H), RealMatrix(ops.M), ops.eps);
}

std::shared_ptr<const EigenPropagator> eig_prepare_cached(const RealMatrix& H, const RealMatrix& M, double eps) {
  static std::mutex mutex;
  static std::list<std::pair<std::uint64_t, std::shared_ptr<const EigenPropagator>>> cache;
  constexpr std::size_t capacity = 4;

  std::uint64_t key = content_hash(H);
  key = content_hash(M, key);
  key = fnv1a(&eps, sizeof eps, key);
  {
    std::lock_guard lock(mutex);
    for (auto it = cache.begin(); it != cache.end(); ++it) {
      if (it->first == key) {
        cache.splice(cache.begin(), cache, it);
        return cache.front().second;
      }
    }
  }
  auto prop = std::make_shared<const EigenPropagator>(eig_prepare(H, M, eps));
  std::lock_guard lock(mutex);
  cache.emplace_front(key, prop);
  if (cache.size() > capacity) cache.pop_back();
  return prop;
}

Eigen::VectorXcd eig_apply(const EigenPropagator& prop, const Eigen::VectorXcd& U, double dt) {
  if (U.size() != prop.P.rows()) throw std::invalid_argument("eig_apply: vector length mismatch");
  Eigen::VectorXcd coeff = real_times(prop.PtM, U);
  const double c = dt / prop.eps;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) coeff[k] *= std::polar(1.0, -c * prop.Lambda[k]);
  return real_times(prop.P, coeff);
}

CnFactor::CnFactor(const RealMatrix& M, const RealMatrix& S, double dt, double eps) : dt_(dt), eps_(eps) {
  if (dt == 0.0 || !std::isfinite(dt)) throw std::invalid_argument("cn_prepare: dt must be nonzero and finite");
  if (M.rows() != S.rows()) throw std::invalid_argument("cn_prepare: matrix sizes differ");
  const double alpha = dt * eps / 4.0;
  const cplx I(0.0, 1.0);
  sparse_ = M.is_sparse() && S.is_sparse();
  if (sparse_) {
    const Eigen::SparseMatrix<cplx> Mc = M.sparse().cast<cplx>();
    const Eigen::SparseMatrix<cplx> Sc = S.sparse().cast<cplx>();
    lhs_sparse_ = I * Mc - cplx(alpha) * Sc;
    rhs_sparse_ = I * Mc + cplx(alpha) * Sc;
    lhs_sparse_.makeCompressed();
    sparse_lu_ = std::make_shared<Eigen::SparseLU<SparseC>>();
    sparse_lu_->compute(lhs_sparse_);
    if (sparse_lu_->info() != Eigen::Success) {
      throw NumericalError("cn_prepare: factorization failed: " + sparse_lu_->lastErrorMessage());
    }
  } else {
    const Eigen::MatrixXcd Mc = M.dense().cast<cplx>();
    const Eigen::MatrixXcd Sc = S.dense().cast<cplx>();
    lhs_dense_ = I * Mc - cplx(alpha) * Sc;
    rhs_dense_ = I * Mc + cplx(alpha) * Sc;
    dense_lu_.compute(lhs_dense_);
    if (!std::isfinite(dense_lu_.rcond()) || dense_lu_.rcond() == 0.0) {
      throw NumericalError("cn_prepare: dense factorization is singular");
    }
  }
}

Eigen::VectorXcd CnFactor::apply(const Eigen::VectorXcd& U) const {
  if (sparse_) {
    if (U.size() != lhs_sparse_.rows()) throw std::invalid_argument("cn_apply: vector length mismatch");
    return sparse_lu_->solve(Eigen::VectorXcd(rhs_sparse_ * U));
  }
  if (U.size() != lhs_dense_.rows()) throw std::invalid_argument("cn_apply: vector length mismatch");
  return dense_lu_.solve(rhs_dense_ * U);
}

double CnFactor::residual(const Eigen::VectorXcd& U, const Eigen::VectorXcd& Unew) const {
  const Eigen::VectorXcd b = sparse_ ? Eigen::VectorXcd(rhs_sparse_ * U) : Eigen::VectorXcd(rhs_dense_ * U);
  const Eigen::VectorXcd r = sparse_ ? Eigen::VectorXcd(lhs_sparse_ * Unew - b) : Eigen::VectorXcd(lhs_dense_ * Unew - b);
  const double bn = b.norm();
  return bn > 0.0 ? r.norm() / bn : r.norm();
}

CnFactor cn_prepare(const AssembledOperators& ops, double dt) {
  return CnFactor(RealMatrix(ops.M), RealMatrix(ops.S), dt, ops.eps);
}

Eigen::VectorXcd cn_apply(const CnFactor& factor, const Eigen::VectorXcd& U) { return factor.apply(U); }

void StepperConfig::validate() {
  if (!(std::isfinite(dt) && dt > 0.0)) throw ConfigError("time step must be positive");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (steps < 0) throw ConfigError("step count must be nonnegative");
  if (cadence < 0) throw ConfigError("observable cadence must be nonnegative");
  large_step_warning = dt >= eps;
  if (large_step_warning) {
    spdlog::warn("time step {} is not below eps = {}; the error bounds assume dt < eps", dt, eps);
  }
}

Discretization Discretization::fem(std::shared_ptr<const AssembledOperators> fine) {
  if (!fine) throw std::invalid_argument("Discretization::fem: null operators");
  Discretization d;
  d.kind_ = SpaceKind::FEM;
  d.fine_ = std::move(fine);
  return d;
}

Discretization Discretization::msfem(std::shared_ptr<const AssembledOperators> fine,
                                     std::shared_ptr<const MultiscaleBasis> basis,
                                     std::shared_ptr<const CoarseOperators> coarse, Compression compression) {
  if (!fine || !basis || !coarse) throw std::invalid_argument("Discretization::msfem: null component");
  if (basis->C.rows() != fine->mesh->num_nodes() || coarse->M.rows() != basis->C.cols()) {
    throw std::invalid_argument("Discretization::msfem: inconsistent shapes");
  }
  Discretization d;
  d.kind_ = SpaceKind::MsFEM;
  d.fine_ = std::move(fine);
  d.basis_ = std::move(basis);
  d.coarse_ = std::move(coarse);
  d.compression_ = compression;
  if (compression == Compression::L2) {
    const Eigen::MatrixXd CtM = (d.fine_->M * d.basis_->C).transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(d.coarse_->M);
    if (llt.info() != Eigen::Success) throw NumericalError("multiscale mass matrix is not positive definite");
    d.compress_ = std::make_shared<const Eigen::MatrixXd>(llt.solve(CtM));
  } else {
    const Eigen::MatrixXd B(d.basis_->B);
    d.compress_ = std::make_shared<const Eigen::MatrixXd>(d.basis_->weights.cwiseInverse().asDiagonal() * B);
  }
  return d;
}

int Discretization::state_size() const {
  return kind_ == SpaceKind::FEM ? fine_->mesh->num_nodes() : static_cast<int>(coarse_->M.rows());
}

RealMatrix Discretization::mass() const {
  return kind_ == SpaceKind::FEM ? RealMatrix(fine_->M) : RealMatrix(coarse_->M);
}

RealMatrix Discretization::stiffness() const {
  return kind_ == SpaceKind::FEM ? RealMatrix(fine_->S) : RealMatrix(coarse_->S);
}

RealMatrix Discretization::hamiltonian() const {
  return kind_ == SpaceKind::FEM ? RealMatrix(fine_->hamiltonian()) : RealMatrix(coarse_->hamiltonian());
}

Eigen::VectorXcd Discretization::to_fine(const Eigen::VectorXcd& state) const {
  if (state.size() != state_size()) throw std::invalid_argument("to_fine: state length mismatch");
  if (kind_ == SpaceKind::FEM) return state;
  return real_times(basis_->C, state);
}

Eigen::VectorXcd Discretization::from_fine(const Eigen::VectorXcd& fine) const {
  if (fine.size() != fine_->mesh->num_nodes()) throw std::invalid_argument("from_fine: field length mismatch");
  if (kind_ == SpaceKind::FEM) return fine;
  return real_times(*compress_, fine);
}

Stepper::Stepper(const StepperConfig& cfg, const Discretization& space, const Eigen::VectorXd& nodal_potential)
    : cfg_(cfg), space_(space), potential_(nodal_potential) {
  if (cfg_.scheme == Scheme::SI) {
    eig_ = eig_prepare_cached(space_.hamiltonian(), space_.mass(), cfg_.eps);
  } else {
    if (potential_.size() != space_.fine().mesh->num_nodes()) {
      throw std::invalid_argument("Stepper: nodal potential must hold one value per fine node");
    }
    cn_ = std::make_shared<const CnFactor>(space_.mass(), space_.stiffness(), cfg_.dt, cfg_.eps);
  }
}

Stepper Stepper::reversed() const {
  Stepper r = *this;
  r.cfg_.dt = -cfg_.dt;
  if (cn_) r.cn_ = std::make_shared<const CnFactor>(space_.mass(), space_.stiffness(), -cfg_.dt, cfg_.eps);
  return r;
}

Eigen::VectorXcd Stepper::half_phase(const Eigen::VectorXcd& state) const {
  const double tau = 0.5 * cfg_.dt;
  if (cfg_.scheme == Scheme::SI) {
    if (cfg_.lambda == 0.0) return state;
    if (space_.kind() == SpaceKind::FEM) return phase_flow_cubic(state, tau, cfg_.lambda, cfg_.eps);
    return space_.from_fine(phase_flow_cubic(space_.to_fine(state), tau, cfg_.lambda, cfg_.eps));
  }
  if (space_.kind() == SpaceKind::FEM) return phase_flow_potential_cubic(state, potential_, tau, cfg_.lambda, cfg_.eps);
  return space_.from_fine(phase_flow_potential_cubic(space_.to_fine(state), potential_, tau, cfg_.lambda, cfg_.eps));
}

Eigen::VectorXcd Stepper::step(const Eigen::VectorXcd& state) const {
  Eigen::VectorXcd u = half_phase(state);
  u = cfg_.scheme == Scheme::SI ? eig_apply(*eig_, u, cfg_.dt) : cn_->apply(u);
  return half_phase(u);
}

RunResult run(const Stepper& stepper, const Eigen::VectorXcd& initial) {
  const StepperConfig& cfg = stepper.config();
  const Discretization& space = stepper.space();
  const AssembledOperators& fine = space.fine();
  if (initial.size() != space.state_size()) throw std::invalid_argument("run: initial state length mismatch");

  SpMat moment;
  if (cfg.cadence > 0 && cfg.record_moment) moment = second_moment_matrix(*fine.mesh, cfg.moment_center);

  RunResult result;
  auto record = [&](int n, const Eigen::VectorXcd& state) {
    const Eigen::VectorXcd U = space.to_fine(state);
    result.series.t.push_back(n * cfg.dt);
    if (cfg.record_mass) result.series.mass.push_back(mass(U, fine));
    if (cfg.record_energy) result.series.energy.push_back(energy(U, fine, cfg.lambda));
    if (cfg.record_moment) result.series.second_moment.push_back(quadratic(moment, U));
    if (cfg.keep_trajectory) result.trajectory.push_back(U);
  };

  Eigen::VectorXcd state = initial;
  if (cfg.cadence > 0) record(0, state);
  for (int n = 1; n <= cfg.steps; ++n) {
    state = stepper.step(state);
    if (!state.allFinite()) throw NumericalError("non-finite state after step " + std::to_string(n));
    if (cfg.cadence > 0 && (n % cfg.cadence == 0 || n == cfg.steps)) record(n, state);
  }
  result.final_fine = space.to_fine(state);
  result.final_state = std::move(state);
  return result;
}

Eigen::VectorXcd initial_state(const Discretization& space, const ComplexFunction& psi0) {
  const Eigen::VectorXcd fine = project_l2(psi0, space.fine());
  return space.kind() == SpaceKind::FEM ? fine : space.from_fine(fine);
}

}  // namespace nls

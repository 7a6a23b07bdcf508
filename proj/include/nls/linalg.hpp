#pragma once

#include <cstdint>
#include <variant>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "nls/fem.hpp"

namespace nls {

/// Real symmetric matrix held either sparse (fine FEM) or dense (multiscale space).
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(SpMat m) : m_(std::move(m)) {}
  RealMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}

  bool is_sparse() const { return std::holds_alternative<SpMat>(m_); }
  Eigen::Index rows() const;
  const SpMat& sparse() const { return std::get<SpMat>(m_); }
  const Eigen::MatrixXd& dense_ref() const { return std::get<Eigen::MatrixXd>(m_); }
  Eigen::MatrixXd dense() const;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// x^* A x.
  double quadratic(const Eigen::VectorXcd& x) const;
  double frobenius() const;

 private:
  std::variant<SpMat, Eigen::MatrixXd> m_;
};

/// Real matrix times complex vector without forming a complex copy of A.
Eigen::VectorXcd real_times(const Eigen::MatrixXd& A, const Eigen::VectorXcd& x);
Eigen::VectorXcd real_times(const SpMat& A, const Eigen::VectorXcd& x);

/// FNV-1a over raw bytes, chainable through the seed.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 14695981039346656037ull);
std::uint64_t content_hash(const RealMatrix& A, std::uint64_t seed = 14695981039346656037ull);

}  // namespace nls

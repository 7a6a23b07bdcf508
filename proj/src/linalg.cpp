#include "nls/linalg.hpp"

namespace nls {

Eigen::Index RealMatrix::rows() const {
  return is_sparse() ? sparse().rows() : dense_ref().rows();
}

Eigen::MatrixXd RealMatrix::dense() const {
  return is_sparse() ? Eigen::MatrixXd(sparse()) : dense_ref();
}

Eigen::VectorXcd real_times(const Eigen::MatrixXd& A, const Eigen::VectorXcd& x) {
  return A * x;
}

Eigen::VectorXcd real_times(const SpMat& A, const Eigen::VectorXcd& x) {
  Eigen::VectorXcd y(A.rows());
  y.real() = A * x.real();
  y.imag() = A * x.imag();
  return y;
}

Eigen::VectorXcd RealMatrix::apply(const Eigen::VectorXcd& x) const {
  return is_sparse() ? real_times(sparse(), x) : real_times(dense_ref(), x);
}

Eigen::VectorXd RealMatrix::apply(const Eigen::VectorXd& x) const {
  if (is_sparse()) return sparse() * x;
  return dense_ref() * x;
}

double RealMatrix::quadratic(const Eigen::VectorXcd& x) const { return x.dot(apply(x)).real(); }

double RealMatrix::frobenius() const { return is_sparse() ? sparse().norm() : dense_ref().norm(); }

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t content_hash(const RealMatrix& A, std::uint64_t seed) {
  if (!A.is_sparse()) {
    const auto& D = A.dense_ref();
    return fnv1a(D.data(), sizeof(double) * D.size(), seed);
  }
  SpMat S = A.sparse();
  S.makeCompressed();
  std::uint64_t h = fnv1a(S.valuePtr(), sizeof(double) * S.nonZeros(), seed);
  h = fnv1a(S.innerIndexPtr(), sizeof(int) * S.nonZeros(), h);
  return fnv1a(S.outerIndexPtr(), sizeof(int) * (S.outerSize() + 1), h);
}

}  // namespace nls

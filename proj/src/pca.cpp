#include "nlinv/pca.hpp"

#include <string>

#include "nlinv/error.hpp"

namespace nlinv {

PcaResult pca_eig(const Matrix& x) {
  require(x.rows() >= 2, ErrorKind::InsufficientData,
          "pca_eig: need at least 2 rows, got " + std::to_string(x.rows()));
  PcaResult out;
  out.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorKind::Numeric,
          "pca_eig: eigendecomposition did not converge");
  // Eigen returns ascending order.
  out.eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace nlinv

#pragma once

#include "nlinv/linalg.hpp"

namespace nlinv {

struct PcaResult {
  Vector mean;
  /// Descending, clamped at 0.
  Vector eigenvalues;
  /// Column i is the unit eigenvector of eigenvalues(i).
  Matrix eigenvectors;
};

/// Eigendecomposition of the sample covariance (denominator N - 1) of the
/// rows of x.
PcaResult pca_eig(const Matrix& x);

}  // namespace nlinv

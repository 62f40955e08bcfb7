#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nlinv/data.hpp"
#include "nlinv/linalg.hpp"

namespace nlinv {

/// Affine-invariant baseline: squared Mahalanobis distance per scale, summed.
struct MahaModel {
  struct Scale {
    Standardizer standardizer;
    Vector mean;
    Vector eigenvalues;
    Matrix eigenvectors;
  };
  std::vector<Scale> scales;

  static constexpr double kEigenFloor = 1e-12;

  static MahaModel fit(std::span<const Matrix> per_scale, bool standardize);
};

Vector maha_score(const MahaModel& m, std::span<const Matrix> per_scale);

/// kNN baseline: mean distance to the k nearest training rows per scale,
/// summed over scales.
struct Dn2Model {
  struct Scale {
    Standardizer standardizer;
    Matrix features;
  };
  std::vector<Scale> scales;
  std::size_t k = 30;

  static Dn2Model fit(std::span<const Matrix> per_scale, std::size_t k, bool standardize);
};

Vector dn2_score(const Dn2Model& m, std::span<const Matrix> per_scale);

}  // namespace nlinv

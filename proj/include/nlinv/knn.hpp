#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nlinv/invariant.hpp"
#include "nlinv/linalg.hpp"

namespace nlinv {

struct Neighbor {
  std::size_t index;
  double distance;
};

/// The k nearest rows of `train` to `query` by exhaustive scan, ordered by
/// (distance, row index). `exclude` drops one row from the search.
std::vector<Neighbor> nearest_neighbors(const Matrix& train, const Eigen::Ref<const RowVector>& query,
                                        std::size_t k, std::optional<std::size_t> exclude = std::nullopt);

/// Mean distance to the two nearest training rows.
double dist_2nn(const Matrix& train, const Eigen::Ref<const RowVector>& query,
                std::optional<std::size_t> exclude = std::nullopt);

/// Mean leave-one-out 2-NN distance over the training rows.
double mean_loo_dist_2nn(const Matrix& train);

struct KnnScale {
  Matrix features;
  double loo_mean = 0.0;
  std::size_t k = 1;
};

/// Per-scale training features with their leave-one-out normalizers.
struct KnnIndex {
  std::vector<KnnScale> scales;

  static KnnIndex build(const InvariantDetector& det);
  static KnnScale build_scale(Matrix features, std::size_t k);

  /// dist_2nn of already-standardized rows at one scale.
  Vector dist_2nn(std::size_t scale, const Matrix& standardized) const;
  /// K_l * dist_2nn / loo_mean.
  Vector s_2nn(std::size_t scale, const Matrix& standardized) const;
};

struct ScoreTriple {
  Vector s_inv;
  Vector s_2nn;
  Vector s_final;
};

/// S_inv, S_2nn and S_final = S_inv + S_2nn for raw per-scale features.
/// Without an index only S_inv is computed and the other two stay empty.
ScoreTriple final_score(const InvariantDetector& det, const KnnIndex* index,
                        std::span<const Matrix> per_scale);

}  // namespace nlinv

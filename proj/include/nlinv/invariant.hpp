#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nlinv/data.hpp"
#include "nlinv/linalg.hpp"
#include "nlinv/vpn.hpp"

namespace nlinv {

struct ScaleConfig {
  double p_percent = 5.0;
  std::size_t epochs = 25;
  std::size_t batch_size = 64;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  std::uint64_t seed = 0;
  std::size_t blocks = 4;
  bool backward_loss = true;
  bool standardize = true;
  /// Replace the VPN by the closed-form PCA affine invariants.
  bool linear = false;
  /// Overrides select_k when set.
  std::optional<std::size_t> force_k;

  void validate() const;
};

/// Largest k such that the k smallest eigenvalues explain less than p% of
/// the total variance, floored at 1. Input is sorted descending.
std::size_t select_k(const Vector& eigenvalues_desc, double p_percent);

/// Learning rate for a 0-based epoch: linear from lr_start to lr_end.
double epoch_learning_rate(const ScaleConfig& cfg, std::size_t epoch);

/// g(f) = W (f - mu), the rows of W being the K least-variance principal
/// directions.
struct AffineInvariant {
  Vector mean;
  Matrix directions;
};

enum class InvariantKind : std::uint8_t { Vpn = 0, Affine = 1 };

struct TrainedScale {
  InvariantKind kind = InvariantKind::Vpn;
  VpnModel model;
  AffineInvariant affine;
  std::size_t k = 0;
  /// Mean squared training value of each invariant, floored at kErrorFloor.
  Vector errors;
  Standardizer standardizer;
  /// Standardized training features, retained for the 2-NN score.
  Matrix features;

  static constexpr double kErrorFloor = 1e-12;

  std::size_t dim() const { return static_cast<std::size_t>(standardizer.mean.size()); }
  /// The K invariant values of already-standardized rows (N x K).
  Matrix invariants(const Matrix& standardized) const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double forward_loss = 0.0;
  double backward_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Fits one scale: picks K from PCA, trains the VPN (or solves the affine
/// case), then records the per-invariant training errors.
TrainedScale train_scale(const Matrix& features, const ScaleConfig& cfg,
                         const EpochCallback& on_epoch = nullptr);

/// Per-invariant training error: sum of squared invariant values over the
/// rows divided by N - 1, floored at TrainedScale::kErrorFloor.
Vector invariant_errors(const TrainedScale& ts, const Matrix& standardized);

/// Sum_k g_k(f)^2 / e_k for each row of `raw` (unstandardized) features.
Vector invariant_score_scale(const TrainedScale& ts, const Matrix& raw);
double invariant_score_scale(const TrainedScale& ts, const Vector& raw);

struct InvariantDetector {
  std::vector<TrainedScale> scales;
};

/// S_inv: per-scale scores summed, one input matrix per scale.
Vector invariant_score(const InvariantDetector& det, std::span<const Matrix> per_scale);

}  // namespace nlinv

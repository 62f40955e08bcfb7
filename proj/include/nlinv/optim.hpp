#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nlinv/linalg.hpp"

namespace nlinv {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for a fixed list of parameter tensors.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  /// Zero moments shaped like `params`.
  static AdamState like(std::span<Matrix* const> params);
};

/// One bias-corrected Adam update applied in place to every tensor.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
               AdamState& state, double lr, const AdamConfig& cfg = {});

}  // namespace nlinv

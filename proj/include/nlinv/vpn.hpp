#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nlinv/binary_io.hpp"
#include "nlinv/linalg.hpp"
#include "nlinv/tape.hpp"

namespace nlinv {

/// Affine map h -> h W^T + b, weights stored out x in, bias as 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;
};

/// r(x) = expm([v]_x) x + b. `skew` is 1 x D(D-1)/2, `bias` 1 x D.
struct RotationLayer {
  Matrix skew;
  Matrix bias;
};

/// Additive coupling: y = join(x_a + t(x_b), x_b). The translation MLP has
/// four affine maps |x_b| -> |x_b| -> |x_b| -> |x_b| -> |x_a| with ReLU after
/// the first three.
struct CouplingLayer {
  std::array<Dense, 4> mlp;
};

/// x_a is the leading ceil(D/2) coordinates.
constexpr std::size_t coupling_split(std::size_t dim) { return (dim + 1) / 2; }

/// Volume preserving network: (rotation, coupling) x N, then a final rotation.
class VpnModel {
 public:
  VpnModel() = default;

  /// Identity network: all parameters zero. Requires dim >= 2.
  static VpnModel zeros(std::size_t dim, std::size_t blocks);
  /// Zero rotations and biases, MLP weights ~ N(0, 2 / fan_in).
  static VpnModel initialized(std::size_t dim, std::size_t blocks, std::mt19937_64& rng);

  std::size_t dim() const { return dim_; }
  std::size_t blocks() const { return couplings_.size(); }
  std::size_t split() const { return coupling_split(dim_); }

  /// Number of output coordinates treated as invariants; stored with the model.
  std::uint32_t num_invariants = 0;

  /// rotations().size() == blocks() + 1; the last one is the final rotation.
  std::span<RotationLayer> rotations() { return rotations_; }
  std::span<const RotationLayer> rotations() const { return rotations_; }
  std::span<CouplingLayer> couplings() { return couplings_; }
  std::span<const CouplingLayer> couplings() const { return couplings_; }

  /// Every parameter tensor in serialization order: per block rotation skew,
  /// rotation bias, then the MLP weight/bias pairs; final rotation last.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::size_t parameter_count() const;

 private:
  VpnModel(std::size_t dim, std::size_t blocks);

  std::size_t dim_ = 0;
  std::vector<RotationLayer> rotations_;
  std::vector<CouplingLayer> couplings_;
};

// Value-only evaluation. Rows of the batch are samples. These are pure and
// safe to call concurrently on a shared model.
Matrix rotation_forward(const RotationLayer& layer, const Matrix& x);
Matrix rotation_inverse(const RotationLayer& layer, const Matrix& y);
Matrix coupling_translation(const CouplingLayer& layer, const Matrix& xb);
Matrix coupling_forward(const CouplingLayer& layer, const Matrix& x);
Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& y);
Matrix vpn_forward(const VpnModel& model, const Matrix& x);
Matrix vpn_inverse(const VpnModel& model, const Matrix& z);

/// Mean over rows of ||g_{1:K}(f)||^2.
double forward_loss(const VpnModel& model, const Matrix& batch, std::size_t k);
/// Mean over rows of ||g^-1(P_K g(f)) - f||^2, P_K zeroing the first K outputs.
double backward_loss(const VpnModel& model, const Matrix& batch, std::size_t k);

/// Training graph for one batch: the loss node plus one leaf per parameter
/// tensor, aligned with VpnModel::parameters().
struct LossGraph {
  Tape::Var loss;
  Tape::Var forward;
  Tape::Var backward;
  std::vector<Tape::Var> params;
};

/// Records forward_loss (+ backward_loss when `with_backward`) on the tape.
LossGraph record_loss(Tape& tape, const VpnModel& model, const Matrix& batch, std::size_t k,
                      bool with_backward);

/// "NLINV1\0", D, N, K as u32, parameters as f64, SHA-256 trailer.
Bytes serialize(const VpnModel& model);
VpnModel deserialize(std::span<const std::uint8_t> bytes);

}  // namespace nlinv

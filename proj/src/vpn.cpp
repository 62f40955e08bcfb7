#include "nlinv/vpn.hpp"

#include <cmath>
#include <string>

#include "nlinv/error.hpp"

namespace nlinv {

namespace {

constexpr std::string_view kModelMagic{"NLINV1\0", 7};

void check_dim(std::size_t dim) {
  require(dim >= 2, ErrorKind::InvalidArgument,
          "VPN requires input dimension >= 2, got " + std::to_string(dim));
}

void check_batch(const Matrix& x, std::size_t dim, const char* op) {
  require(static_cast<std::size_t>(x.cols()) == dim, ErrorKind::InvalidArgument,
          std::string(op) + ": expected " + std::to_string(dim) + " columns, got " +
              std::to_string(x.cols()));
}

void check_k(std::size_t k, std::size_t dim) {
  require(k >= 1 && k < dim, ErrorKind::InvalidArgument,
          "invariant count K=" + std::to_string(k) + " must satisfy 1 <= K < D=" +
              std::to_string(dim));
}

Dense zero_dense(std::size_t in, std::size_t out) {
  return Dense{Matrix::Zero(out, in), Matrix::Zero(1, out)};
}

Matrix dense_apply(const Dense& d, const Matrix& h) {
  return (h * d.weight.transpose()).rowwise() + d.bias.row(0);
}

Matrix rotation_matrix(const RotationLayer& layer) {
  return expm(skew_from_vector(layer.skew.row(0), layer.bias.cols()));
}

}  // namespace

VpnModel::VpnModel(std::size_t dim, std::size_t blocks) : dim_(dim) {
  check_dim(dim);
  const std::size_t a = coupling_split(dim);
  const std::size_t b = dim - a;
  rotations_.reserve(blocks + 1);
  for (std::size_t i = 0; i <= blocks; ++i) {
    rotations_.push_back(
        RotationLayer{Matrix::Zero(1, skew_param_count(dim)), Matrix::Zero(1, dim)});
  }
  couplings_.reserve(blocks);
  for (std::size_t i = 0; i < blocks; ++i) {
    couplings_.push_back(CouplingLayer{
        {zero_dense(b, b), zero_dense(b, b), zero_dense(b, b), zero_dense(b, a)}});
  }
}

VpnModel VpnModel::zeros(std::size_t dim, std::size_t blocks) { return VpnModel(dim, blocks); }

VpnModel VpnModel::initialized(std::size_t dim, std::size_t blocks, std::mt19937_64& rng) {
  VpnModel model(dim, blocks);
  for (auto& c : model.couplings_) {
    for (auto& d : c.mlp) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(d.weight.cols())));
      for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = normal(rng);
    }
  }
  return model;
}

std::vector<Matrix*> VpnModel::parameters() {
  std::vector<Matrix*> out;
  for (std::size_t i = 0; i < couplings_.size(); ++i) {
    out.push_back(&rotations_[i].skew);
    out.push_back(&rotations_[i].bias);
    for (auto& d : couplings_[i].mlp) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
  }
  out.push_back(&rotations_.back().skew);
  out.push_back(&rotations_.back().bias);
  return out;
}

std::vector<const Matrix*> VpnModel::parameters() const {
  auto mut = const_cast<VpnModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t VpnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

Matrix rotation_forward(const RotationLayer& layer, const Matrix& x) {
  check_batch(x, static_cast<std::size_t>(layer.bias.cols()), "rotation_forward");
  return (x * rotation_matrix(layer).transpose()).rowwise() + layer.bias.row(0);
}

Matrix rotation_inverse(const RotationLayer& layer, const Matrix& y) {
  check_batch(y, static_cast<std::size_t>(layer.bias.cols()), "rotation_inverse");
  // expm(-S) = expm(S)^T for skew S.
  return (y.rowwise() - layer.bias.row(0)) * rotation_matrix(layer);
}

Matrix coupling_translation(const CouplingLayer& layer, const Matrix& xb) {
  Matrix h = xb;
  for (std::size_t i = 0; i < 3; ++i) h = dense_apply(layer.mlp[i], h).cwiseMax(0.0);
  return dense_apply(layer.mlp[3], h);
}

Matrix coupling_forward(const CouplingLayer& layer, const Matrix& x) {
  const auto a = layer.mlp[3].weight.rows();
  const auto b = layer.mlp[0].weight.cols();
  check_dim(static_cast<std::size_t>(x.cols()));
  check_batch(x, static_cast<std::size_t>(a + b), "coupling_forward");
  Matrix y = x;
  y.leftCols(a) += coupling_translation(layer, x.rightCols(b));
  return y;
}

Matrix coupling_inverse(const CouplingLayer& layer, const Matrix& y) {
  const auto a = layer.mlp[3].weight.rows();
  const auto b = layer.mlp[0].weight.cols();
  check_dim(static_cast<std::size_t>(y.cols()));
  check_batch(y, static_cast<std::size_t>(a + b), "coupling_inverse");
  Matrix x = y;
  x.leftCols(a) -= coupling_translation(layer, y.rightCols(b));
  return x;
}

Matrix vpn_forward(const VpnModel& model, const Matrix& x) {
  check_batch(x, model.dim(), "vpn_forward");
  Matrix h = x;
  const auto rot = model.rotations();
  const auto cpl = model.couplings();
  for (std::size_t i = 0; i < cpl.size(); ++i) {
    h = rotation_forward(rot[i], h);
    h = coupling_forward(cpl[i], h);
  }
  return rotation_forward(rot.back(), h);
}

Matrix vpn_inverse(const VpnModel& model, const Matrix& z) {
  check_batch(z, model.dim(), "vpn_inverse");
  const auto rot = model.rotations();
  const auto cpl = model.couplings();
  Matrix h = rotation_inverse(rot.back(), z);
  for (std::size_t i = cpl.size(); i-- > 0;) {
    h = coupling_inverse(cpl[i], h);
    h = rotation_inverse(rot[i], h);
  }
  return h;
}

double forward_loss(const VpnModel& model, const Matrix& batch, std::size_t k) {
  check_k(k, model.dim());
  require(batch.rows() > 0, ErrorKind::InvalidArgument, "forward_loss: empty batch");
  const Matrix z = vpn_forward(model, batch);
  return z.leftCols(static_cast<Eigen::Index>(k)).squaredNorm() / static_cast<double>(batch.rows());
}

double backward_loss(const VpnModel& model, const Matrix& batch, std::size_t k) {
  check_k(k, model.dim());
  require(batch.rows() > 0, ErrorKind::InvalidArgument, "backward_loss: empty batch");
  Matrix z = vpn_forward(model, batch);
  z.leftCols(static_cast<Eigen::Index>(k)).setZero();
  const Matrix rec = vpn_inverse(model, z);
  return (rec - batch).squaredNorm() / static_cast<double>(batch.rows());
}

LossGraph record_loss(Tape& tape, const VpnModel& model, const Matrix& batch, std::size_t k,
                      bool with_backward) {
  check_k(k, model.dim());
  check_batch(batch, model.dim(), "record_loss");
  require(batch.rows() > 0, ErrorKind::InvalidArgument, "record_loss: empty batch");
  const auto dim = model.dim();
  const auto kk = static_cast<Eigen::Index>(k);
  const auto d = static_cast<Eigen::Index>(dim);
  const auto a = static_cast<Eigen::Index>(model.split());

  LossGraph g;
  for (const Matrix* p : model.parameters()) g.params.push_back(tape.leaf(*p));

  // Leaf layout mirrors VpnModel::parameters().
  const std::size_t per_block = 2 + 8;
  const std::size_t blocks = model.blocks();
  struct RotVars { Tape::Var mat, bias; };
  struct DenseVars { Tape::Var weight, bias; };
  std::vector<RotVars> rots;
  std::vector<std::array<DenseVars, 4>> mlps;
  for (std::size_t i = 0; i <= blocks; ++i) {
    const std::size_t base = i * per_block;
    const Tape::Var skew = tape.skew(g.params[base], dim);
    rots.push_back({tape.expm(skew), g.params[base + 1]});
    if (i == blocks) break;
    std::array<DenseVars, 4> mlp{};
    for (std::size_t j = 0; j < 4; ++j) {
      mlp[j] = {g.params[base + 2 + 2 * j], g.params[base + 3 + 2 * j]};
    }
    mlps.push_back(mlp);
  }

  auto rot_fwd = [&](const RotVars& r, Tape::Var x) {
    return tape.add_row(tape.matmul(x, tape.transpose(r.mat)), r.bias);
  };
  auto rot_inv = [&](const RotVars& r, Tape::Var y) {
    return tape.matmul(tape.add_row(y, tape.scale(r.bias, -1.0)), r.mat);
  };
  auto translation = [&](const std::array<DenseVars, 4>& mlp, Tape::Var xb) {
    Tape::Var h = xb;
    for (std::size_t j = 0; j < 4; ++j) {
      h = tape.add_row(tape.matmul(h, tape.transpose(mlp[j].weight)), mlp[j].bias);
      if (j < 3) h = tape.relu(h);
    }
    return h;
  };
  auto cpl_fwd = [&](const std::array<DenseVars, 4>& mlp, Tape::Var x) {
    Tape::Var xa = tape.slice_cols(x, 0, a);
    Tape::Var xb = tape.slice_cols(x, a, d - a);
    return tape.concat_cols(tape.add(xa, translation(mlp, xb)), xb);
  };
  auto cpl_inv = [&](const std::array<DenseVars, 4>& mlp, Tape::Var y) {
    Tape::Var ya = tape.slice_cols(y, 0, a);
    Tape::Var yb = tape.slice_cols(y, a, d - a);
    return tape.concat_cols(tape.sub(ya, translation(mlp, yb)), yb);
  };

  const double inv_n = 1.0 / static_cast<double>(batch.rows());
  const Tape::Var input = tape.leaf(batch);
  Tape::Var h = input;
  for (std::size_t i = 0; i < blocks; ++i) h = cpl_fwd(mlps[i], rot_fwd(rots[i], h));
  const Tape::Var z = rot_fwd(rots[blocks], h);

  g.forward = tape.scale(tape.squared_norm(tape.slice_cols(z, 0, kk)), inv_n);
  g.loss = g.forward;
  if (with_backward) {
    const Tape::Var zeros = tape.leaf(Matrix::Zero(batch.rows(), kk));
    Tape::Var r = tape.concat_cols(zeros, tape.slice_cols(z, kk, d - kk));
    r = rot_inv(rots[blocks], r);
    for (std::size_t i = blocks; i-- > 0;) r = rot_inv(rots[i], cpl_inv(mlps[i], r));
    g.backward = tape.scale(tape.squared_norm(tape.sub(r, input)), inv_n);
    g.loss = tape.add(g.forward, g.backward);
  } else {
    g.backward = tape.leaf(Matrix::Zero(1, 1));
  }
  return g;
}

Bytes serialize(const VpnModel& model) {
  ByteWriter w;
  w.raw(kModelMagic);
  w.u32(static_cast<std::uint32_t>(model.dim()));
  w.u32(static_cast<std::uint32_t>(model.blocks()));
  w.u32(model.num_invariants);
  for (const Matrix* p : model.parameters()) {
    w.f64s(std::span<const double>(p->data(), static_cast<std::size_t>(p->size())));
  }
  Bytes out = w.take();
  append_sha256_trailer(out);
  return out;
}

VpnModel deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "model file");
  r.expect_magic(kModelMagic);
  const std::uint32_t dim = r.u32();
  const std::uint32_t blocks = r.u32();
  const std::uint32_t k = r.u32();
  require(dim >= 2 && dim <= 100000 && blocks <= 10000, ErrorKind::Format,
          "model file: implausible header (D=" + std::to_string(dim) +
              ", N=" + std::to_string(blocks) + ")");
  VpnModel model = VpnModel::zeros(dim, blocks);
  model.num_invariants = k;
  const std::size_t expected = r.position() + 8 * model.parameter_count() + 32;
  require(bytes.size() >= expected, ErrorKind::Format,
          "model file: truncated stream (expected " + std::to_string(expected) + " bytes, got " +
              std::to_string(bytes.size()) + ")");
  require(bytes.size() == expected, ErrorKind::Format, "model file: trailing bytes");
  verify_sha256_trailer(bytes, "model file");
  for (Matrix* p : model.parameters()) {
    r.f64s(std::span<double>(p->data(), static_cast<std::size_t>(p->size())));
  }
  return model;
}

}  // namespace nlinv

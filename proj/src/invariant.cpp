#include "nlinv/invariant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "nlinv/error.hpp"
#include "nlinv/optim.hpp"
#include "nlinv/pca.hpp"
#include "nlinv/tape.hpp"

namespace nlinv {

void ScaleConfig::validate() const {
  require(p_percent > 0.0 && p_percent < 100.0, ErrorKind::InvalidArgument,
          "p must lie in (0, 100), got " + std::to_string(p_percent));
  require(epochs >= 1, ErrorKind::InvalidArgument, "epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  require(lr_start > 0.0 && lr_end > 0.0, ErrorKind::InvalidArgument,
          "learning rates must be positive");
  require(!force_k || *force_k >= 1, ErrorKind::InvalidArgument, "forced K must be >= 1");
}

std::size_t select_k(const Vector& eigenvalues_desc, double p_percent) {
  require(eigenvalues_desc.size() > 0, ErrorKind::InvalidArgument, "select_k: no eigenvalues");
  const double total = eigenvalues_desc.sum();
  require(total > 0.0, ErrorKind::DegenerateData,
          "select_k: all eigenvalues are zero (constant features)");
  const double threshold = p_percent / 100.0;
  std::size_t k = 0;
  double cumulative = 0.0;
  for (Eigen::Index i = eigenvalues_desc.size(); i-- > 0;) {
    cumulative += eigenvalues_desc(i);
    if (cumulative / total < threshold) {
      ++k;
    } else {
      break;
    }
  }
  return std::max<std::size_t>(k, 1);
}

double epoch_learning_rate(const ScaleConfig& cfg, std::size_t epoch) {
  if (cfg.epochs <= 1) return cfg.lr_start;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * t;
}

Matrix TrainedScale::invariants(const Matrix& standardized) const {
  require(static_cast<std::size_t>(standardized.cols()) == dim(), ErrorKind::InvalidArgument,
          "invariants: expected " + std::to_string(dim()) + " columns, got " +
              std::to_string(standardized.cols()));
  const auto kk = static_cast<Eigen::Index>(k);
  if (kind == InvariantKind::Affine) {
    return (standardized.rowwise() - affine.mean.transpose()) * affine.directions.transpose();
  }
  return vpn_forward(model, standardized).leftCols(kk);
}

namespace {

void train_vpn(TrainedScale& ts, const Matrix& x, const ScaleConfig& cfg,
               const EpochCallback& on_epoch) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::mt19937_64 rng(cfg.seed);
  ts.model = VpnModel::initialized(ts.dim(), cfg.blocks, rng);
  ts.model.num_invariants = static_cast<std::uint32_t>(ts.k);

  const std::vector<Matrix*> params = ts.model.parameters();
  AdamState state = AdamState::like(params);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> grads(params.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = epoch_learning_rate(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double fwd_sum = 0.0;
    double bwd_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      Matrix batch(static_cast<Eigen::Index>(stop - start), x.cols());
      for (std::size_t i = start; i < stop; ++i) {
        batch.row(static_cast<Eigen::Index>(i - start)) = x.row(static_cast<Eigen::Index>(order[i]));
      }

      Tape tape;
      LossGraph graph;
      try {
        graph = record_loss(tape, ts.model, batch, ts.k, cfg.backward_loss);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        fail(ErrorKind::TrainingDiverged, "training diverged at epoch " + std::to_string(epoch + 1) +
                                              ", batch " + std::to_string(batch_index + 1) + ": " +
                                              e.what());
      }
      const double fwd = tape.value(graph.forward)(0, 0);
      const double bwd = tape.value(graph.backward)(0, 0);
      require(std::isfinite(fwd) && std::isfinite(bwd), ErrorKind::TrainingDiverged,
              "training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                  std::to_string(batch_index + 1) + ": non-finite loss");
      const auto rows = static_cast<double>(stop - start);
      fwd_sum += fwd * rows;
      bwd_sum += bwd * rows;

      tape.backward(graph.loss);
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] = tape.grad(graph.params[i]);
      adam_step(params, grads, state, lr);
    }
    if (on_epoch) {
      on_epoch(EpochStats{epoch + 1, lr, fwd_sum / static_cast<double>(n),
                          bwd_sum / static_cast<double>(n)});
    }
  }
}

}  // namespace

TrainedScale train_scale(const Matrix& features, const ScaleConfig& cfg,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  require(features.cols() >= 2, ErrorKind::InvalidArgument,
          "train_scale: need at least 2 feature columns, got " + std::to_string(features.cols()));
  require(features.rows() >= 2, ErrorKind::InsufficientData,
          "train_scale: need at least 2 training rows, got " + std::to_string(features.rows()));
  require(features.allFinite(), ErrorKind::InvalidArgument, "train_scale: non-finite features");

  TrainedScale ts;
  ts.standardizer = cfg.standardize ? Standardizer::fit(features)
                                    : Standardizer::identity(static_cast<std::size_t>(features.cols()));
  const Matrix x = ts.standardizer.apply(features);
  const PcaResult pca = pca_eig(x);
  ts.k = cfg.force_k ? *cfg.force_k : select_k(pca.eigenvalues, cfg.p_percent);
  const auto d = static_cast<std::size_t>(x.cols());

  if (cfg.linear) {
    require(ts.k <= d, ErrorKind::InvalidArgument,
            "K=" + std::to_string(ts.k) + " exceeds dimension " + std::to_string(d));
    ts.kind = InvariantKind::Affine;
    ts.affine.mean = pca.mean;
    // Least-variance directions first.
    const auto kk = static_cast<Eigen::Index>(ts.k);
    ts.affine.directions = pca.eigenvectors.rightCols(kk).rowwise().reverse().transpose();
  } else {
    require(ts.k < d, ErrorKind::InvalidArgument,
            "K=" + std::to_string(ts.k) + " must be below the dimension " + std::to_string(d));
    ts.kind = InvariantKind::Vpn;
    train_vpn(ts, x, cfg, on_epoch);
  }

  ts.errors = invariant_errors(ts, x);
  ts.features = x;
  return ts;
}

Vector invariant_errors(const TrainedScale& ts, const Matrix& standardized) {
  require(standardized.rows() >= 2, ErrorKind::InsufficientData,
          "invariant_errors: need at least 2 rows");
  const Matrix g = ts.invariants(standardized);
  return (g.colwise().squaredNorm() / static_cast<double>(standardized.rows() - 1))
      .transpose()
      .cwiseMax(TrainedScale::kErrorFloor);
}

Vector invariant_score_scale(const TrainedScale& ts, const Matrix& raw) {
  const Matrix g = ts.invariants(ts.standardizer.apply(raw));
  return (g.array().square().rowwise() / ts.errors.transpose().array()).rowwise().sum();
}

double invariant_score_scale(const TrainedScale& ts, const Vector& raw) {
  return invariant_score_scale(ts, Matrix(raw.transpose()))(0);
}

Vector invariant_score(const InvariantDetector& det, std::span<const Matrix> per_scale) {
  require(per_scale.size() == det.scales.size(), ErrorKind::InvalidArgument,
          "invariant_score: detector has " + std::to_string(det.scales.size()) +
              " scales but " + std::to_string(per_scale.size()) + " inputs were given");
  require(!per_scale.empty(), ErrorKind::InvalidArgument, "invariant_score: no scales");
  Vector total = Vector::Zero(per_scale[0].rows());
  for (std::size_t l = 0; l < per_scale.size(); ++l) {
    require(per_scale[l].rows() == per_scale[0].rows(), ErrorKind::InvalidArgument,
            "invariant_score: scale inputs have different row counts");
    total += invariant_score_scale(det.scales[l], per_scale[l]);
  }
  return total;
}

}  // namespace nlinv

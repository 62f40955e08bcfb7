#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "nlinv/linalg.hpp"
#include "nlinv/tape.hpp"
#include "nlinv/vpn.hpp"

namespace nlinv::test {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                            double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Initialized VPN with rotations and biases also randomized, so every
/// parameter tensor is away from zero.
inline VpnModel random_vpn(std::mt19937_64& rng, std::size_t dim, std::size_t blocks) {
  VpnModel m = VpnModel::initialized(dim, blocks, rng);
  for (auto& r : m.rotations()) {
    r.skew = random_matrix(rng, r.skew.rows(), r.skew.cols(), 0.7);
    r.bias = random_matrix(rng, r.bias.rows(), r.bias.cols(), 0.3);
  }
  for (auto& c : m.couplings()) {
    for (auto& d : c.mlp) d.bias = random_matrix(rng, d.bias.rows(), d.bias.cols(), 0.3);
  }
  return m;
}

/// Norm-wise relative error between the tape gradient of forward + backward
/// loss and central differences (step eps) over every parameter.
inline double vpn_gradient_error(const VpnModel& model, const Matrix& batch, std::size_t k,
                                 double eps = 1e-5) {
  Tape tape;
  const LossGraph g = record_loss(tape, model, batch, k, true);
  tape.backward(g.loss);

  VpnModel probe = model;
  const auto params = probe.parameters();
  double diff2 = 0.0, an2 = 0.0, fd2 = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix& analytic = tape.grad(g.params[p]);
    for (Eigen::Index i = 0; i < params[p]->size(); ++i) {
      double& x = params[p]->data()[i];
      const double orig = x;
      x = orig + eps;
      const double up = forward_loss(probe, batch, k) + backward_loss(probe, batch, k);
      x = orig - eps;
      const double down = forward_loss(probe, batch, k) + backward_loss(probe, batch, k);
      x = orig;
      const double fd = (up - down) / (2 * eps);
      const double a = analytic.data()[i];
      diff2 += (a - fd) * (a - fd);
      an2 += a * a;
      fd2 += fd * fd;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(std::max(an2, fd2)), 1e-12);
}

/// Central-difference Jacobian of the VPN forward map at one point.
inline Matrix numeric_jacobian(const VpnModel& model, const RowVector& x, double eps = 1e-7) {
  const auto d = x.size();
  Matrix j(d, d);
  for (Eigen::Index c = 0; c < d; ++c) {
    Matrix up = x, down = x;
    up(0, c) += eps;
    down(0, c) -= eps;
    j.col(c) = ((vpn_forward(model, up) - vpn_forward(model, down)) / (2 * eps)).transpose();
  }
  return j;
}

/// Left-to-right Euclidean distance.
inline double plain_distance(const Matrix& a, Eigen::Index i, const RowVector& q) {
  double sq = 0.0;
  for (Eigen::Index c = 0; c < q.size(); ++c) sq += (a(i, c) - q(c)) * (a(i, c) - q(c));
  return std::sqrt(sq);
}

/// Every training row as (distance, index), fully sorted.
inline std::vector<std::pair<double, std::size_t>> sorted_distances(const Matrix& train, const RowVector& q,
                                                                   long exclude = -1) {
  std::vector<std::pair<double, std::size_t>> all;
  for (Eigen::Index i = 0; i < train.rows(); ++i) {
    if (i == exclude) continue;
    all.emplace_back(plain_distance(train, i, q), static_cast<std::size_t>(i));
  }
  std::sort(all.begin(), all.end());
  return all;
}

inline double brute_knn_mean(const Matrix& train, const RowVector& q, std::size_t k, long exclude = -1) {
  const auto all = sorted_distances(train, q, exclude);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += all[i].first;
  return sum / static_cast<double>(k);
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Spearman rank correlation with mid-ranks, written independently of auroc().
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}


}  // namespace nlinv::test

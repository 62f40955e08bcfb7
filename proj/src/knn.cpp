#include "nlinv/knn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nlinv/error.hpp"
#include "nlinv/parallel.hpp"

namespace nlinv {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

}  // namespace

std::vector<Neighbor> nearest_neighbors(const Matrix& train, const Eigen::Ref<const RowVector>& query,
                                        std::size_t k, std::optional<std::size_t> exclude) {
  const auto n = static_cast<std::size_t>(train.rows());
  const std::size_t available = n - (exclude && *exclude < n ? 1 : 0);
  require(k >= 1 && k <= available, ErrorKind::InsufficientData,
          "nearest_neighbors: need " + std::to_string(k) + " neighbours but only " +
              std::to_string(available) + " candidate rows");
  require(query.size() == train.cols(), ErrorKind::InvalidArgument,
          "nearest_neighbors: query has " + std::to_string(query.size()) + " columns, index has " +
              std::to_string(train.cols()));

  std::vector<Neighbor> best;
  best.reserve(k + 1);
  const auto d = train.cols();
  for (std::size_t i = 0; i < n; ++i) {
    if (exclude && *exclude == i) continue;
    const double* row = train.data() + static_cast<Eigen::Index>(i) * d;
    double sq = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double diff = row[c] - query(c);
      sq += diff * diff;
    }
    const Neighbor cand{i, std::sqrt(sq)};
    if (best.size() == k && !closer(cand, best.back())) continue;
    best.insert(std::upper_bound(best.begin(), best.end(), cand, closer), cand);
    if (best.size() > k) best.pop_back();
  }
  return best;
}

double dist_2nn(const Matrix& train, const Eigen::Ref<const RowVector>& query,
                std::optional<std::size_t> exclude) {
  const auto nn = nearest_neighbors(train, query, 2, exclude);
  return 0.5 * (nn[0].distance + nn[1].distance);
}

double mean_loo_dist_2nn(const Matrix& train) {
  const auto n = static_cast<std::size_t>(train.rows());
  require(n >= 3, ErrorKind::InsufficientData,
          "leave-one-out 2-NN needs at least 3 training rows, got " + std::to_string(n));
  std::vector<double> dists(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      dists[i] = dist_2nn(train, train.row(static_cast<Eigen::Index>(i)), i);
    }
  });
  double sum = 0.0;
  for (double v : dists) sum += v;
  return sum / static_cast<double>(n);
}

KnnScale KnnIndex::build_scale(Matrix features, std::size_t k) {
  KnnScale s;
  s.loo_mean = mean_loo_dist_2nn(features);
  require(s.loo_mean > 0.0, ErrorKind::DegenerateData,
          "mean leave-one-out 2-NN distance is zero (training rows are duplicates)");
  s.features = std::move(features);
  s.k = k;
  return s;
}

KnnIndex KnnIndex::build(const InvariantDetector& det) {
  KnnIndex index;
  for (const auto& ts : det.scales) index.scales.push_back(build_scale(ts.features, ts.k));
  return index;
}

Vector KnnIndex::dist_2nn(std::size_t scale, const Matrix& standardized) const {
  require(scale < scales.size(), ErrorKind::InvalidArgument,
          "knn: scale " + std::to_string(scale) + " out of range");
  const Matrix& train = scales[scale].features;
  Vector out(standardized.rows());
  parallel_for(static_cast<std::size_t>(standardized.rows()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out(r) = nlinv::dist_2nn(train, standardized.row(r));
    }
  });
  return out;
}

Vector KnnIndex::s_2nn(std::size_t scale, const Matrix& standardized) const {
  const Vector d = dist_2nn(scale, standardized);
  return d * (static_cast<double>(scales[scale].k) / scales[scale].loo_mean);
}

ScoreTriple final_score(const InvariantDetector& det, const KnnIndex* index,
                        std::span<const Matrix> per_scale) {
  ScoreTriple out;
  out.s_inv = invariant_score(det, per_scale);
  if (!index) return out;
  require(index->scales.size() == det.scales.size(), ErrorKind::InvalidArgument,
          "final_score: index and detector disagree on the number of scales");
  out.s_2nn = Vector::Zero(out.s_inv.size());
  for (std::size_t l = 0; l < per_scale.size(); ++l) {
    out.s_2nn += index->s_2nn(l, det.scales[l].standardizer.apply(per_scale[l]));
  }
  out.s_final = out.s_inv + out.s_2nn;
  return out;
}

}  // namespace nlinv

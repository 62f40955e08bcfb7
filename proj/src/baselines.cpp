#include "nlinv/baselines.hpp"

#include <string>

#include "nlinv/error.hpp"
#include "nlinv/knn.hpp"
#include "nlinv/parallel.hpp"
#include "nlinv/pca.hpp"

namespace nlinv {

namespace {

void check_inputs(std::size_t expected, std::span<const Matrix> per_scale, const char* who) {
  require(per_scale.size() == expected, ErrorKind::InvalidArgument,
          std::string(who) + ": model has " + std::to_string(expected) + " scales but " +
              std::to_string(per_scale.size()) + " inputs were given");
  require(!per_scale.empty(), ErrorKind::InvalidArgument, std::string(who) + ": no scales");
}

}  // namespace

MahaModel MahaModel::fit(std::span<const Matrix> per_scale, bool standardize) {
  require(!per_scale.empty(), ErrorKind::InvalidArgument, "MahaModel::fit: no scales");
  MahaModel m;
  for (const Matrix& x : per_scale) {
    Scale s;
    s.standardizer = standardize ? Standardizer::fit(x)
                                 : Standardizer::identity(static_cast<std::size_t>(x.cols()));
    PcaResult pca = pca_eig(s.standardizer.apply(x));
    s.mean = std::move(pca.mean);
    s.eigenvalues = std::move(pca.eigenvalues);
    s.eigenvectors = std::move(pca.eigenvectors);
    m.scales.push_back(std::move(s));
  }
  return m;
}

Vector maha_score(const MahaModel& m, std::span<const Matrix> per_scale) {
  check_inputs(m.scales.size(), per_scale, "maha_score");
  Vector total = Vector::Zero(per_scale[0].rows());
  for (std::size_t l = 0; l < per_scale.size(); ++l) {
    const auto& s = m.scales[l];
    require(per_scale[l].rows() == total.size(), ErrorKind::InvalidArgument,
            "maha_score: scale inputs have different row counts");
    const Matrix centered = s.standardizer.apply(per_scale[l]).rowwise() - s.mean.transpose();
    const Matrix proj = centered * s.eigenvectors;
    const Eigen::ArrayXd inv = s.eigenvalues.cwiseMax(MahaModel::kEigenFloor).cwiseInverse().array();
    total += (proj.array().square().rowwise() * inv.transpose()).rowwise().sum().matrix();
  }
  return total;
}

Dn2Model Dn2Model::fit(std::span<const Matrix> per_scale, std::size_t k, bool standardize) {
  require(!per_scale.empty(), ErrorKind::InvalidArgument, "Dn2Model::fit: no scales");
  require(k >= 1, ErrorKind::InvalidArgument, "DN2: k must be >= 1");
  Dn2Model m;
  m.k = k;
  for (const Matrix& x : per_scale) {
    require(k < static_cast<std::size_t>(x.rows()), ErrorKind::InvalidArgument,
            "DN2: k=" + std::to_string(k) + " must be below the training size " +
                std::to_string(x.rows()));
    Scale s;
    s.standardizer = standardize ? Standardizer::fit(x)
                                 : Standardizer::identity(static_cast<std::size_t>(x.cols()));
    s.features = s.standardizer.apply(x);
    m.scales.push_back(std::move(s));
  }
  return m;
}

Vector dn2_score(const Dn2Model& m, std::span<const Matrix> per_scale) {
  check_inputs(m.scales.size(), per_scale, "dn2_score");
  Vector total = Vector::Zero(per_scale[0].rows());
  for (std::size_t l = 0; l < per_scale.size(); ++l) {
    const auto& s = m.scales[l];
    require(m.k < static_cast<std::size_t>(s.features.rows()), ErrorKind::InvalidArgument,
            "DN2: k=" + std::to_string(m.k) + " must be below the training size " +
                std::to_string(s.features.rows()));
    require(per_scale[l].rows() == total.size(), ErrorKind::InvalidArgument,
            "dn2_score: scale inputs have different row counts");
    const Matrix q = s.standardizer.apply(per_scale[l]);
    Vector part(q.rows());
    parallel_for(static_cast<std::size_t>(q.rows()), [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto nn = nearest_neighbors(s.features, q.row(r), m.k);
        double sum = 0.0;
        for (const auto& n : nn) sum += n.distance;
        part(r) = sum / static_cast<double>(m.k);
      }
    });
    total += part;
  }
  return total;
}

}  // namespace nlinv

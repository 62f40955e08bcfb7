#include "doctest.h"
#include "nlinv/data.hpp"
#include "nlinv/error.hpp"
#include "nlinv/invariant.hpp"
#include "support.hpp"

using namespace nlinv;

namespace {

// Training budget for the learnability checks below.
constexpr std::size_t kLongEpochs = 100;

Vector values(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix rank2_in_3d(std::uint64_t seed, Eigen::Index n) {
  std::mt19937_64 rng(seed);
  Matrix a(2, 3);
  a << 1, 0.5, -0.3, 0.2, 1, 0.7;
  Matrix x = test::random_matrix(rng, n, 2) * a;
  x.rowwise() += RowVector::Constant(3, 0.5);
  return x;
}

}  // namespace

TEST_CASE("select_k") {
  CHECK(select_k(values({10, 1, 0.1, 0.01}), 5.0) == 2);
  CHECK(select_k(values({1, 1, 1, 1}), 5.0) == 1);
  CHECK(select_k(values({1, 0, 0}), 5.0) == 2);
  CHECK_THROWS_AS(select_k(values({0, 0}), 5.0), Error);
  SUBCASE("agrees with direct cumulative sums") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> ev(8);
      for (auto& e : ev) e = std::pow(u(rng), 4);
      std::sort(ev.rbegin(), ev.rend());
      const double p = 1 + 30 * u(rng);
      double total = 0;
      for (double e : ev) total += e;
      std::size_t want = 0;
      for (std::size_t k = 1; k <= ev.size(); ++k) {
        double tail = 0;
        for (std::size_t i = ev.size() - k; i < ev.size(); ++i) tail += ev[i];
        if (100.0 * tail / total < p) want = k;
      }
      CHECK(select_k(Eigen::Map<Vector>(ev.data(), 8), p) == std::max<std::size_t>(want, 1));
    }
  }
}

TEST_CASE("learning rate schedule") {
  ScaleConfig cfg;
  CHECK(epoch_learning_rate(cfg, 0) == 1e-3);
  CHECK(epoch_learning_rate(cfg, 24) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(epoch_learning_rate(cfg, 12) == doctest::Approx(5.5e-4).epsilon(1e-12));
}

TEST_CASE("config validation") {
  ScaleConfig cfg;
  cfg.p_percent = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.p_percent = 100.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.p_percent = 5.0;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("train_scale preconditions") {
  ScaleConfig cfg;
  CHECK_THROWS_AS(train_scale(Matrix::Zero(1, 3), cfg), Error);
  CHECK_THROWS_AS(train_scale(Matrix::Zero(10, 1), cfg), Error);
  cfg.force_k = 3;
  std::mt19937_64 rng(2);
  CHECK_THROWS_AS(train_scale(test::random_matrix(rng, 10, 3), cfg), Error);
}

TEST_CASE("affine subspace invariant is learnable") {
  ScaleConfig cfg;
  cfg.epochs = kLongEpochs;
  const TrainedScale ts = train_scale(rank2_in_3d(100, 500), cfg);
  CHECK(ts.kind == InvariantKind::Vpn);
  CHECK(ts.k == 1);
  CHECK(ts.errors(0) < 1e-4);
}

TEST_CASE("training is deterministic per seed") {
  std::mt19937_64 rng(3);
  const Matrix x = test::random_matrix(rng, 100, 4);
  ScaleConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const TrainedScale a = train_scale(x, cfg);
  const TrainedScale b = train_scale(x, cfg);
  CHECK(serialize(a.model) == serialize(b.model));
  cfg.seed = 10;
  CHECK(serialize(train_scale(x, cfg).model) != serialize(a.model));
}

TEST_CASE("invariant score") {
  SUBCASE("definition arithmetic") {
    TrainedScale ts;
    ts.kind = InvariantKind::Vpn;
    ts.model = VpnModel::zeros(2, 1);
    ts.k = 1;
    ts.errors = values({0.25});
    ts.standardizer = Standardizer::identity(2);
    CHECK(invariant_score_scale(ts, Vector(values({0.5, 3.0}))) == 1.0);
    CHECK(invariant_score_scale(ts, Vector(values({0.0, 3.0}))) == 0.0);
  }
  SUBCASE("training mean is close to K") {
    std::mt19937_64 rng(4);
    Matrix x = test::random_matrix(rng, 1000, 5);
    x.col(4) *= 0.01;
    x.col(3) *= 0.02;
    ScaleConfig cfg;
    cfg.epochs = 2;
    cfg.standardize = false;
    const TrainedScale ts = train_scale(x, cfg);
    REQUIRE(ts.k == 2);
    CHECK(invariant_score_scale(ts, x).mean() == doctest::Approx(2.0).epsilon(0.01));
  }
  SUBCASE("multi-scale sums per scale") {
    std::mt19937_64 rng(5);
    InvariantDetector det;
    std::vector<Matrix> inputs;
    ScaleConfig cfg;
    cfg.epochs = 1;
    for (int l = 0; l < 3; ++l) {
      const Matrix x = test::random_matrix(rng, 60, 3 + l);
      det.scales.push_back(train_scale(x, cfg));
      inputs.push_back(test::random_matrix(rng, 7, 3 + l));
    }
    Vector want = Vector::Zero(7);
    for (int l = 0; l < 3; ++l) want += invariant_score_scale(det.scales[l], inputs[l]);
    CHECK((invariant_score(det, inputs) - want).cwiseAbs().maxCoeff() == 0.0);

    InvariantDetector one{{det.scales[0]}};
    CHECK(invariant_score(one, std::span(inputs).first(1)) == invariant_score_scale(det.scales[0], inputs[0]));
    CHECK_THROWS_AS(invariant_score(det, std::span(inputs).first(2)), Error);
  }
}

TEST_CASE("affine invariants with K = D give the squared Mahalanobis distance") {
  std::mt19937_64 rng(6);
  Matrix x = test::random_matrix(rng, 200, 3) * test::random_matrix(rng, 3, 3);
  ScaleConfig cfg;
  cfg.linear = true;
  cfg.force_k = 3;
  cfg.standardize = false;
  const TrainedScale ts = train_scale(x, cfg);
  const RowVector mu = x.colwise().mean();
  const Matrix c = x.rowwise() - mu;
  const Matrix sigma_inv = (c.transpose() * c / 199.0).inverse();
  const Matrix q = test::random_matrix(rng, 20, 3);
  const Vector got = invariant_score_scale(ts, q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const RowVector d = q.row(i) - mu;
    CHECK(test::rel_error(got(i), (d * sigma_inv * d.transpose())(0, 0)) < 1e-8);
  }
}

// Mirrors the two-dimensional circle illustration: a single radial invariant.
TEST_CASE("circle training yields a near-constant first output" * doctest::test_suite("circle-training")) {
  const FeatureMatrix circle = gen_circle(1000, 1.0, 0.05, 0);
  ScaleConfig cfg;
  cfg.force_k = 1;
  cfg.epochs = kLongEpochs;
  const Matrix x = Standardizer::fit(circle.values).apply(circle.values);
  std::mt19937_64 rng(cfg.seed);
  const double initial = forward_loss(VpnModel::initialized(2, cfg.blocks, rng), x, 1);
  const TrainedScale ts = train_scale(circle.values, cfg);
  const double final_loss = forward_loss(ts.model, x, 1);
  MESSAGE("forward loss " << initial << " -> " << final_loss);
  CHECK(final_loss * 10.0 <= initial);
  const Matrix z = vpn_forward(ts.model, x);
  const RowVector var = (z.rowwise() - z.colwise().mean()).colwise().squaredNorm();
  CHECK(var(0) < var(1));
}

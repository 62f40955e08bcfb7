#include "doctest.h"
#include "nlinv/error.hpp"
#include "nlinv/optim.hpp"
#include "nlinv/pca.hpp"
#include "nlinv/tape.hpp"
#include "support.hpp"

using namespace nlinv;

TEST_CASE("tape gradients of simple expressions") {
  SUBCASE("squared norm") {
    Tape t;
    Matrix x(1, 2);
    x << 1, 2;
    const auto a = t.leaf(x);
    t.backward(t.squared_norm(a));
    CHECK(t.grad(a)(0, 0) == 2.0);
    CHECK(t.grad(a)(0, 1) == 4.0);
  }
  SUBCASE("relu") {
    for (double x : {-1.0, 0.0, 1.0}) {
      Tape t;
      const auto a = t.leaf(Matrix::Constant(1, 1, x));
      t.backward(t.relu(a));
      CHECK(t.grad(a)(0, 0) == (x > 0 ? 1.0 : 0.0));
    }
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape t;
    const auto a = t.leaf(Matrix::Zero(2, 2));
    CHECK_THROWS_AS(t.backward(a), Error);
  }
}

TEST_CASE("tape primitives against finite differences") {
  std::mt19937_64 rng(21);
  const Matrix x0 = test::random_matrix(rng, 4, 3);
  const Matrix w0 = test::random_matrix(rng, 3, 3);
  const Matrix b0 = test::random_matrix(rng, 1, 3);
  const RowVector v0 = test::random_matrix(rng, 1, 3);

  // L = || concat(slice(relu(x W^T + b) expm([v]) , 0, 2), x[:,2]) - x ||^2 * 0.5
  const auto build = [&](Tape& t, const Matrix& x, const Matrix& w, const Matrix& b, const Matrix& v) {
    const auto xv = t.leaf(x);
    const auto wv = t.leaf(w);
    const auto bv = t.leaf(b);
    const auto vv = t.leaf(v);
    auto h = t.relu(t.add_row(t.matmul(xv, t.transpose(wv)), bv));
    h = t.matmul(h, t.expm(t.skew(vv, 3)));
    const auto joined = t.concat_cols(t.slice_cols(h, 0, 2), t.slice_cols(xv, 2, 1));
    const auto loss = t.scale(t.squared_norm(t.sub(joined, t.add(xv, xv))), 0.5);
    return std::array{loss, xv, wv, bv, vv};
  };
  Tape tape;
  const auto vars = build(tape, x0, w0, b0, v0);
  tape.backward(vars[0]);

  const auto eval = [&](const Matrix& x, const Matrix& w, const Matrix& b, const Matrix& v) {
    Tape t;
    return t.value(build(t, x, w, b, v)[0])(0, 0);
  };
  const double eps = 1e-6;
  std::array<Matrix, 4> inputs{x0, w0, b0, v0};
  for (std::size_t p = 0; p < 4; ++p) {
    const Matrix& grad = tape.grad(vars[p + 1]);
    for (Eigen::Index i = 0; i < inputs[p].size(); ++i) {
      auto plus = inputs;
      auto minus = inputs;
      plus[p].data()[i] += eps;
      minus[p].data()[i] -= eps;
      const double fd = (eval(plus[0], plus[1], plus[2], plus[3]) -
                         eval(minus[0], minus[1], minus[2], minus[3])) / (2 * eps);
      CHECK(test::rel_error(grad.data()[i], fd) < 1e-6);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters and advances t") {
    Matrix p = Matrix::Constant(2, 2, 3.0);
    std::vector<Matrix*> params{&p};
    auto st = AdamState::like(params);
    const std::vector<Matrix> grads{Matrix::Zero(2, 2)};
    adam_step(params, grads, st, 1e-3);
    CHECK(p.isApprox(Matrix::Constant(2, 2, 3.0)));
    CHECK(st.t == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    Matrix p(1, 3);
    p << 0, 0, 0;
    std::vector<Matrix*> params{&p};
    auto st = AdamState::like(params);
    Matrix g(1, 3);
    g << 2.0, -0.5, 1e-3;
    adam_step(params, std::vector<Matrix>{g}, st, 0.01);
    CHECK(p(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p(0, 2) == doctest::Approx(-0.01).epsilon(1e-4));
  }
  SUBCASE("x^2 descent is monotone") {
    Matrix p = Matrix::Constant(1, 1, 1.0);
    std::vector<Matrix*> params{&p};
    auto st = AdamState::like(params);
    double prev = 1.0;
    for (int i = 0; i < 10; ++i) {
      adam_step(params, std::vector<Matrix>{2.0 * p}, st, 0.1);
      CHECK(std::abs(p(0, 0)) < prev);
      prev = std::abs(p(0, 0));
    }
  }
  SUBCASE("invalid learning rate") {
    Matrix p = Matrix::Zero(1, 1);
    std::vector<Matrix*> params{&p};
    auto st = AdamState::like(params);
    CHECK_THROWS_AS(adam_step(params, std::vector<Matrix>{p}, st, 0.0), Error);
  }
}

TEST_CASE("pca_eig") {
  SUBCASE("axis aligned Gaussian") {
    std::mt19937_64 rng(4);
    Matrix x = test::random_matrix(rng, 20000, 2);
    x.col(0) *= 2.0;
    const PcaResult r = pca_eig(x);
    CHECK(r.eigenvalues(0) == doctest::Approx(4.0).epsilon(0.05));
    CHECK(r.eigenvalues(1) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(r.eigenvectors(0, 0)) > 0.999);
    CHECK(std::abs(r.eigenvectors(1, 1)) > 0.999);
  }
  SUBCASE("identical rows") {
    const PcaResult r = pca_eig(Matrix::Constant(5, 3, 1.5));
    CHECK(r.eigenvalues.isZero(0.0));
  }
  SUBCASE("two points have rank one") {
    Matrix x(2, 3);
    x << 1, 2, 3, -1, 0, 5;
    const PcaResult r = pca_eig(x);
    CHECK(r.eigenvalues(0) > 0.0);
    CHECK(r.eigenvalues(1) < 1e-12);
    CHECK(r.eigenvalues(2) < 1e-12);
  }
  SUBCASE("one row is rejected") {
    CHECK_THROWS_AS(pca_eig(Matrix::Zero(1, 3)), Error);
  }
}

#include "nlinv/linalg.hpp"

#include <array>
#include <cmath>
#include <string>

#include "nlinv/error.hpp"

namespace nlinv {

Matrix skew_from_vector(const Eigen::Ref<const RowVector>& v, std::size_t n) {
  require(static_cast<std::size_t>(v.size()) == skew_param_count(n), ErrorKind::InvalidArgument,
          "skew_from_vector: expected " + std::to_string(skew_param_count(n)) +
              " entries for n=" + std::to_string(n) + ", got " + std::to_string(v.size()));
  Matrix s = Matrix::Zero(n, n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      s(j, i) = v(k);
      s(i, j) = -v(k);
    }
  }
  return s;
}

RowVector skew_gradient(const Matrix& grad_s) {
  const auto n = static_cast<std::size_t>(grad_s.rows());
  RowVector g(skew_param_count(n));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++k) {
      g(k) = grad_s(j, i) - grad_s(i, j);
    }
  }
  return g;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

namespace {

// Higham (2005) Pade-13 coefficients and the 1-norm bound theta_13.
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};
constexpr double kTheta13 = 5.371920351148152;

double one_norm(const Matrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace

Matrix expm(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorKind::InvalidArgument,
          "expm: matrix must be square, got " + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()));
  require(a.allFinite(), ErrorKind::Numeric, "expm: non-finite input");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;

  const double norm = one_norm(a);
  if (norm == 0.0) return Matrix::Identity(n, n);
  int squarings = 0;
  if (norm > kTheta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta13)));
  }
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = scaled * scaled;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const auto& b = kPade13;

  const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
                         b[5] * a4 + b[3] * a2 + b[1] * ident;
  const Matrix u = scaled * u_inner;
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                   b[2] * a2 + b[0] * ident;

  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  require(r.allFinite(), ErrorKind::Numeric, "expm: result is not finite");
  return r;
}

Matrix expm_vjp(const Matrix& s, const Matrix& g) {
  require(s.rows() == s.cols() && g.rows() == g.cols() && s.rows() == g.rows(),
          ErrorKind::InvalidArgument, "expm_vjp: S and G must be square with equal size");
  const Eigen::Index n = s.rows();
  Matrix aug = Matrix::Zero(2 * n, 2 * n);
  aug.topLeftCorner(n, n) = s.transpose();
  aug.topRightCorner(n, n) = g;
  aug.bottomRightCorner(n, n) = s.transpose();
  return expm(aug).topRightCorner(n, n);
}

}  // namespace nlinv

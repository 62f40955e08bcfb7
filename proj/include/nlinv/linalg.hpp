#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace nlinv {

/// Dense row-major storage used for every tensor in the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Number of free parameters of an n x n skew-symmetric matrix.
constexpr std::size_t skew_param_count(std::size_t n) { return n * (n - 1) / 2; }

/// Builds S = [v]_x. Index k walks the strict upper triangle row by row,
/// (0,1), (0,2), ..., (1,2), ...; for pair (i, j) with i < j the matrix gets
/// S(j, i) = v_k and S(i, j) = -v_k. With n = 2 this yields [[0, -t], [t, 0]],
/// whose exponential rotates counter-clockwise by t.
Matrix skew_from_vector(const Eigen::Ref<const RowVector>& v, std::size_t n);

/// Adjoint of skew_from_vector: maps dL/dS to dL/dv.
RowVector skew_gradient(const Matrix& grad_s);

/// Matrix exponential, Pade-13 with scaling and squaring.
Matrix expm(const Matrix& a);

/// d<G, expm(S)>/dS, the adjoint Frechet derivative, taken from the upper
/// right block of expm([[S^T, G], [0, S^T]]).
Matrix expm_vjp(const Matrix& s, const Matrix& g);

bool all_finite(const Matrix& m);

}  // namespace nlinv

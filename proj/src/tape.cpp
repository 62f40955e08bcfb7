#include "nlinv/tape.hpp"

#include <string>
#include <utility>

#include "nlinv/error.hpp"

namespace nlinv {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::InvalidArgument,
          std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

}  // namespace

Tape::Var Tape::push(Matrix value, Backprop backprop) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backprop)});
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::leaf(Matrix value) { return push(std::move(value), nullptr); }

Tape::Var Tape::matmul(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require(va.cols() == vb.rows(), ErrorKind::InvalidArgument,
          "matmul: inner dimensions differ " + shape(va) + " * " + shape(vb));
  Matrix out = va * vb;
  const auto ia = a.id, ib = b.id;
  return push(std::move(out), [this, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia].noalias() += g * nodes_[ib].value.transpose();
    grads[ib].noalias() += nodes_[ia].value.transpose() * g;
  });
}

Tape::Var Tape::transpose(Var a) {
  const auto ia = a.id;
  return push(value(a).transpose(), [ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g.transpose();
  });
}

Tape::Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  const auto ia = a.id, ib = b.id;
  return push(value(a) + value(b), [ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g;
    grads[ib] += g;
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  const auto ia = a.id, ib = b.id;
  return push(value(a) - value(b), [ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g;
    grads[ib] -= g;
  });
}

Tape::Var Tape::add_row(Var a, Var row) {
  const Matrix& va = value(a);
  const Matrix& vr = value(row);
  require(vr.rows() == 1 && vr.cols() == va.cols(), ErrorKind::InvalidArgument,
          "add_row: expected 1x" + std::to_string(va.cols()) + " row, got " + shape(vr));
  Matrix out = va.rowwise() + vr.row(0);
  const auto ia = a.id, ir = row.id;
  return push(std::move(out), [ia, ir](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g;
    grads[ir] += g.colwise().sum();
  });
}

Tape::Var Tape::relu(Var a) {
  const auto ia = a.id;
  return push(value(a).cwiseMax(0.0), [this, ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += (nodes_[ia].value.array() > 0.0).select(g, 0.0).matrix();
  });
}

Tape::Var Tape::slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  const Matrix& va = value(a);
  require(begin >= 0 && count >= 0 && begin + count <= va.cols(), ErrorKind::InvalidArgument,
          "slice_cols: range out of bounds for " + shape(va));
  const auto ia = a.id;
  return push(va.middleCols(begin, count),
              [ia, begin, count](const Matrix& g, std::vector<Matrix>& grads) {
                grads[ia].middleCols(begin, count) += g;
              });
}

Tape::Var Tape::concat_cols(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require(va.rows() == vb.rows(), ErrorKind::InvalidArgument,
          "concat_cols: row counts differ " + shape(va) + " | " + shape(vb));
  Matrix out(va.rows(), va.cols() + vb.cols());
  out << va, vb;
  const auto ia = a.id, ib = b.id;
  const auto ca = va.cols(), cb = vb.cols();
  return push(std::move(out), [ia, ib, ca, cb](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += g.leftCols(ca);
    grads[ib] += g.rightCols(cb);
  });
}

Tape::Var Tape::squared_norm(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  const auto ia = a.id;
  return push(std::move(out), [this, ia](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += (2.0 * g(0, 0)) * nodes_[ia].value;
  });
}

Tape::Var Tape::scale(Var a, double factor) {
  const auto ia = a.id;
  return push(factor * value(a), [ia, factor](const Matrix& g, std::vector<Matrix>& grads) {
    grads[ia] += factor * g;
  });
}

Tape::Var Tape::skew(Var v, std::size_t n) {
  const Matrix& vv = value(v);
  require(vv.rows() == 1, ErrorKind::InvalidArgument, "skew: parameters must be a row vector");
  const auto iv = v.id;
  return push(skew_from_vector(vv.row(0), n), [iv](const Matrix& g, std::vector<Matrix>& grads) {
    grads[iv] += skew_gradient(g);
  });
}

Tape::Var Tape::expm(Var s) {
  const auto is = s.id;
  return push(nlinv::expm(value(s)), [this, is](const Matrix& g, std::vector<Matrix>& grads) {
    grads[is] += expm_vjp(nodes_[is].value, g);
  });
}

void Tape::backward(Var loss) {
  const Matrix& vl = value(loss);
  require(vl.rows() == 1 && vl.cols() == 1, ErrorKind::InvalidArgument,
          "backward: loss must be a 1x1 scalar, got " + shape(vl));
  std::vector<Matrix> grads(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    grads[i] = Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  grads[loss.id](0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(grads[i], grads);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].grad = std::move(grads[i]);
}

}  // namespace nlinv

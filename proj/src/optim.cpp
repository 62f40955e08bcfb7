#include "nlinv/optim.hpp"

#include <cmath>
#include <string>

#include "nlinv/error.hpp"

namespace nlinv {

AdamState AdamState::like(std::span<Matrix* const> params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const Matrix* p : params) {
    state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return state;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads,
               AdamState& state, double lr, const AdamConfig& cfg) {
  require(lr > 0.0, ErrorKind::InvalidArgument, "adam_step: learning rate must be positive");
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          ErrorKind::InvalidArgument, "adam_step: parameter/gradient/state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = *params[i];
    require(p.rows() == grads[i].rows() && p.cols() == grads[i].cols() &&
                p.rows() == state.m[i].rows() && p.cols() == state.m[i].cols(),
            ErrorKind::InvalidArgument,
            "adam_step: shape mismatch on parameter " + std::to_string(i));
  }

  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& g = grads[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    params[i]->array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

}  // namespace nlinv

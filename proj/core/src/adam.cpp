#include "cfmg/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "cfmg/errors.hpp"

namespace cfmg::nn {

void Adam::step(std::span<const ParamRef> params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Tensor2::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Tensor2::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter list changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].grad->rows() != m_[i].rows() || params[i].grad->cols() != m_[i].cols()) {
      throw std::invalid_argument("adam: state shape does not match parameter");
    }
    if (!params[i].grad->allFinite()) {
      throw NumericalError("adam: non-finite gradient in parameter tensor " + std::to_string(i));
    }
  }

  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double inv_c1 = 1.0 / c1;
  const double inv_c2 = 1.0 / c2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    // One fused pass; the expression-template form allocated temporaries
    // and dominated autoencoder training time.
    const double* __restrict g = params[i].grad->data();
    double* __restrict w = params[i].value->data();
    double* __restrict m = m_[i].data();
    double* __restrict v = v_[i].data();
    const Eigen::Index n = m_[i].size();
    for (Eigen::Index k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * (g[k] * g[k]);
      w[k] -= cfg_.lr * (m[k] * inv_c1) / (std::sqrt(v[k] * inv_c2) + cfg_.eps);
    }
  }
}

}  // namespace cfmg::nn

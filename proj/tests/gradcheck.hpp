#pragma once

// Central finite-difference checks against Network::backward.
//
// The probe loss is L = sum(R .* f(x)) for a fixed random R, so every output
// entry contributes. Relative error is measured per tensor over the checked
// entries: |g_a - g_n| / max(|g_a|, |g_n|, 1e-5). The floor covers tensors
// whose gradient vanishes, such as biases feeding batch norm, where the ratio
// would otherwise measure only finite-difference roundoff.

#include <algorithm>
#include <cmath>
#include <vector>

#include "cfmg/nn.hpp"
#include "cfmg/rng.hpp"

namespace cfmg::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline nn::Tensor2 random_tensor(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                                 double scale = 1.0) {
  nn::Tensor2 t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

inline double probe_loss(nn::Network& net, const nn::Tensor2& x, const nn::Tensor2& r,
                         nn::Mode mode) {
  return (net.forward(x, mode).array() * r.array()).sum();
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn_ += n[i] * n[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn_), 1e-5});
  return std::sqrt(diff) / denom;
}

/// Checks up to `per_tensor` entries of every parameter tensor and of the
/// input gradient. Entries are picked with `rng`; pass a large `per_tensor`
/// to check everything.
inline GradCheckResult check_network_gradients(nn::Network& net, const nn::Tensor2& x,
                                               nn::Mode mode, Rng& rng,
                                               std::size_t per_tensor = 1u << 30,
                                               double h = 1e-5) {
  const nn::Tensor2 r = random_tensor(x.rows(), net.output_dim(), rng);
  nn::GradTape tape;
  net.zero_grad();
  net.forward(x, mode, &tape);
  const nn::Tensor2 grad_x = net.backward(tape, r);

  GradCheckResult out;
  auto check = [&](nn::Tensor2& value, const nn::Tensor2& analytic_grad, nn::Tensor2* input) {
    const std::size_t n = static_cast<std::size_t>(value.size());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (per_tensor < n) {
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(per_tensor);
    }
    std::vector<double> a, num;
    for (std::size_t k : idx) {
      double& w = value.data()[k];
      const double saved = w;
      w = saved + h;
      const double lp = probe_loss(net, input ? *input : x, r, mode);
      w = saved - h;
      const double lm = probe_loss(net, input ? *input : x, r, mode);
      w = saved;
      a.push_back(analytic_grad.data()[k]);
      num.push_back((lp - lm) / (2.0 * h));
    }
    out.max_rel_error = std::max(out.max_rel_error, relative_error(a, num));
    out.checked += idx.size();
  };

  // Snapshot gradients first: probe forwards in train mode do not touch them,
  // but keep the comparison independent of that detail.
  std::vector<nn::Tensor2> grads;
  for (const auto& p : net.parameters()) grads.push_back(*p.grad);
  std::size_t i = 0;
  for (auto& p : net.parameters()) check(*p.value, grads[i++], nullptr);

  nn::Tensor2 xin = x;
  check(xin, grad_x, &xin);
  return out;
}

}  // namespace cfmg::testing

#pragma once

#include <span>
#include <vector>

#include "cfmg/nn.hpp"

namespace cfmg::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias-corrected first and second moments. Moment buffers are
/// allocated lazily on the first step to match the parameter shapes.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One update. If any gradient entry is non-finite, throws NumericalError
  /// before touching parameters or moments.
  void step(std::span<const ParamRef> params);

  long steps_taken() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Tensor2>& first_moments() const { return m_; }
  const std::vector<Tensor2>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
  long step_ = 0;
};

}  // namespace cfmg::nn

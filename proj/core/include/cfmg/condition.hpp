#pragma once

#include <Eigen/Core>

namespace cfmg {

inline constexpr Eigen::Index kConditionDim = 128;

/// Latent scene encoding produced by the depth autoencoder bottleneck.
struct ConditionVector {
  Eigen::VectorXd values = Eigen::VectorXd::Zero(kConditionDim);

  Eigen::Index size() const { return values.size(); }
  bool operator==(const ConditionVector& other) const { return values == other.values; }
};

}  // namespace cfmg

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "cfmg/rng.hpp"

namespace cfmg::nn {

/// Dense row-major matrix; one sample per row.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Mode { Train, Eval };
enum class Activation { Identity, Relu, Silu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// y = x W + b. `weight` is (in x out), `bias` is (1 x out).
struct AffineParams {
  Tensor2 weight;
  Tensor2 bias;
  Tensor2 grad_weight;
  Tensor2 grad_bias;

  AffineParams() = default;
  AffineParams(Eigen::Index in, Eigen::Index out);
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

struct BatchNormParams {
  Tensor2 gamma;
  Tensor2 beta;
  Tensor2 running_mean;
  Tensor2 running_var;
  Tensor2 grad_gamma;
  Tensor2 grad_beta;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormParams() = default;
  explicit BatchNormParams(Eigen::Index features, double momentum = 0.1, double epsilon = 1e-5);
  Eigen::Index features() const { return gamma.cols(); }
};

struct ActivationLayer {
  Activation kind = Activation::Identity;
};

/// Fixed per-feature y = x * scale + shift. Not trained; used for input and
/// output normalization.
struct ScaleShift {
  Tensor2 scale;
  Tensor2 shift;

  ScaleShift() = default;
  explicit ScaleShift(Eigen::Index features)
      : scale(Tensor2::Ones(1, features)), shift(Tensor2::Zero(1, features)) {}
  Eigen::Index features() const { return scale.cols(); }
};

using Layer = std::variant<AffineParams, BatchNormParams, ActivationLayer, ScaleShift>;

// Stateless forward kernels.

Tensor2 affine_forward(const Tensor2& x, const AffineParams& p);
Tensor2 silu(const Tensor2& x);
Tensor2 relu(const Tensor2& x);
Tensor2 apply_activation(const Tensor2& x, Activation a);
Tensor2 scale_shift_forward(const Tensor2& x, const ScaleShift& p);

/// Batch normalization. Train mode normalizes by batch statistics and
/// updates the running statistics in `p`; eval mode uses the running ones.
/// Throws std::invalid_argument for a train-mode batch smaller than 2.
Tensor2 batchnorm_forward(const Tensor2& x, BatchNormParams& p, Mode mode);

/// Eval-mode batch normalization; never mutates `p`.
Tensor2 batchnorm_eval(const Tensor2& x, const BatchNormParams& p);

/// Mean over every entry of the squared difference.
double mse(const Tensor2& pred, const Tensor2& target);

/// d mse / d pred.
Tensor2 mse_grad(const Tensor2& pred, const Tensor2& target);

/// Throws NumericalError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor2& t, const char* what);

/// Forward record of one Network pass, consumed in reverse by backward().
class GradTape {
 public:
  void clear() { records_.clear(); }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }

 private:
  friend class Network;

  struct Record {
    std::size_t layer = 0;
    Mode mode = Mode::Train;
    Tensor2 input;
    Tensor2 normalized;  // batch norm x-hat
    Tensor2 inv_std;     // batch norm 1 / sqrt(var + eps)
  };
  std::vector<Record> records_;
};

/// Mutable view of one trainable tensor and its gradient accumulator.
struct ParamRef {
  Tensor2* value = nullptr;
  Tensor2* grad = nullptr;
};

/// Feed-forward stack of affine, batch-norm and activation layers.
class Network {
 public:
  Network() = default;

  /// Appends an affine layer with uniform +-sqrt(6 / (in + out)) weights and zero bias.
  void add_affine(Eigen::Index in, Eigen::Index out, Rng& rng);
  void add_batchnorm(Eigen::Index features, double momentum = 0.1, double epsilon = 1e-5);
  void add_activation(Activation kind);
  void add_layer(Layer layer);

  Tensor2 forward(const Tensor2& x, Mode mode, GradTape* tape = nullptr);

  /// Eval-mode forward without a tape. Safe to call concurrently.
  Tensor2 infer(const Tensor2& x) const;

  /// Reverse pass over `tape`. Accumulates parameter gradients and returns the
  /// gradient with respect to the network input. The tape is consumed.
  /// With `input_grad` false and an affine first layer, the input gradient
  /// is not computed and an empty tensor is returned.
  Tensor2 backward(GradTape& tape, const Tensor2& grad_output, bool input_grad = true);

  void zero_grad();
  /// Trainable tensors only; ScaleShift layers are excluded.
  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

 private:
  std::vector<Layer> layers_;
};

}  // namespace cfmg::nn

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cfmg/adam.hpp"
#include "cfmg/condition.hpp"
#include "cfmg/errors.hpp"
#include "cfmg/nn.hpp"
#include "cfmg/pose.hpp"
#include "cfmg/rng.hpp"

namespace cfmg {

inline constexpr Eigen::Index kPoseDim = 7;
inline constexpr Eigen::Index kVelocityInputDim = kPoseDim + 1 + kConditionDim;
inline constexpr std::array<Eigen::Index, 4> kVelocityHidden{128, 256, 256, 128};

struct FlowSample;

/// Learned vector field v(g, t, c): 136 -> 128 -> 256 -> 256 -> 128 -> 7 with
/// batch norm and SiLU after every hidden affine layer.
///
/// The affine stack is wrapped in fixed input and output normalizers
/// (nn::ScaleShift) that calibrate() fits to a training set. Until then they
/// are the identity.
class VelocityNet {
 public:
  VelocityNet(Rng& rng, nn::Activation output_activation = nn::Activation::Identity,
              double bn_momentum = 0.1, double bn_epsilon = 1e-5);

  /// Wraps a loaded network. Throws DataError unless the layer stack matches
  /// the fixed architecture.
  explicit VelocityNet(nn::Network network);

  /// Single-sample field evaluation. Eval mode only: a one-row batch cannot
  /// use batch statistics.
  Velocity7 operator()(const PoseVec7& g, double t, const ConditionVector& c) const;

  /// Batched eval-mode forward over rows assembled by make_inputs().
  nn::Tensor2 predict(const nn::Tensor2& inputs) const { return net_.infer(inputs); }

  nn::Tensor2 forward(const nn::Tensor2& inputs, nn::Mode mode, nn::GradTape* tape = nullptr) {
    return net_.forward(inputs, mode, tape);
  }

  /// Fits the normalizers to `samples[indices]`: inputs are centered and
  /// scaled block-wise (quaternion, position, t, condition), outputs are
  /// scaled block-wise by the RMS target velocity. Deterministic.
  void calibrate(std::span<const FlowSample> samples, std::span<const std::size_t> indices);

  const nn::ScaleShift& input_normalizer() const;
  const nn::ScaleShift& output_normalizer() const;

  nn::Activation output_activation() const;
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

 private:
  nn::Network net_;
};

/// Writes [g(7), t(1), c(128)] into row `row` of `inputs`.
void write_input_row(nn::Tensor2& inputs, Eigen::Index row, const PoseVec7& g, double t,
                     const ConditionVector& c);

/// v(g, t, c) in the requested mode. Throws std::invalid_argument for a
/// condition that is not 128-d or t outside [0, 1].
Velocity7 vf_forward(VelocityNet& net, const PoseVec7& g, double t, const ConditionVector& c,
                     nn::Mode mode);

/// One paired training example: rigid and soft poses under a shared condition.
struct FlowSample {
  PoseVec7 g_rigid;
  PoseVec7 g_soft;
  ConditionVector condition;
};

/// FlowSample at a drawn progression time with its path state and target.
struct TimedSample {
  double t_c = 0.0;
  PoseVec7 g_t;
  Velocity7 u;
  const ConditionVector* condition = nullptr;
};

TimedSample make_timed_sample(const FlowSample& sample, double t_c);

/// Progression time t ~ U[0, 1).
inline double sample_tc(Rng& rng) { return rng.uniform(); }

struct BatchTensors {
  nn::Tensor2 inputs;
  nn::Tensor2 targets;
};

BatchTensors make_batch(std::span<const TimedSample> batch);

/// Mean over samples and the 7 components of (pred - u)^2.
double cfm_loss(const nn::Tensor2& predicted, const nn::Tensor2& targets);

/// Loss of `net` on `batch`. In train mode this also backpropagates, adding
/// to the parameter gradients. Throws std::invalid_argument on an empty batch.
double cfm_batch_loss(VelocityNet& net, std::span<const TimedSample> batch, nn::Mode mode);

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  bool hold_out_validation = true;
  bool calibrate_normalizers = true;  // fit the input/output normalizers to the training split
  nn::Activation output_activation = nn::Activation::Identity;

  void validate() const;
};

/// Split membership, a pure function of (seed, index).
bool in_validation_split(std::uint64_t seed, std::size_t index, double split_fraction);

struct FitResult {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // empty when validation is disabled or the split is empty
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Thrown when an epoch produces a non-finite loss.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, int epoch) : NumericalError(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Trains `net` on `dataset` with Adam. Every epoch re-shuffles the training
/// split and draws a fresh t_c for every sample. Batches of one are not
/// formed: a trailing singleton joins the previous batch and a one-sample
/// training set is presented twice with independent t_c draws.
///
/// `rng` is the run's generator; it should be the one that initialized `net`.
FitResult fit(VelocityNet& net, std::span<const FlowSample> dataset, const TrainConfig& cfg,
              Rng& rng);

}  // namespace cfmg

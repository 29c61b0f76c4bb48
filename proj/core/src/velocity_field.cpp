#include "cfmg/velocity_field.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cfmg {

namespace {

void check_architecture(const nn::Network& net) {
  const auto& layers = net.layers();
  auto fail = [](const std::string& why) {
    throw DataError("velocity net architecture mismatch: " + why);
  };
  if (layers.size() != kVelocityHidden.size() * 3 + 4) fail("wrong layer count");
  const auto* norm_in = std::get_if<nn::ScaleShift>(&layers[0]);
  if (!norm_in || norm_in->features() != kVelocityInputDim) fail("input normalizer");
  Eigen::Index in = kVelocityInputDim;
  std::size_t i = 1;
  for (Eigen::Index width : kVelocityHidden) {
    const auto* a = std::get_if<nn::AffineParams>(&layers[i]);
    const auto* b = std::get_if<nn::BatchNormParams>(&layers[i + 1]);
    const auto* s = std::get_if<nn::ActivationLayer>(&layers[i + 2]);
    if (!a || !b || !s) fail("hidden block " + std::to_string(i / 3) + " is not affine+bn+act");
    if (a->in_features() != in || a->out_features() != width) fail("hidden width");
    if (b->features() != width) fail("batch norm width");
    if (s->kind != nn::Activation::Silu) fail("hidden activation must be silu");
    in = width;
    i += 3;
  }
  const auto* out = std::get_if<nn::AffineParams>(&layers[i]);
  const auto* norm_out = std::get_if<nn::ScaleShift>(&layers[i + 1]);
  const auto* act = std::get_if<nn::ActivationLayer>(&layers[i + 2]);
  if (!out || !norm_out || !act || out->in_features() != in || out->out_features() != kPoseDim ||
      norm_out->features() != kPoseDim) {
    fail("output block");
  }
  if (act->kind == nn::Activation::Silu) fail("output activation must be identity or relu");
}

void check_condition(const ConditionVector& c) {
  if (c.size() != kConditionDim) {
    throw std::invalid_argument("condition vector has " + std::to_string(c.size()) +
                                " entries, expected " + std::to_string(kConditionDim));
  }
}

}  // namespace

VelocityNet::VelocityNet(Rng& rng, nn::Activation output_activation, double bn_momentum,
                         double bn_epsilon) {
  if (output_activation == nn::Activation::Silu) {
    throw std::invalid_argument("output activation must be identity or relu");
  }
  net_.add_layer(nn::ScaleShift(kVelocityInputDim));
  Eigen::Index in = kVelocityInputDim;
  for (Eigen::Index width : kVelocityHidden) {
    net_.add_affine(in, width, rng);
    net_.add_batchnorm(width, bn_momentum, bn_epsilon);
    net_.add_activation(nn::Activation::Silu);
    in = width;
  }
  net_.add_affine(in, kPoseDim, rng);
  net_.add_layer(nn::ScaleShift(kPoseDim));
  net_.add_activation(output_activation);
}

VelocityNet::VelocityNet(nn::Network network) : net_(std::move(network)) {
  check_architecture(net_);
}

namespace {

// Spread below this is treated as absent and leaves the scale at 1.
constexpr double kMinSpread = 1e-9;

double safe_inverse(double spread) { return spread > kMinSpread ? 1.0 / spread : 1.0; }

}  // namespace

void VelocityNet::calibrate(std::span<const FlowSample> samples,
                            std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("calibrate: no samples");
  const double n = static_cast<double>(indices.size());

  // Poses pool both endpoints: every g_t lies on the segment between them.
  Vec7 pose_mean = Vec7::Zero();
  Eigen::VectorXd c_mean = Eigen::VectorXd::Zero(kConditionDim);
  for (std::size_t i : indices) {
    const FlowSample& s = samples[i];
    check_condition(s.condition);
    pose_mean += s.g_rigid.values + s.g_soft.values;
    c_mean += s.condition.values;
  }
  pose_mean /= 2.0 * n;
  c_mean /= n;

  double q_var = 0.0, p_var = 0.0, c_var = 0.0, uq_sq = 0.0, up_sq = 0.0;
  for (std::size_t i : indices) {
    const FlowSample& s = samples[i];
    for (const PoseVec7* g : {&s.g_rigid, &s.g_soft}) {
      const Vec7 d = g->values - pose_mean;
      q_var += d.head<4>().squaredNorm();
      p_var += d.tail<3>().squaredNorm();
    }
    c_var += (s.condition.values - c_mean).squaredNorm();
    const Vec7 u = s.g_soft.values - s.g_rigid.values;
    uq_sq += u.head<4>().squaredNorm();
    up_sq += u.tail<3>().squaredNorm();
  }
  const double q_inv = safe_inverse(std::sqrt(q_var / (2.0 * n * 4.0)));
  const double p_inv = safe_inverse(std::sqrt(p_var / (2.0 * n * 3.0)));
  const double c_inv = safe_inverse(std::sqrt(c_var / (n * kConditionDim)));

  auto& in = std::get<nn::ScaleShift>(net_.layers().front());
  for (Eigen::Index j = 0; j < kPoseDim; ++j) {
    const double inv = j < 4 ? q_inv : p_inv;
    in.scale(0, j) = inv;
    in.shift(0, j) = -pose_mean[j] * inv;
  }
  // t ~ U[0, 1): mean 1/2, standard deviation 1/sqrt(12).
  in.scale(0, kPoseDim) = std::sqrt(12.0);
  in.shift(0, kPoseDim) = -0.5 * std::sqrt(12.0);
  for (Eigen::Index j = 0; j < kConditionDim; ++j) {
    in.scale(0, kPoseDim + 1 + j) = c_inv;
    in.shift(0, kPoseDim + 1 + j) = -c_mean[j] * c_inv;
  }

  auto& out = std::get<nn::ScaleShift>(net_.layers()[net_.layers().size() - 2]);
  const double uq = std::sqrt(uq_sq / (n * 4.0));
  const double up = std::sqrt(up_sq / (n * 3.0));
  for (Eigen::Index j = 0; j < kPoseDim; ++j) {
    const double rms = j < 4 ? uq : up;
    out.scale(0, j) = rms > kMinSpread ? rms : 1.0;
    out.shift(0, j) = 0.0;
  }
}

const nn::ScaleShift& VelocityNet::input_normalizer() const {
  return std::get<nn::ScaleShift>(net_.layers().front());
}

const nn::ScaleShift& VelocityNet::output_normalizer() const {
  return std::get<nn::ScaleShift>(net_.layers()[net_.layers().size() - 2]);
}

nn::Activation VelocityNet::output_activation() const {
  return std::get<nn::ActivationLayer>(net_.layers().back()).kind;
}

void write_input_row(nn::Tensor2& inputs, Eigen::Index row, const PoseVec7& g, double t,
                     const ConditionVector& c) {
  check_condition(c);
  auto r = inputs.row(row);
  r.head<kPoseDim>() = g.values.transpose();
  r(kPoseDim) = t;
  r.tail(kConditionDim) = c.values.transpose();
}

Velocity7 VelocityNet::operator()(const PoseVec7& g, double t, const ConditionVector& c) const {
  nn::Tensor2 x(1, kVelocityInputDim);
  write_input_row(x, 0, g, t, c);
  const nn::Tensor2 y = net_.infer(x);
  Velocity7 v;
  v.values = y.row(0).transpose();
  return v;
}

Velocity7 vf_forward(VelocityNet& net, const PoseVec7& g, double t, const ConditionVector& c,
                     nn::Mode mode) {
  check_condition(c);
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("vf_forward: t must lie in [0, 1]");
  if (mode == nn::Mode::Eval) return net(g, t, c);
  nn::Tensor2 x(1, kVelocityInputDim);
  write_input_row(x, 0, g, t, c);
  const nn::Tensor2 y = net.forward(x, mode);
  Velocity7 v;
  v.values = y.row(0).transpose();
  return v;
}

TimedSample make_timed_sample(const FlowSample& sample, double t_c) {
  TimedSample out;
  out.t_c = t_c;
  out.g_t = interpolate_pose(sample.g_rigid, sample.g_soft, t_c);
  out.u = target_velocity(sample.g_rigid, sample.g_soft);
  out.condition = &sample.condition;
  return out;
}

BatchTensors make_batch(std::span<const TimedSample> batch) {
  BatchTensors out{nn::Tensor2(static_cast<Eigen::Index>(batch.size()), kVelocityInputDim),
                   nn::Tensor2(static_cast<Eigen::Index>(batch.size()), kPoseDim)};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    write_input_row(out.inputs, row, batch[i].g_t, batch[i].t_c, *batch[i].condition);
    out.targets.row(row) = batch[i].u.values.transpose();
  }
  return out;
}

double cfm_loss(const nn::Tensor2& predicted, const nn::Tensor2& targets) {
  return nn::mse(predicted, targets);
}

double cfm_batch_loss(VelocityNet& net, std::span<const TimedSample> batch, nn::Mode mode) {
  if (batch.empty()) throw std::invalid_argument("cfm_batch_loss: empty batch");
  const BatchTensors t = make_batch(batch);
  if (mode == nn::Mode::Eval) return cfm_loss(net.predict(t.inputs), t.targets);
  nn::GradTape tape;
  const nn::Tensor2 pred = net.forward(t.inputs, mode, &tape);
  const double loss = cfm_loss(pred, t.targets);
  net.network().backward(tape, nn::mse_grad(pred, t.targets), false);
  return loss;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw std::invalid_argument("split fraction must lie in (0, 1)");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (output_activation == nn::Activation::Silu) {
    throw std::invalid_argument("output activation must be identity or relu");
  }
}

bool in_validation_split(std::uint64_t seed, std::size_t index, double split_fraction) {
  const std::uint64_t h = derive_seed(seed ^ 0x5eed5a1175ULL, static_cast<std::uint64_t>(index));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u >= split_fraction;
}

FitResult fit(VelocityNet& net, std::span<const FlowSample> dataset, const TrainConfig& cfg,
              Rng& rng) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("fit: empty dataset");

  FitResult result;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (cfg.hold_out_validation && in_validation_split(cfg.seed, i, cfg.split_fraction)) {
      result.val_indices.push_back(i);
    } else {
      result.train_indices.push_back(i);
    }
  }
  if (result.train_indices.empty()) throw std::invalid_argument("fit: training split is empty");
  if (cfg.calibrate_normalizers) net.calibrate(dataset, result.train_indices);

  // Validation progression times are drawn once so the curve is comparable across epochs.
  std::vector<TimedSample> val_batch;
  for (std::size_t i : result.val_indices) {
    val_batch.push_back(make_timed_sample(dataset[i], sample_tc(rng)));
  }

  nn::Adam adam({cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps});
  const auto params = net.network().parameters();
  std::vector<std::size_t> order = result.train_indices;
  const std::size_t n = order.size();
  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
  std::vector<TimedSample> batch;
  batch.reserve(batch_size + 1);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t start = 0;
    while (start < n) {
      std::size_t end = std::min(start + batch_size, n);
      if (n - end == 1) end = n;
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(make_timed_sample(dataset[order[k]], sample_tc(rng)));
      }
      if (batch.size() == 1) {
        batch.push_back(make_timed_sample(dataset[order[start]], sample_tc(rng)));
      }
      net.network().zero_grad();
      const double loss = cfm_batch_loss(net, batch, nn::Mode::Train);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch),
                               epoch);
      }
      try {
        adam.step(params);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch),
                               epoch);
      }
      loss_sum += loss * static_cast<double>(batch.size());
      seen += batch.size();
      start = end;
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(seen));
    if (!val_batch.empty()) {
      const double val = cfm_batch_loss(net, val_batch, nn::Mode::Eval);
      if (!std::isfinite(val)) {
        throw TrainingDiverged("non-finite validation loss at epoch " + std::to_string(epoch),
                               epoch);
      }
      result.val_loss.push_back(val);
    }
  }
  return result;
}

}  // namespace cfmg

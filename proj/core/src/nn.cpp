#include "cfmg/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "cfmg/errors.hpp"

namespace cfmg::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Silu: return "silu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "silu") return Activation::Silu;
  throw std::invalid_argument("unknown activation: " + name);
}

AffineParams::AffineParams(Eigen::Index in, Eigen::Index out)
    : weight(Tensor2::Zero(in, out)),
      bias(Tensor2::Zero(1, out)),
      grad_weight(Tensor2::Zero(in, out)),
      grad_bias(Tensor2::Zero(1, out)) {}

BatchNormParams::BatchNormParams(Eigen::Index features, double momentum_, double epsilon_)
    : gamma(Tensor2::Ones(1, features)),
      beta(Tensor2::Zero(1, features)),
      running_mean(Tensor2::Zero(1, features)),
      running_var(Tensor2::Ones(1, features)),
      grad_gamma(Tensor2::Zero(1, features)),
      grad_beta(Tensor2::Zero(1, features)),
      momentum(momentum_),
      epsilon(epsilon_) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("batch norm epsilon must be positive");
}

Tensor2 affine_forward(const Tensor2& x, const AffineParams& p) {
  if (x.cols() != p.in_features()) {
    throw std::invalid_argument("affine: input has " + std::to_string(x.cols()) +
                                " columns, layer expects " + std::to_string(p.in_features()));
  }
  Tensor2 y(x.rows(), p.out_features());
  y.noalias() = x * p.weight;
  y.rowwise() += p.bias.row(0);
  return y;
}

Tensor2 silu(const Tensor2& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

Tensor2 relu(const Tensor2& x) { return x.cwiseMax(0.0); }

Tensor2 apply_activation(const Tensor2& x, Activation a) {
  switch (a) {
    case Activation::Silu: return silu(x);
    case Activation::Relu: return relu(x);
    case Activation::Identity: break;
  }
  return x;
}

Tensor2 scale_shift_forward(const Tensor2& x, const ScaleShift& p) {
  if (x.cols() != p.features()) throw std::invalid_argument("scale-shift: feature count mismatch");
  return (x.array().rowwise() * p.scale.row(0).array()).rowwise() + p.shift.row(0).array();
}

namespace {

struct BatchNormCache {
  Tensor2 normalized;
  Tensor2 inv_std;
};

Tensor2 batchnorm_impl(const Tensor2& x, BatchNormParams& p, Mode mode, BatchNormCache* cache) {
  if (x.cols() != p.features()) {
    throw std::invalid_argument("batch norm: feature count mismatch");
  }
  const Eigen::Index n = x.rows();
  Tensor2 mean;
  Tensor2 var;
  if (mode == Mode::Train) {
    if (n < 2) throw std::invalid_argument("batch norm: train mode needs a batch of at least 2");
    mean = x.colwise().mean();
    const Tensor2 centered = x.rowwise() - mean.row(0);
    var = centered.array().square().colwise().sum() / static_cast<double>(n);
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    p.running_mean = (1.0 - p.momentum) * p.running_mean + p.momentum * mean;
    p.running_var = (1.0 - p.momentum) * p.running_var + (p.momentum * unbias) * var;
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  const Tensor2 inv_std = (var.array() + p.epsilon).rsqrt().matrix();
  Tensor2 xhat = (x.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array();
  Tensor2 y = (xhat.array().rowwise() * p.gamma.row(0).array()).rowwise() + p.beta.row(0).array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

}  // namespace

Tensor2 batchnorm_forward(const Tensor2& x, BatchNormParams& p, Mode mode) {
  return batchnorm_impl(x, p, mode, nullptr);
}

Tensor2 batchnorm_eval(const Tensor2& x, const BatchNormParams& p) {
  if (x.cols() != p.features()) {
    throw std::invalid_argument("batch norm: feature count mismatch");
  }
  const Tensor2 inv_std = (p.running_var.array() + p.epsilon).rsqrt().matrix();
  Tensor2 xhat =
      (x.rowwise() - p.running_mean.row(0)).array().rowwise() * inv_std.row(0).array();
  return (xhat.array().rowwise() * p.gamma.row(0).array()).rowwise() + p.beta.row(0).array();
}

double mse(const Tensor2& pred, const Tensor2& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse: shape mismatch");
  }
  if (pred.size() == 0) throw std::invalid_argument("mse: empty input");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Tensor2 mse_grad(const Tensor2& pred, const Tensor2& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse: shape mismatch");
  }
  return (2.0 / static_cast<double>(pred.size())) * (pred - target);
}

void require_finite(const Tensor2& t, const char* what) {
  if (!t.allFinite()) throw NumericalError(std::string("non-finite values in ") + what);
}

void Network::add_affine(Eigen::Index in, Eigen::Index out, Rng& rng) {
  AffineParams p(in, out);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (Eigen::Index r = 0; r < in; ++r) {
    for (Eigen::Index c = 0; c < out; ++c) p.weight(r, c) = rng.uniform(-limit, limit);
  }
  layers_.emplace_back(std::move(p));
}

void Network::add_batchnorm(Eigen::Index features, double momentum, double epsilon) {
  layers_.emplace_back(BatchNormParams(features, momentum, epsilon));
}

void Network::add_activation(Activation kind) { layers_.emplace_back(ActivationLayer{kind}); }

void Network::add_layer(Layer layer) { layers_.push_back(std::move(layer)); }

Tensor2 Network::forward(const Tensor2& x, Mode mode, GradTape* tape) {
  if (tape) tape->clear();
  Tensor2 h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    GradTape::Record record;
    record.layer = i;
    record.mode = mode;
    Tensor2 next = std::visit(
        Overloaded{
            [&](AffineParams& p) { return affine_forward(h, p); },
            [&](BatchNormParams& p) {
              BatchNormCache cache;
              Tensor2 y = batchnorm_impl(h, p, mode, tape ? &cache : nullptr);
              record.normalized = std::move(cache.normalized);
              record.inv_std = std::move(cache.inv_std);
              return y;
            },
            [&](ActivationLayer& a) { return apply_activation(h, a.kind); },
            [&](ScaleShift& p) { return scale_shift_forward(h, p); },
        },
        layers_[i]);
    if (tape) {
      record.input = std::move(h);
      tape->records_.push_back(std::move(record));
    }
    h = std::move(next);
  }
  return h;
}

Tensor2 Network::infer(const Tensor2& x) const {
  Tensor2 h = x;
  for (const auto& layer : layers_) {
    h = std::visit(Overloaded{
                       [&](const AffineParams& p) { return affine_forward(h, p); },
                       [&](const BatchNormParams& p) { return batchnorm_eval(h, p); },
                       [&](const ActivationLayer& a) { return apply_activation(h, a.kind); },
                       [&](const ScaleShift& p) { return scale_shift_forward(h, p); },
                   },
                   layer);
  }
  return h;
}

Tensor2 Network::backward(GradTape& tape, const Tensor2& grad_output, bool input_grad) {
  if (tape.empty()) throw std::logic_error("backward called without a recorded forward pass");
  Tensor2 grad = grad_output;
  for (auto it = tape.records_.rbegin(); it != tape.records_.rend(); ++it) {
    const GradTape::Record& rec = *it;
    const bool first = std::next(it) == tape.records_.rend();
    grad = std::visit(
        Overloaded{
            [&](AffineParams& p) -> Tensor2 {
              p.grad_weight.noalias() += rec.input.transpose() * grad;
              p.grad_bias += grad.colwise().sum();
              if (first && !input_grad) return Tensor2();
              Tensor2 dx(grad.rows(), p.in_features());
              dx.noalias() = grad * p.weight.transpose();
              return dx;
            },
            [&](BatchNormParams& p) -> Tensor2 {
              p.grad_gamma += (grad.array() * rec.normalized.array()).colwise().sum().matrix();
              p.grad_beta += grad.colwise().sum();
              const Tensor2 dxhat = grad.array().rowwise() * p.gamma.row(0).array();
              if (rec.mode == Mode::Eval) {
                return dxhat.array().rowwise() * rec.inv_std.row(0).array();
              }
              const double n = static_cast<double>(grad.rows());
              const Tensor2 sum_dxhat = dxhat.colwise().sum();
              const Tensor2 sum_dxhat_xhat =
                  (dxhat.array() * rec.normalized.array()).colwise().sum().matrix();
              Tensor2 dx = (n * dxhat.array()).rowwise() - sum_dxhat.row(0).array();
              dx.array() -= rec.normalized.array().rowwise() * sum_dxhat_xhat.row(0).array();
              dx.array().rowwise() *= (rec.inv_std.row(0).array() / n);
              return dx;
            },
            [&](ActivationLayer& a) -> Tensor2 {
              switch (a.kind) {
                case Activation::Relu:
                  return (rec.input.array() > 0.0).select(grad, 0.0);
                case Activation::Silu:
                  return grad.array() * rec.input.unaryExpr([](double v) {
                                               const double s = sigmoid(v);
                                               return s * (1.0 + v * (1.0 - s));
                                             }).array();
                case Activation::Identity: break;
              }
              return grad;
            },
            [&](ScaleShift& p) -> Tensor2 {
              return grad.array().rowwise() * p.scale.row(0).array();
            },
        },
        layers_[rec.layer]);
  }
  tape.clear();
  return grad;
}

void Network::zero_grad() {
  for (auto& layer : layers_) {
    if (auto* a = std::get_if<AffineParams>(&layer)) {
      a->grad_weight.setZero();
      a->grad_bias.setZero();
    } else if (auto* b = std::get_if<BatchNormParams>(&layer)) {
      b->grad_gamma.setZero();
      b->grad_beta.setZero();
    }
  }
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (auto& layer : layers_) {
    if (auto* a = std::get_if<AffineParams>(&layer)) {
      out.push_back({&a->weight, &a->grad_weight});
      out.push_back({&a->bias, &a->grad_bias});
    } else if (auto* b = std::get_if<BatchNormParams>(&layer)) {
      out.push_back({&b->gamma, &b->grad_gamma});
      out.push_back({&b->beta, &b->grad_beta});
    }
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    if (const auto* a = std::get_if<AffineParams>(&layer)) {
      n += static_cast<std::size_t>(a->weight.size() + a->bias.size());
    } else if (const auto* b = std::get_if<BatchNormParams>(&layer)) {
      n += static_cast<std::size_t>(b->gamma.size() + b->beta.size());
    }
  }
  return n;
}

Eigen::Index Network::input_dim() const {
  for (const auto& layer : layers_) {
    if (const auto* a = std::get_if<AffineParams>(&layer)) return a->in_features();
    if (const auto* b = std::get_if<BatchNormParams>(&layer)) return b->features();
    if (const auto* c = std::get_if<ScaleShift>(&layer)) return c->features();
  }
  return 0;
}

Eigen::Index Network::output_dim() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (const auto* a = std::get_if<AffineParams>(&*it)) return a->out_features();
    if (const auto* b = std::get_if<BatchNormParams>(&*it)) return b->features();
    if (const auto* c = std::get_if<ScaleShift>(&*it)) return c->features();
  }
  return 0;
}

}  // namespace cfmg::nn

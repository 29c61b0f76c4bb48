#include "cfmg/encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cfmg/adam.hpp"
#include "cfmg/errors.hpp"

namespace cfmg {

namespace {

constexpr std::array<Eigen::Index, 2> kEncoderHidden{512, 256};

nn::Tensor2 stack_normalized(std::span<const DepthImage> images, std::span<const std::size_t> idx,
                             Eigen::Index pixels) {
  nn::Tensor2 out(static_cast<Eigen::Index>(idx.size()), pixels);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = normalize_depth(images[idx[r]]).row(0);
  }
  return out;
}

void check_stack(const nn::Network& net, std::span<const Eigen::Index> widths, const char* name) {
  const auto& layers = net.layers();
  const std::size_t affines = widths.size() - 1;
  if (layers.size() != affines * 2 - 1) {
    throw DataError(std::string(name) + ": unexpected layer count");
  }
  for (std::size_t i = 0; i < affines; ++i) {
    const auto* a = std::get_if<nn::AffineParams>(&layers[2 * i]);
    if (!a || a->in_features() != widths[i] || a->out_features() != widths[i + 1]) {
      throw DataError(std::string(name) + ": affine layer " + std::to_string(i) + " mismatch");
    }
    if (i + 1 < affines) {
      const auto* s = std::get_if<nn::ActivationLayer>(&layers[2 * i + 1]);
      if (!s || s->kind != nn::Activation::Silu) {
        throw DataError(std::string(name) + ": expected silu after affine " + std::to_string(i));
      }
    }
  }
}

std::vector<Eigen::Index> encoder_widths(Eigen::Index pixels) {
  return {pixels, kEncoderHidden[0], kEncoderHidden[1], kConditionDim};
}

std::vector<Eigen::Index> decoder_widths(Eigen::Index pixels) {
  return {kConditionDim, kEncoderHidden[1], kEncoderHidden[0], pixels};
}

void build_stack(nn::Network& net, const std::vector<Eigen::Index>& widths, Rng& rng) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    net.add_affine(widths[i], widths[i + 1], rng);
    if (i + 2 < widths.size()) net.add_activation(nn::Activation::Silu);
  }
}

}  // namespace

nn::Tensor2 normalize_depth(const DepthImage& img, double z_max) {
  nn::Tensor2 out(1, static_cast<Eigen::Index>(img.pixel_count()));
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double v = img.values[i];
    if (!(v >= 0.0 && v <= z_max)) {
      throw std::invalid_argument("depth value " + std::to_string(v) + " outside [0, z_max]");
    }
    out(0, static_cast<Eigen::Index>(i)) = v / z_max;
  }
  return out;
}

DepthImage denormalize_depth(const nn::Tensor2& row, std::uint32_t width, std::uint32_t height,
                             double z_max) {
  if (row.size() != static_cast<Eigen::Index>(width) * height) {
    throw std::invalid_argument("denormalize_depth: size mismatch");
  }
  DepthImage img(width, height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    img.values[i] = static_cast<float>(row(static_cast<Eigen::Index>(i)) * z_max);
  }
  return img;
}

AutoencoderNet::AutoencoderNet(std::uint32_t width, std::uint32_t height, Rng& rng)
    : width_(width), height_(height) {
  if (width == 0 || height == 0) throw std::invalid_argument("image size must be positive");
  const Eigen::Index pixels = static_cast<Eigen::Index>(width) * height;
  build_stack(encoder_, encoder_widths(pixels), rng);
  build_stack(decoder_, decoder_widths(pixels), rng);
}

AutoencoderNet::AutoencoderNet(std::uint32_t width, std::uint32_t height, nn::Network encoder,
                               nn::Network decoder)
    : width_(width), height_(height), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(width) * height;
  check_stack(encoder_, encoder_widths(pixels), "encoder");
  check_stack(decoder_, decoder_widths(pixels), "decoder");
}

nn::Tensor2 AutoencoderNet::reconstruct_rows(const nn::Tensor2& normalized) const {
  return decoder_.infer(encoder_.infer(normalized));
}

ConditionVector encode(const AutoencoderNet& net, const DepthImage& img) {
  if (img.width != net.image_width() || img.height != net.image_height()) {
    throw std::invalid_argument("encode: image is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + ", encoder expects " +
                                std::to_string(net.image_width()) + "x" +
                                std::to_string(net.image_height()));
  }
  const nn::Tensor2 z = net.encode_rows(normalize_depth(img));
  ConditionVector c;
  c.values = z.row(0).transpose();
  return c;
}

AutoencoderHistory train_autoencoder(AutoencoderNet& net, std::span<const DepthImage> corpus,
                                     const AutoencoderTrainConfig& cfg, Rng& rng) {
  if (corpus.empty()) throw std::invalid_argument("train_autoencoder: empty corpus");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("bad autoencoder config");
  const Eigen::Index pixels = static_cast<Eigen::Index>(net.image_width()) * net.image_height();
  for (const auto& img : corpus) {
    if (img.width != net.image_width() || img.height != net.image_height()) {
      throw std::invalid_argument("train_autoencoder: corpus image size mismatch");
    }
  }

  nn::Adam enc_adam({cfg.lr});
  nn::Adam dec_adam({cfg.lr});
  const auto enc_params = net.encoder().parameters();
  const auto dec_params = net.decoder().parameters();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const nn::Tensor2 all = stack_normalized(corpus, order, pixels);

  AutoencoderHistory history;
  nn::GradTape enc_tape;
  nn::GradTape dec_tape;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(start + bs, order.size());
      nn::Tensor2 x(static_cast<Eigen::Index>(end - start), pixels);
      for (std::size_t k = start; k < end; ++k) {
        x.row(static_cast<Eigen::Index>(k - start)) = all.row(static_cast<Eigen::Index>(order[k]));
      }
      net.encoder().zero_grad();
      net.decoder().zero_grad();
      const nn::Tensor2 z = net.encoder().forward(x, nn::Mode::Train, &enc_tape);
      const nn::Tensor2 y = net.decoder().forward(z, nn::Mode::Train, &dec_tape);
      const double loss = nn::mse(y, x);
      if (!std::isfinite(loss)) {
        throw NumericalError("non-finite autoencoder loss at epoch " + std::to_string(epoch));
      }
      const nn::Tensor2 dz = net.decoder().backward(dec_tape, nn::mse_grad(y, x));
      net.encoder().backward(enc_tape, dz, false);
      enc_adam.step(enc_params);
      dec_adam.step(dec_params);
      sum += loss * static_cast<double>(end - start);
    }
    history.train_mse.push_back(sum / static_cast<double>(order.size()));
  }
  return history;
}

double reconstruction_mse(const AutoencoderNet& net, std::span<const DepthImage> images) {
  if (images.empty()) throw std::invalid_argument("reconstruction_mse: no images");
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const nn::Tensor2 x =
      stack_normalized(images, idx, static_cast<Eigen::Index>(net.image_width()) *
                                        net.image_height());
  return nn::mse(net.reconstruct_rows(x), x);
}

}  // namespace cfmg

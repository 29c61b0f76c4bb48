#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfmg/condition.hpp"
#include "cfmg/nn.hpp"
#include "cfmg/rng.hpp"

namespace cfmg {

inline constexpr double kDepthMax = 1.0;  // meters

/// Top-down orthographic depth image, row-major, meters. Values are stored
/// as 32-bit floats so an in-memory image equals its on-disk form.
struct DepthImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> values;

  DepthImage() = default;
  DepthImage(std::uint32_t w, std::uint32_t h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(std::uint32_t row, std::uint32_t col) { return values[row * width + col]; }
  float at(std::uint32_t row, std::uint32_t col) const { return values[row * width + col]; }
  std::size_t pixel_count() const { return values.size(); }
  bool operator==(const DepthImage&) const = default;
};

/// Depth / z_max as a (1 x pixels) row. Throws std::invalid_argument for a
/// value outside [0, z_max].
nn::Tensor2 normalize_depth(const DepthImage& img, double z_max = kDepthMax);

/// Inverse of normalize_depth.
DepthImage denormalize_depth(const nn::Tensor2& row, std::uint32_t width, std::uint32_t height,
                             double z_max = kDepthMax);

/// Fully-affine encoder/decoder with a 128-wide linear bottleneck:
/// pixels -> 512 -> 256 -> 128 -> 256 -> 512 -> pixels, SiLU between.
class AutoencoderNet {
 public:
  AutoencoderNet(std::uint32_t width, std::uint32_t height, Rng& rng);

  /// Wraps loaded halves; throws DataError if the layer stacks do not match.
  AutoencoderNet(std::uint32_t width, std::uint32_t height, nn::Network encoder,
                 nn::Network decoder);

  std::uint32_t image_width() const { return width_; }
  std::uint32_t image_height() const { return height_; }

  nn::Network& encoder() { return encoder_; }
  nn::Network& decoder() { return decoder_; }
  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }

  /// Latent rows for a batch of normalized images.
  nn::Tensor2 encode_rows(const nn::Tensor2& normalized) const { return encoder_.infer(normalized); }
  nn::Tensor2 reconstruct_rows(const nn::Tensor2& normalized) const;

 private:
  std::uint32_t width_;
  std::uint32_t height_;
  nn::Network encoder_;
  nn::Network decoder_;
};

/// Bottleneck vector of `img`. Throws std::invalid_argument on a size mismatch.
ConditionVector encode(const AutoencoderNet& net, const DepthImage& img);

struct AutoencoderTrainConfig {
  int epochs = 500;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct AutoencoderHistory {
  std::vector<double> train_mse;  // per epoch, mean of the epoch's minibatch losses
};

/// Minimizes reconstruction MSE on normalized depth. Throws NumericalError
/// on a non-finite loss.
AutoencoderHistory train_autoencoder(AutoencoderNet& net, std::span<const DepthImage> corpus,
                                     const AutoencoderTrainConfig& cfg, Rng& rng);

/// Mean reconstruction MSE in normalized units over `images`.
double reconstruction_mse(const AutoencoderNet& net, std::span<const DepthImage> images);

}  // namespace cfmg

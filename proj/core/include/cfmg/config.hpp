#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cfmg/encoder.hpp"
#include "cfmg/eval.hpp"
#include "cfmg/ode.hpp"
#include "cfmg/scene.hpp"
#include "cfmg/velocity_field.hpp"

namespace cfmg {

/// Every tunable of a run. Read from a flat key=value file and overridden by
/// command-line flags. Output locations (`out`, `data`) are not part of the
/// serialized form so relocating a run does not change its artifacts.
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out = "run";
  std::filesystem::path data;  // dataset directory; defaults to `out`

  // gen-data
  int pairs_per_object = 15;
  int corpus_size = 865;
  std::uint32_t image_size = kImageSize;

  // train: autoencoder
  int ae_epochs = 500;
  int ae_batch_size = 32;
  double ae_lr = 1e-3;

  // train: velocity field
  int cfm_epochs = 2000;
  int cfm_batch_size = 32;
  double cfm_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double split_fraction = 0.8;
  nn::Activation output_activation = nn::Activation::Identity;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  // integrator
  OdeMethod ode_method = OdeMethod::Dopri5;
  double rtol = 1e-5;
  double atol = 1e-7;
  double initial_step = 0.05;
  int max_steps = 10000;
  double min_step = 1e-10;

  // eval
  int eval_trials_seen = 25;    // per seen template
  int eval_trials_unseen = 50;  // per unseen template
  double max_tilt_deg = 10.0;
  double max_offset_fraction = 0.25;
  double min_depth = 0.01;
  double sphere_band = 0.01;

  // export-flow
  int export_count = 16;

  /// Sets one key from its text form. Throws UsageError for an unknown key
  /// or a malformed value.
  void set(const std::string& key, const std::string& value);

  /// Applies every `key = value` line of `text`; `#` starts a comment.
  void apply_text(const std::string& text);
  void load_file(const std::filesystem::path& path);

  /// Canonical key=value form (sorted keys, round-trip precision).
  std::string to_text() const;

  /// Throws UsageError for out-of-range values.
  void validate() const;

  std::filesystem::path data_dir() const { return data.empty() ? out : data; }

  TrainConfig train_config() const;
  AutoencoderTrainConfig autoencoder_config() const;
  IntegratorConfig integrator_config() const;
  SuccessCriteria success_criteria() const;
  GenerateOptions generate_options() const;
};

}  // namespace cfmg

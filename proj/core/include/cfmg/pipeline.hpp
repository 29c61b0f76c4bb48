#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "cfmg/config.hpp"
#include "cfmg/io.hpp"

namespace cfmg {

// Artifact names inside the output directory.
inline constexpr const char* kEncoderCheckpoint = "encoder.ckpt";
inline constexpr const char* kVelocityCheckpoint = "velocity.ckpt";
inline constexpr const char* kTrainReport = "train_report.txt";
inline constexpr const char* kTrainReportJson = "train_report.jsonl";
inline constexpr const char* kEvalReport = "eval_report.txt";
inline constexpr const char* kEvalReportJson = "eval_report.jsonl";
inline constexpr const char* kFlowExport = "flow_trajectories.txt";

// Sub-stream ids under the run seed.
inline constexpr std::uint64_t kStreamData = 0;
inline constexpr std::uint64_t kStreamAutoencoder = 1;
inline constexpr std::uint64_t kStreamVelocity = 2;
inline constexpr std::uint64_t kStreamEvalScenes = 3;
inline constexpr std::uint64_t kStreamEvalTrials = 4;
inline constexpr std::uint64_t kStreamShuffle = 5;

/// Dataset plus its decoded images.
struct LoadedData {
  io::Dataset dataset;
  std::vector<DepthImage> pair_images;
  std::vector<DepthImage> corpus;
};

LoadedData load_data(const std::filesystem::path& dir);

/// Encodes every pair image and hemisphere-aligns g_soft to g_rigid.
std::vector<FlowSample> make_flow_samples(const LoadedData& data, const AutoencoderNet& encoder);

struct RecoveryStats {
  std::size_t total = 0;
  std::size_t within = 0;
  std::vector<PoseError> errors;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(within) / total; }
};

/// Integrates each sample's rigid pose and compares the endpoint with its soft
/// pose. With `condition_source`, sample indices[k] is solved under the
/// condition of sample condition_source[k] instead of its own.
RecoveryStats flow_recovery(const VelocityNet& net, std::span<const FlowSample> samples,
                            std::span<const std::size_t> indices, const IntegratorConfig& cfg,
                            double max_angle, double max_distance,
                            std::span<const std::size_t> condition_source = {});

/// Recovery tolerances for held-out pairs.
inline constexpr double kRecoveryAngle = 3.0 * 3.14159265358979323846 / 180.0;
inline constexpr double kRecoveryDistance = 0.005;

struct TrainOutcome {
  AutoencoderHistory autoencoder;
  double autoencoder_mse = 0.0;
  FitResult velocity;
  RecoveryStats recovery;           // validation split, own conditions
  RecoveryStats shuffled_recovery;  // validation split, permuted conditions
};

std::size_t cmd_gen_data(const RunConfig& cfg, std::ostream& log);
TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log);
FlowResult cmd_infer(const RunConfig& cfg, const PoseVec7& g0, const DepthImage& scene,
                     const std::optional<std::filesystem::path>& trajectory, std::ostream& log);
EvalResult cmd_eval(const RunConfig& cfg, std::ostream& log);
std::size_t cmd_export_flow(const RunConfig& cfg, std::ostream& log);

/// Text and line-delimited renderings of a success table.
std::string format_success_table(const SuccessTable& table);
std::string success_table_jsonl(const SuccessTable& table, const RunConfig& cfg);

}  // namespace cfmg

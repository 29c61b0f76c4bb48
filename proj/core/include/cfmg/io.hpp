#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfmg/encoder.hpp"
#include "cfmg/scene.hpp"
#include "cfmg/velocity_field.hpp"

namespace cfmg::io {

// Depth image file: "DIMG", u32 version, u32 width, u32 height, then
// width * height f32, all little-endian, row-major, meters.
inline constexpr std::uint32_t kDepthImageVersion = 1;

std::vector<std::uint8_t> encode_depth_image(const DepthImage& img);
DepthImage decode_depth_image(const std::vector<std::uint8_t>& bytes);
void write_depth_image(const std::filesystem::path& path, const DepthImage& img);
DepthImage read_depth_image(const std::filesystem::path& path);

// Checkpoint file: "CFMG", u32 version, u32 kind, u32 descriptor length, the
// JSON descriptor (architecture, training metadata, run config), u64 parameter
// count, then f64 parameters. Parameters follow the layers in forward order;
// within a layer: affine weight (row-major) then bias; batch norm gamma, beta,
// running mean, running variance; scale-shift scale then shift.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { Velocity = 1, Autoencoder = 2 };

struct TrainingMetadata {
  int epochs = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  std::uint64_t seed = 0;
  std::string config;  // RunConfig::to_text()
  bool operator==(const TrainingMetadata&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const VelocityNet& net,
                     const TrainingMetadata& meta);
void save_checkpoint(const std::filesystem::path& path, const AutoencoderNet& net,
                     const TrainingMetadata& meta);

struct LoadedVelocity {
  VelocityNet net;
  TrainingMetadata meta;
};
struct LoadedAutoencoder {
  AutoencoderNet net;
  TrainingMetadata meta;
};

/// Throws DataError on a bad magic, unknown version, wrong kind, or an
/// architecture that does not match the expected network.
LoadedVelocity load_velocity_checkpoint(const std::filesystem::path& path);
LoadedAutoencoder load_autoencoder_checkpoint(const std::filesystem::path& path);

// Paired-grasp dataset: JSON lines. The first line is a header
// {"format":"cfmg-pairs","version":1,"seed":...,"config":"..."}; every other
// line is one pair with its scene, rank, depth offset, g_rigid and g_soft as
// 7-tuples [qw,qx,qy,qz,px,py,pz], and the relative path of its depth image.
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetRecord {
  PairedGrasp pair;
  std::string image;  // relative to the dataset directory
};

struct Dataset {
  std::uint64_t seed = 0;
  std::string config;
  std::vector<DatasetRecord> records;
  std::vector<std::string> corpus;  // relative image paths
};

/// Writes dataset.jsonl, corpus.jsonl and every image under `dir`.
void write_dataset(const std::filesystem::path& dir, const GeneratedData& data,
                   std::uint64_t seed, const std::string& config);
Dataset read_dataset(const std::filesystem::path& dir);

std::string scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace cfmg::io

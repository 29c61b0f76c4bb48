#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfmg/encoder.hpp"
#include "cfmg/pose.hpp"
#include "cfmg/rng.hpp"

namespace cfmg {

inline constexpr double kWorkspaceSize = 0.30;  // square window centered on the origin
inline constexpr double kCameraHeight = 0.5;    // orthographic camera plane, z = 0.5
inline constexpr std::uint32_t kImageSize = 32;
inline constexpr double kMinSoftDepth = 0.01;
inline constexpr double kMaxSoftDepth = 0.07;

enum class ShapeKind { Cylinder, Sphere, Box, Flat };
inline constexpr std::array<ShapeKind, 4> kAllShapes{ShapeKind::Cylinder, ShapeKind::Sphere,
                                                     ShapeKind::Box, ShapeKind::Flat};

std::string to_string(ShapeKind s);
ShapeKind shape_from_string(const std::string& name);

/// One primitive object standing on the table.
///
/// dims: cylinder (radius, height, -), sphere (radius, -, -), box (x, y, z
/// extents), flat (x, y extents, thickness). `sink` lowers the object into a
/// depression in the table; only its part above z = 0 is visible.
struct SceneSpec {
  ShapeKind shape = ShapeKind::Cylinder;
  Eigen::Vector3d dims = Eigen::Vector3d::Zero();
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double yaw = 0.0;
  double sink = 0.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for non-positive dims, shape-specific
  /// limits, or an object leaving the workspace window.
  void validate() const;
  bool operator==(const SceneSpec&) const = default;
};

double object_height(const SceneSpec& s);
double top_height(const SceneSpec& s);
/// Smaller horizontal half-extent (radius for round shapes).
double half_extent(const SceneSpec& s);
/// Height of the sphere's widest section; only meaningful for spheres.
double equator_height(const SceneSpec& s);

/// Height of the first surface above (x, y); 0 on the bare table.
double surface_height(const SceneSpec& s, double x, double y);

/// Table-frame (x, y) of a pixel center. Row 0 is the +y edge.
Eigen::Vector2d pixel_center(std::uint32_t row, std::uint32_t col, std::uint32_t width,
                             std::uint32_t height);

/// Point-sampled orthographic depth from the camera plane; table = 0.5 m.
DepthImage render_depth(const SceneSpec& s, std::uint32_t width = kImageSize,
                        std::uint32_t height = kImageSize);
DepthImage render_empty(std::uint32_t width = kImageSize, std::uint32_t height = kImageSize);

/// Rigid-gripper style pose. Rank 1 is the best-ranked proposal: tilt up to
/// 5 deg and offset up to 0.5 cm. Both bounds grow linearly to 30 deg and 40%
/// of the half-extent at rank 20. Depth is 0-1 cm below the object top.
/// Throws std::invalid_argument for rank outside [1, 20].
GraspPose synth_rigid_grasp(const SceneSpec& s, int rank, Rng& rng);

/// Depth below the object top of the corrected grasp, quantized to 1 cm in
/// [1 cm, 7 cm].
double soft_grasp_depth(const SceneSpec& s);

/// Deterministic rigid -> soft correction: top-down approach keeping the
/// heading, lateral position on the object axis, depth from soft_grasp_depth.
GraspPose correction_oracle(const SceneSpec& s, const GraspPose& rigid);

/// Parametric object family; instances jitter dims, position and yaw.
struct ObjectTemplate {
  std::string name;
  ShapeKind shape = ShapeKind::Cylinder;
  Eigen::Vector3d dims = Eigen::Vector3d::Zero();
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double yaw = 0.0;
  double sink = 0.0;
  double dim_jitter = 0.05;     // relative, uniform +-
  double position_jitter = 0.002;  // meters, uniform +- per axis
  double yaw_jitter = 0.26;     // radians, uniform +-
};

SceneSpec instantiate(const ObjectTemplate& t, Rng& rng);

/// The eight training object families.
std::vector<ObjectTemplate> default_seen_templates();
/// Held-out families with dims >= 20% outside the training jitter, including a
/// sphere resting in a shallow depression.
std::vector<ObjectTemplate> default_unseen_templates();

/// Broad random primitive for autoencoder pre-training.
SceneSpec random_primitive(Rng& rng);

struct PairedGrasp {
  SceneSpec scene;
  std::string template_name;
  int rank = 1;
  GraspPose g_rigid;
  GraspPose g_soft;
  double depth_offset = 0.0;
};

struct GenerateOptions {
  int pairs_per_object = 15;
  int corpus_size = 865;
  std::uint32_t image_width = kImageSize;
  std::uint32_t image_height = kImageSize;
};

struct GeneratedData {
  std::vector<PairedGrasp> pairs;
  std::vector<DepthImage> pair_images;  // pair_images[i] belongs to pairs[i]
  std::vector<DepthImage> corpus;       // autoencoder corpus; starts with pair_images
};

/// pairs_per_object pairs per template, ranks spread evenly over 1..20. The
/// corpus is topped up to corpus_size with random primitives.
GeneratedData generate_dataset(std::span<const ObjectTemplate> templates,
                               const GenerateOptions& opts, Rng& rng);

}  // namespace cfmg

#include "cfmg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cfmg/errors.hpp"

namespace cfmg {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double bounding_radius(const SceneSpec& s) {
  switch (s.shape) {
    case ShapeKind::Cylinder:
    case ShapeKind::Sphere: return s.dims.x();
    case ShapeKind::Box:
    case ShapeKind::Flat: return 0.5 * std::hypot(s.dims.x(), s.dims.y());
  }
  return 0.0;
}

}  // namespace

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Flat: return "flat";
  }
  return "cylinder";
}

ShapeKind shape_from_string(const std::string& name) {
  for (ShapeKind s : kAllShapes) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown shape: " + name);
}

void SceneSpec::validate() const {
  const int used = shape == ShapeKind::Sphere ? 1 : shape == ShapeKind::Cylinder ? 2 : 3;
  for (int i = 0; i < used; ++i) {
    if (!(dims[i] > 0.0) || !std::isfinite(dims[i])) {
      throw std::invalid_argument(to_string(shape) + ": dimensions must be positive");
    }
  }
  switch (shape) {
    case ShapeKind::Cylinder:
    case ShapeKind::Box:
      if (object_height(*this) < 0.02) {
        throw std::invalid_argument(to_string(shape) + ": height must be at least 2 cm");
      }
      break;
    case ShapeKind::Sphere:
      if (dims.x() > 0.08) throw std::invalid_argument("sphere: radius above 8 cm");
      break;
    case ShapeKind::Flat:
      if (dims.z() > 0.02) throw std::invalid_argument("flat: thickness above 2 cm");
      break;
  }
  if (!(sink >= 0.0) || sink >= 0.5 * object_height(*this)) {
    throw std::invalid_argument("sink must lie in [0, half the object height)");
  }
  if (top_height(*this) >= kCameraHeight) {
    throw std::invalid_argument("object reaches the camera plane");
  }
  const double half = 0.5 * kWorkspaceSize;
  const double r = bounding_radius(*this);
  if (std::abs(position.x()) + r > half || std::abs(position.y()) + r > half) {
    throw std::invalid_argument("object leaves the workspace window");
  }
}

double object_height(const SceneSpec& s) {
  switch (s.shape) {
    case ShapeKind::Cylinder: return s.dims.y();
    case ShapeKind::Sphere: return 2.0 * s.dims.x();
    case ShapeKind::Box:
    case ShapeKind::Flat: return s.dims.z();
  }
  return 0.0;
}

double top_height(const SceneSpec& s) { return object_height(s) - s.sink; }

double half_extent(const SceneSpec& s) {
  switch (s.shape) {
    case ShapeKind::Cylinder:
    case ShapeKind::Sphere: return s.dims.x();
    case ShapeKind::Box:
    case ShapeKind::Flat: return 0.5 * std::min(s.dims.x(), s.dims.y());
  }
  return 0.0;
}

double equator_height(const SceneSpec& s) { return s.dims.x() - s.sink; }

double surface_height(const SceneSpec& s, double x, double y) {
  const double dx = x - s.position.x();
  const double dy = y - s.position.y();
  switch (s.shape) {
    case ShapeKind::Cylinder:
      return dx * dx + dy * dy <= s.dims.x() * s.dims.x() ? top_height(s) : 0.0;
    case ShapeKind::Sphere: {
      const double r = s.dims.x();
      const double d2 = dx * dx + dy * dy;
      if (d2 > r * r) return 0.0;
      return std::max(0.0, equator_height(s) + std::sqrt(r * r - d2));
    }
    case ShapeKind::Box:
    case ShapeKind::Flat: {
      const double c = std::cos(s.yaw);
      const double sn = std::sin(s.yaw);
      const double lx = c * dx + sn * dy;
      const double ly = -sn * dx + c * dy;
      const bool inside =
          std::abs(lx) <= 0.5 * s.dims.x() && std::abs(ly) <= 0.5 * s.dims.y();
      return inside ? top_height(s) : 0.0;
    }
  }
  return 0.0;
}

Eigen::Vector2d pixel_center(std::uint32_t row, std::uint32_t col, std::uint32_t width,
                             std::uint32_t height) {
  const double half = 0.5 * kWorkspaceSize;
  return {-half + (col + 0.5) * kWorkspaceSize / width,
          half - (row + 0.5) * kWorkspaceSize / height};
}

DepthImage render_empty(std::uint32_t width, std::uint32_t height) {
  return DepthImage(width, height, static_cast<float>(kCameraHeight));
}

DepthImage render_depth(const SceneSpec& s, std::uint32_t width, std::uint32_t height) {
  DepthImage img(width, height);
  for (std::uint32_t r = 0; r < height; ++r) {
    for (std::uint32_t c = 0; c < width; ++c) {
      const Eigen::Vector2d p = pixel_center(r, c, width, height);
      const double h = std::clamp(surface_height(s, p.x(), p.y()), 0.0, kCameraHeight);
      img.at(r, c) = static_cast<float>(kCameraHeight - h);
    }
  }
  return img;
}

GraspPose synth_rigid_grasp(const SceneSpec& s, int rank, Rng& rng) {
  if (rank < 1 || rank > 20) throw std::invalid_argument("rank must lie in [1, 20]");
  const double frac = (rank - 1) / 19.0;
  const double max_tilt = (5.0 + 25.0 * frac) * kDeg;
  const double max_offset = 0.005 + frac * (0.4 * half_extent(s) - 0.005);

  const double tilt = rng.uniform(0.0, max_tilt);
  const double tilt_axis = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double yaw = rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
  const double offset = max_offset * std::sqrt(rng.uniform());
  const double offset_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double depth = rng.uniform(0.0, 0.01);

  GraspPose g;
  const Eigen::Quaterniond tilt_rot(
      Eigen::AngleAxisd(tilt, Eigen::Vector3d(std::cos(tilt_axis), std::sin(tilt_axis), 0.0)));
  g.orientation = normalized(tilt_rot * top_down_orientation(yaw));
  g.position = {s.position.x() + offset * std::cos(offset_dir),
                s.position.y() + offset * std::sin(offset_dir), top_height(s) - depth};
  return g;
}

double soft_grasp_depth(const SceneSpec& s) {
  double target = 0.0;
  switch (s.shape) {
    case ShapeKind::Cylinder:
    case ShapeKind::Box: target = std::min(0.7 * object_height(s), kMaxSoftDepth); break;
    case ShapeKind::Sphere: target = std::min(s.dims.x(), kMaxSoftDepth); break;
    case ShapeKind::Flat: target = std::min(s.dims.z() + 0.01, kMaxSoftDepth); break;
  }
  target = std::clamp(target, kMinSoftDepth, kMaxSoftDepth);
  return std::round(target * 100.0) / 100.0;
}

GraspPose correction_oracle(const SceneSpec& s, const GraspPose& rigid) {
  GraspPose g;
  g.orientation = snap_top_down(rigid.orientation);
  g.position = {s.position.x(), s.position.y(), top_height(s) - soft_grasp_depth(s)};
  g.width = rigid.width;
  return g;
}

SceneSpec instantiate(const ObjectTemplate& t, Rng& rng) {
  SceneSpec s;
  s.shape = t.shape;
  s.seed = rng();
  for (int i = 0; i < 3; ++i) {
    s.dims[i] = t.dims[i] * (1.0 + rng.uniform(-t.dim_jitter, t.dim_jitter));
  }
  s.position = t.position + Eigen::Vector2d(rng.uniform(-t.position_jitter, t.position_jitter),
                                            rng.uniform(-t.position_jitter, t.position_jitter));
  s.yaw = t.yaw + rng.uniform(-t.yaw_jitter, t.yaw_jitter);
  s.sink = t.sink;
  s.validate();
  return s;
}

std::vector<ObjectTemplate> default_seen_templates() {
  auto make = [](std::string name, ShapeKind shape, double a, double b, double c) {
    ObjectTemplate t;
    t.name = std::move(name);
    t.shape = shape;
    t.dims = {a, b, c};
    return t;
  };
  return {
      make("tall_cylinder", ShapeKind::Cylinder, 0.035, 0.12, 0.0),
      make("short_cylinder", ShapeKind::Cylinder, 0.025, 0.07, 0.0),
      make("small_sphere", ShapeKind::Sphere, 0.03, 0.0, 0.0),
      make("large_sphere", ShapeKind::Sphere, 0.05, 0.0, 0.0),
      make("upright_box", ShapeKind::Box, 0.06, 0.04, 0.10),
      make("low_box", ShapeKind::Box, 0.10, 0.06, 0.043),
      make("remote", ShapeKind::Flat, 0.16, 0.05, 0.018),
      make("book", ShapeKind::Flat, 0.12, 0.10, 0.014),
  };
}

std::vector<ObjectTemplate> default_unseen_templates() {
  auto make = [](std::string name, ShapeKind shape, double a, double b, double c,
                 double sink = 0.0) {
    ObjectTemplate t;
    t.name = std::move(name);
    t.shape = shape;
    t.dims = {a, b, c};
    t.sink = sink;
    return t;
  };
  return {
      make("bottle", ShapeKind::Cylinder, 0.03, 0.17, 0.0),
      make("fruit_in_depression", ShapeKind::Sphere, 0.04, 0.0, 0.0, 0.005),
      make("carton", ShapeKind::Box, 0.08, 0.05, 0.13),
      make("slim_case", ShapeKind::Flat, 0.20, 0.06, 0.010),
  };
}

SceneSpec random_primitive(Rng& rng) {
  SceneSpec s;
  s.shape = kAllShapes[rng.below(kAllShapes.size())];
  s.seed = rng();
  switch (s.shape) {
    case ShapeKind::Cylinder:
      s.dims = {rng.uniform(0.02, 0.05), rng.uniform(0.04, 0.17), 0.0};
      break;
    case ShapeKind::Sphere:
      s.dims = {rng.uniform(0.025, 0.06), 0.0, 0.0};
      s.sink = rng.uniform() < 0.3 ? rng.uniform(0.0, 0.01) : 0.0;
      break;
    case ShapeKind::Box:
      s.dims = {rng.uniform(0.03, 0.12), rng.uniform(0.03, 0.12), rng.uniform(0.03, 0.15)};
      break;
    case ShapeKind::Flat:
      s.dims = {rng.uniform(0.05, 0.22), rng.uniform(0.04, 0.12), rng.uniform(0.005, 0.02)};
      break;
  }
  s.position = {rng.uniform(-0.002, 0.002), rng.uniform(-0.002, 0.002)};
  s.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  s.validate();
  return s;
}

GeneratedData generate_dataset(std::span<const ObjectTemplate> templates,
                               const GenerateOptions& opts, Rng& rng) {
  if (opts.pairs_per_object < 1) throw std::invalid_argument("pairs_per_object must be >= 1");
  GeneratedData out;
  const int n = opts.pairs_per_object;
  for (const auto& tmpl : templates) {
    for (int k = 0; k < n; ++k) {
      PairedGrasp p;
      p.template_name = tmpl.name;
      p.scene = instantiate(tmpl, rng);
      p.rank = n == 1 ? 1 : 1 + static_cast<int>(std::lround(19.0 * k / (n - 1)));
      p.g_rigid = synth_rigid_grasp(p.scene, p.rank, rng);
      p.g_soft = correction_oracle(p.scene, p.g_rigid);
      p.depth_offset = soft_grasp_depth(p.scene);
      out.pair_images.push_back(render_depth(p.scene, opts.image_width, opts.image_height));
      out.pairs.push_back(std::move(p));
    }
  }
  out.corpus = out.pair_images;
  while (static_cast<int>(out.corpus.size()) < opts.corpus_size) {
    out.corpus.push_back(render_depth(random_primitive(rng), opts.image_width, opts.image_height));
  }
  return out;
}

}  // namespace cfmg

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cfmg/eval.hpp"
#include "cfmg/scene.hpp"

namespace cfmg {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

SceneSpec make(ShapeKind shape, double a, double b, double c, Eigen::Vector2d pos = {0, 0},
               double yaw = 0.0) {
  SceneSpec s;
  s.shape = shape;
  s.dims = {a, b, c};
  s.position = pos;
  s.yaw = yaw;
  return s;
}

TEST(Render, EmptySceneIsBackground) {
  const DepthImage img = render_empty();
  EXPECT_EQ(img.width, 32u);
  for (float v : img.values) EXPECT_EQ(v, 0.5f);
}

TEST(Render, BoxCenterPixelSeesTop) {
  const SceneSpec box = make(ShapeKind::Box, 0.06, 0.06, 0.08);
  const DepthImage img = render_depth(box);
  EXPECT_FLOAT_EQ(img.at(16, 16), static_cast<float>(0.5 - 0.08));
  EXPECT_FLOAT_EQ(img.at(0, 0), 0.5f);
}

TEST(Render, SphereGeometry) {
  const Eigen::Vector2d c = pixel_center(16, 16, 32, 32);
  const double r = 0.03;
  const SceneSpec sphere = make(ShapeKind::Sphere, r, 0, 0, c);
  const DepthImage img = render_depth(sphere);
  EXPECT_FLOAT_EQ(img.at(16, 16), static_cast<float>(0.5 - 2 * r));
  for (std::uint32_t row = 0; row < 32; ++row) {
    for (std::uint32_t col = 0; col < 32; ++col) {
      const double d = (pixel_center(row, col, 32, 32) - c).norm();
      if (d > r) EXPECT_EQ(img.at(row, col), 0.5f);
    }
  }
}

TEST(Render, MatchesPerPixelSurfaceQuery) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const SceneSpec s = random_primitive(rng);
    const DepthImage img = render_depth(s, 24, 20);
    for (std::uint32_t row = 0; row < 20; ++row) {
      for (std::uint32_t col = 0; col < 24; ++col) {
        const Eigen::Vector2d p = pixel_center(row, col, 24, 20);
        EXPECT_EQ(img.at(row, col), static_cast<float>(0.5 - surface_height(s, p.x(), p.y())));
        EXPECT_LE(img.at(row, col), 0.5f);
      }
    }
  }
}

TEST(Render, RotatedBoxFootprint) {
  const SceneSpec s = make(ShapeKind::Box, 0.12, 0.02, 0.05, {0, 0}, std::numbers::pi / 2);
  // Long side now runs along y.
  EXPECT_GT(surface_height(s, 0.0, 0.05), 0.0);
  EXPECT_EQ(surface_height(s, 0.05, 0.0), 0.0);
}

TEST(SceneSpec, ValidationRules) {
  EXPECT_THROW(make(ShapeKind::Cylinder, 0.03, 0.01, 0).validate(), std::invalid_argument);
  EXPECT_THROW(make(ShapeKind::Sphere, 0.09, 0, 0).validate(), std::invalid_argument);
  EXPECT_THROW(make(ShapeKind::Flat, 0.1, 0.1, 0.03).validate(), std::invalid_argument);
  EXPECT_THROW(make(ShapeKind::Box, -0.1, 0.1, 0.1).validate(), std::invalid_argument);
  EXPECT_THROW(make(ShapeKind::Cylinder, 0.03, 0.1, 0, {0.14, 0}).validate(),
               std::invalid_argument);
  SceneSpec sunk = make(ShapeKind::Sphere, 0.03, 0, 0);
  sunk.sink = 0.04;
  EXPECT_THROW(sunk.validate(), std::invalid_argument);
  EXPECT_NO_THROW(make(ShapeKind::Flat, 0.1, 0.05, 0.01).validate());
  for (ShapeKind k : kAllShapes) EXPECT_EQ(shape_from_string(to_string(k)), k);
}

TEST(RigidGrasp, RankOneBounds) {
  Rng rng(2);
  const SceneSpec s = make(ShapeKind::Cylinder, 0.03, 0.1, 0);
  for (int i = 0; i < 1000; ++i) {
    const GraspPose g = synth_rigid_grasp(s, 1, rng);
    EXPECT_LE(g.position.head<2>().norm(), 0.005 + 1e-12);
    EXPECT_LE(tilt_from_vertical(g.orientation), 5.0 * kDeg + 1e-9);
    EXPECT_LE(g.position.z(), top_height(s));
    EXPECT_GE(g.position.z(), top_height(s) - 0.01);
  }
}

TEST(RigidGrasp, RankTwentyReachesLargeTilt) {
  Rng rng(3);
  const SceneSpec s = make(ShapeKind::Box, 0.08, 0.06, 0.1);
  double max_tilt = 0.0, max_off = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GraspPose g = synth_rigid_grasp(s, 20, rng);
    max_tilt = std::max(max_tilt, tilt_from_vertical(g.orientation));
    max_off = std::max(max_off, g.position.head<2>().norm());
  }
  EXPECT_GE(max_tilt, 20.0 * kDeg);
  EXPECT_LE(max_tilt, 30.0 * kDeg + 1e-9);
  EXPECT_LE(max_off, 0.4 * half_extent(s) + 1e-12);
}

TEST(RigidGrasp, ReproducibleAndRankChecked) {
  const SceneSpec s = make(ShapeKind::Sphere, 0.04, 0, 0);
  Rng a(7), b(7);
  for (int rank = 1; rank <= 20; ++rank) {
    const GraspPose ga = synth_rigid_grasp(s, rank, a);
    const GraspPose gb = synth_rigid_grasp(s, rank, b);
    EXPECT_EQ(to_vec7(ga), to_vec7(gb));
  }
  EXPECT_THROW(synth_rigid_grasp(s, 0, a), std::invalid_argument);
  EXPECT_THROW(synth_rigid_grasp(s, 21, a), std::invalid_argument);
}

TEST(Oracle, TiltedCylinderPose) {
  const SceneSpec s = make(ShapeKind::Cylinder, 0.03, 0.10, 0, {0.01, -0.02});
  GraspPose rigid;
  rigid.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(20 * kDeg, Eigen::Vector3d::UnitY())) *
                      top_down_orientation(0.3);
  rigid.position = {0.02, -0.01, 0.095};
  const GraspPose g = correction_oracle(s, rigid);
  EXPECT_NEAR(tilt_from_vertical(g.orientation), 0.0, 1e-7);
  EXPECT_NEAR(g.position.x(), 0.01, 1e-15);
  EXPECT_NEAR(g.position.y(), -0.02, 1e-15);
  EXPECT_NEAR(g.position.z(), 0.10 - 0.07, 1e-12);
}

TEST(Oracle, SphereCenteredAtEquatorDepth) {
  const SceneSpec s = make(ShapeKind::Sphere, 0.03, 0, 0);
  GraspPose rigid;
  rigid.orientation = top_down_orientation(1.0);
  rigid.position = {0.02, 0.02, 0.055};
  const GraspPose g = correction_oracle(s, rigid);
  EXPECT_NEAR(g.position.head<2>().norm(), 0.0, 1e-15);
  EXPECT_NEAR(top_height(s) - g.position.z(), 0.03, 1e-12);
}

TEST(Oracle, DepthRule) {
  EXPECT_DOUBLE_EQ(soft_grasp_depth(make(ShapeKind::Cylinder, 0.03, 0.06, 0)), 0.04);
  EXPECT_DOUBLE_EQ(soft_grasp_depth(make(ShapeKind::Box, 0.05, 0.05, 0.2)), 0.07);
  EXPECT_DOUBLE_EQ(soft_grasp_depth(make(ShapeKind::Flat, 0.1, 0.1, 0.012)), 0.02);
  EXPECT_DOUBLE_EQ(soft_grasp_depth(make(ShapeKind::Sphere, 0.08, 0, 0)), 0.07);
}

TEST(Oracle, IdempotentAndPassesSuccessCheck) {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const SceneSpec s = random_primitive(rng);
    const GraspPose once = correction_oracle(s, synth_rigid_grasp(s, 1 + i % 20, rng));
    const GraspPose twice = correction_oracle(s, once);
    EXPECT_LT((to_vec7(once).values - to_vec7(twice).values).norm(), 1e-12);
    const Verdict v = success_oracle(s, once);
    EXPECT_TRUE(v.success) << to_string(s.shape) << " " << to_string(v.reason);
  }
}

TEST(Templates, InstancesAreValidAndUnseenDiffer) {
  Rng rng(5);
  const auto seen = default_seen_templates();
  const auto unseen = default_unseen_templates();
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(unseen.size(), 4u);
  for (const auto& t : seen) {
    for (int i = 0; i < 100; ++i) EXPECT_NO_THROW(instantiate(t, rng).validate());
  }
  bool has_sunk_sphere = false;
  for (const auto& u : unseen) {
    has_sunk_sphere |= u.shape == ShapeKind::Sphere && u.sink > 0.0;
    // Every unseen family differs by at least 20% in some dimension from the
    // jittered range of each seen family of the same shape. A sunk sphere
    // differs by its resting height instead.
    if (u.sink > 0.0) continue;
    for (const auto& t : seen) {
      if (t.shape != u.shape) continue;
      bool far = false;
      for (int d = 0; d < 3; ++d) {
        if (t.dims[d] == 0.0) continue;
        const double lo = t.dims[d] * (1 - t.dim_jitter);
        const double hi = t.dims[d] * (1 + t.dim_jitter);
        far |= u.dims[d] * (1 - u.dim_jitter) >= 1.2 * hi || u.dims[d] * (1 + u.dim_jitter) <= lo / 1.2;
      }
      EXPECT_TRUE(far) << u.name << " vs " << t.name;
    }
  }
  EXPECT_TRUE(has_sunk_sphere);
}

TEST(GenerateDataset, DefaultShapeAndConstruction) {
  Rng rng(6);
  const auto templates = default_seen_templates();
  const GeneratedData d = generate_dataset(templates, GenerateOptions{}, rng);
  ASSERT_EQ(d.pairs.size(), 120u);
  EXPECT_EQ(d.pair_images.size(), 120u);
  EXPECT_EQ(d.corpus.size(), 865u);
  int low = 0, high = 0;
  for (std::size_t i = 0; i < d.pairs.size(); ++i) {
    const auto& p = d.pairs[i];
    EXPECT_EQ(to_vec7(p.g_soft), to_vec7(correction_oracle(p.scene, p.g_rigid)));
    EXPECT_EQ(d.pair_images[i], render_depth(p.scene));
    EXPECT_EQ(d.corpus[i], d.pair_images[i]);
    low += p.rank <= 5;
    high += p.rank >= 15;
  }
  EXPECT_GT(low, 0);
  EXPECT_GT(high, 0);
}

TEST(GenerateDataset, SameSeedSameData) {
  const auto templates = default_seen_templates();
  GenerateOptions opts;
  opts.pairs_per_object = 3;
  opts.corpus_size = 40;
  Rng a(9), b(9);
  const GeneratedData da = generate_dataset(templates, opts, a);
  const GeneratedData db = generate_dataset(templates, opts, b);
  EXPECT_EQ(da.corpus, db.corpus);
  for (std::size_t i = 0; i < da.pairs.size(); ++i) {
    EXPECT_EQ(da.pairs[i].scene, db.pairs[i].scene);
    EXPECT_EQ(to_vec7(da.pairs[i].g_rigid), to_vec7(db.pairs[i].g_rigid));
  }
  opts.pairs_per_object = 0;
  EXPECT_THROW(generate_dataset(templates, opts, a), std::invalid_argument);
}

}  // namespace
}  // namespace cfmg

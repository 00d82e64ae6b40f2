#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "smvfuse/multiview.hpp"
#include "smvfuse/synth.hpp"

using namespace smvfuse;

namespace {

const CameraIntrinsics kCam{200.0, 200.0, 79.5, 59.5, 160, 120};

PlanarScene wall(double z) {
  PlanarScene scene;
  PlanarPatch p;
  p.plane = {0, 0, 1, -z};
  p.texture = TextureKind::kNoise;
  p.amplitude = 0.8;
  scene.patches.push_back(p);
  return scene;
}

}  // namespace

TEST(Render, FrontoParallelPlane) {
  const auto r = render(wall(2.0), kCam, RigidPose());
  for (double z : r.depth.pixels()) EXPECT_NEAR(z, 2.0, 1e-12);
  for (double i : r.frame.image.pixels()) {
    EXPECT_GE(i, 0.0);
    EXPECT_LE(i, 1.0);
  }
}

TEST(Render, TwoPlanesGiveExactlyTwoDepths) {
  const auto r = render(two_plane_scene(2.0, 4.0), kCam, RigidPose());
  std::set<double> depths;
  for (double z : r.depth.pixels()) depths.insert(std::round(z * 1e9) / 1e9);
  EXPECT_EQ(depths, (std::set<double>{2.0, 4.0}));
  EXPECT_NEAR(r.depth(0, 60), 2.0, 1e-12);
  EXPECT_NEAR(r.depth(159, 60), 4.0, 1e-12);
}

TEST(Render, TranslatedViewAgreesWithWarp) {
  const PlanarScene scene = wall(2.5);
  const auto k = render(scene, kCam, RigidPose());
  const RigidPose other = RigidPose(Eigen::AngleAxisd(0.02, Eigen::Vector3d::UnitY()).toRotationMatrix(), {0.1, 0.03, 0.05});
  const auto o = render(scene, kCam, other, 1);
  const RigidPose pose_ko = relative_pose(RigidPose(), other);
  std::vector<double> errors;
  for (int v = 8; v < kCam.height - 8; v += 2) {
    for (int u = 8; u < kCam.width - 8; u += 2) {
      const auto x = warp_pixel(kCam, pose_ko, {double(u), double(v)}, z_to_inverse_distance(kCam, u, v, k.depth(u, v)));
      if (!x || x->u < 2 || x->u > kCam.width - 3 || x->v < 2 || x->v > kCam.height - 3) continue;
      errors.push_back(std::abs(k.frame.image(u, v) - *sample_bilinear(o.frame.image, x->u, x->v)));
    }
  }
  // Bilinear resampling of the other view is the only error source.
  ASSERT_GT(errors.size(), 1000u);
  std::sort(errors.begin(), errors.end());
  EXPECT_LT(errors[errors.size() / 2], 2.0 / 255.0);
  EXPECT_LT(errors.back(), 0.05);
}

TEST(Render, MissesTakeBackground) {
  PlanarScene scene = wall(2.0);
  scene.patches[0].bounds = Box{{-0.1, -0.1, 0.0}, {0.1, 0.1, 5.0}};
  const auto r = render(scene, kCam, RigidPose());
  EXPECT_EQ(r.segments(0, 0), kBackgroundSegment);
  EXPECT_EQ(r.depth(0, 0), scene.background_depth);
  EXPECT_EQ(r.segments(80, 60), 0);
}

TEST(FabricateSingleView, ZeroOffsetsAndNoiseReproduceGroundTruth) {
  const auto r = render(wall(3.0), kCam, RigidPose());
  const auto s = fabricate_single_view(r.depth, r.segments, {{0, 0.0}, {kBackgroundSegment, 0.0}}, 0.0, 5);
  EXPECT_EQ(s, r.depth);
}

TEST(FabricateSingleView, PerSegmentOffsetsOnly) {
  const auto r = render(two_plane_scene(), kCam, RigidPose());
  const auto s = fabricate_single_view(r.depth, r.segments, {{0, 0.3}, {1, -0.2}, {kBackgroundSegment, 0.0}}, 0.0, 5);
  std::set<double> errors;
  for (std::size_t i = 0; i < s.size(); ++i) errors.insert(std::round((s.pixels()[i] - r.depth.pixels()[i]) * 1e9) / 1e9);
  EXPECT_EQ(errors, (std::set<double>{-0.2, 0.3}));
}

TEST(FabricateSingleView, SeededAndPositive) {
  const auto r = render(wall(0.1), kCam, RigidPose());
  const auto a = fabricate_single_view(r.depth, r.segments, {{0, -0.3}, {kBackgroundSegment, 0.0}}, 0.05, 42);
  const auto b = fabricate_single_view(r.depth, r.segments, {{0, -0.3}, {kBackgroundSegment, 0.0}}, 0.05, 42);
  EXPECT_EQ(a, b);
  for (double d : a.pixels()) EXPECT_GE(d, kMinFabricatedDepth);
  EXPECT_THROW(fabricate_single_view(r.depth, r.segments, {}, 0.0, 1), std::invalid_argument);
}

TEST(RandomScene, DeterministicAndBounded) {
  for (int n = 2; n <= 4; ++n) {
    const auto a = random_planar_scene(7, n);
    const auto b = random_planar_scene(7, n);
    EXPECT_EQ(format_scene(a), format_scene(b));
    EXPECT_EQ(a.patches.size(), static_cast<std::size_t>(n));
  }
  EXPECT_THROW(random_planar_scene(1, 1), std::invalid_argument);
  EXPECT_THROW(random_planar_scene(1, 5), std::invalid_argument);
}

TEST(SceneText, RoundTrip) {
  const auto scene = random_planar_scene(3, 4);
  std::istringstream in(format_scene(scene));
  const auto back = parse_scene(in);
  EXPECT_EQ(format_scene(back), format_scene(scene));
  const auto a = render(scene, kCam, RigidPose());
  const auto b = render(back, kCam, RigidPose());
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.frame.image, b.frame.image);
}

TEST(SceneText, ParsesCommentsAndRejectsGarbage) {
  std::istringstream ok("# two planes\nbackground 8 0.4\n0 0 1 -2 checker 0.5 0 cell=0.1\n0 0 1 -4 flat 0 1 box=0,1,-1,1,0,5\n");
  const auto scene = parse_scene(ok);
  EXPECT_EQ(scene.patches.size(), 2u);
  EXPECT_EQ(scene.background_depth, 8.0);
  ASSERT_TRUE(scene.patches[1].bounds);
  std::istringstream bad("0 0 1 -2 marble 0.5 0\n");
  EXPECT_THROW(parse_scene(bad), std::runtime_error);
}

TEST(Trajectory, LateralSteps) {
  const auto t = lateral_trajectory(5, 0.1, Eigen::Vector3d::UnitX(), 2);
  ASSERT_EQ(t.poses.size(), 5u);
  EXPECT_NEAR(t.poses[0].translation().x(), -0.2, 1e-15);
  EXPECT_NEAR(t.poses[2].translation().norm(), 0.0, 1e-15);
  EXPECT_NEAR(t.poses[4].translation().x(), 0.2, 1e-15);
}

#ifndef SMVFUSE_SYNTH_HPP
#define SMVFUSE_SYNTH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "smvfuse/geometry.hpp"
#include "smvfuse/image.hpp"
#include "smvfuse/multiview.hpp"

namespace smvfuse {

enum class TextureKind { kFlat, kChecker, kNoise };

inline const char *to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::kFlat:
      return "flat";
    case TextureKind::kChecker:
      return "checker";
    case TextureKind::kNoise:
      return "noise";
  }
  return "?";
}

inline TextureKind texture_from_string(const std::string &name) {
  if (name == "flat") return TextureKind::kFlat;
  if (name == "checker") return TextureKind::kChecker;
  if (name == "noise") return TextureKind::kNoise;
  throw std::invalid_argument("unknown texture kind '" + name + "'");
}

/// Axis-aligned world box limiting a patch.
struct Box {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;

  bool contains(const Eigen::Vector3d &x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

/**
 * Textured plane a*x + b*y + c*z + d = 0 in world coordinates, optionally
 * clipped to a box. Intensity is 0.5 + amplitude * (pattern - 0.5) with the
 * pattern in [0, 1] and `cell` the pattern feature size in meters.
 */
struct PlanarPatch {
  Eigen::Vector4d plane{0.0, 0.0, 1.0, -2.0};
  TextureKind texture = TextureKind::kNoise;
  double amplitude = 1.0;
  int segment = 0;
  double cell = 0.05;
  std::uint64_t seed = 0;
  std::optional<Box> bounds;

  Eigen::Vector3d normal() const { return plane.head<3>(); }
};

struct PlanarScene {
  std::vector<PlanarPatch> patches;
  double background_depth = 10.0;
  double background_intensity = 0.5;

  void validate() const {
    std::set<int> ids;
    for (const auto &p : patches) {
      if (!p.plane.allFinite() || p.normal().norm() < 1e-12) {
        throw std::invalid_argument("PlanarScene: degenerate plane");
      }
      if (!(p.amplitude >= 0.0 && p.amplitude <= 1.0)) {
        throw std::invalid_argument("PlanarScene: amplitude must be in [0,1]");
      }
      if (!(p.cell > 0.0)) throw std::invalid_argument("PlanarScene: cell size must be positive");
      if (p.segment < 0) throw std::invalid_argument("PlanarScene: segment ids must be non-negative");
      if (!ids.insert(p.segment).second) {
        throw std::invalid_argument("PlanarScene: duplicate segment id " + std::to_string(p.segment));
      }
    }
    if (!(background_depth > 0.0)) throw std::invalid_argument("PlanarScene: background depth must be positive");
  }
};

/// Segment id of pixels that hit no patch.
inline constexpr int kBackgroundSegment = -1;

/// Camera poses (camera-to-world) of a synthetic sequence.
struct TrajectorySpec {
  std::vector<RigidPose> poses;

  /// Distance of every pose's camera center from the first pose's.
  std::vector<double> baselines() const {
    std::vector<double> out;
    for (const auto &p : poses) out.push_back((p.translation() - poses.front().translation()).norm());
    return out;
  }
};

/// `count` identity-rotation poses at (i - reference) * step * direction.
inline TrajectorySpec lateral_trajectory(int count, double step, const Eigen::Vector3d &direction = Eigen::Vector3d::UnitX(),
                                         int reference = 0) {
  if (count < 1) throw std::invalid_argument("lateral_trajectory: need at least one pose");
  TrajectorySpec spec;
  const Eigen::Vector3d dir = direction.normalized();
  for (int i = 0; i < count; ++i) {
    spec.poses.push_back(RigidPose::translation_only((i - reference) * step * dir));
  }
  return spec;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h =
      splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) ^ splitmix64(static_cast<std::uint64_t>(iy) + 0x51ull)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

inline double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double a = fade(x - fx);
  const double b = fade(y - fy);
  const double v00 = lattice_value(ix, iy, seed);
  const double v10 = lattice_value(ix + 1, iy, seed);
  const double v01 = lattice_value(ix, iy + 1, seed);
  const double v11 = lattice_value(ix + 1, iy + 1, seed);
  return (1 - b) * ((1 - a) * v00 + a * v10) + b * ((1 - a) * v01 + a * v11);
}

/// Orthonormal in-plane axes for texture coordinates.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_axes(const Eigen::Vector3d &normal) {
  const Eigen::Vector3d n = normal.normalized();
  const Eigen::Vector3d helper = std::abs(n.y()) < 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
  const Eigen::Vector3d t1 = n.cross(helper).normalized();
  return {t1, n.cross(t1)};
}

inline double texture_value(const PlanarPatch &patch, const Eigen::Vector3d &x) {
  if (patch.texture == TextureKind::kFlat || patch.amplitude == 0.0) return 0.5;
  const auto [t1, t2] = plane_axes(patch.normal());
  const double a = x.dot(t1) / patch.cell;
  const double b = x.dot(t2) / patch.cell;
  double pattern = 0.5;
  if (patch.texture == TextureKind::kChecker) {
    const auto parity = (static_cast<std::int64_t>(std::floor(a)) + static_cast<std::int64_t>(std::floor(b))) & 1;
    pattern = parity ? 1.0 : 0.0;
  } else {
    const std::uint64_t seed = splitmix64(patch.seed * 1315423911ull + static_cast<std::uint64_t>(patch.segment));
    pattern = (value_noise(a, b, seed) + 0.5 * value_noise(2.0 * a + 17.3, 2.0 * b - 5.1, seed + 1)) / 1.5;
  }
  return std::clamp(0.5 + patch.amplitude * (pattern - 0.5), 0.0, 1.0);
}

inline std::uint64_t uniform_bits(std::mt19937_64 &rng) { return rng() >> 11; }
inline double uniform01(std::mt19937_64 &rng) { return static_cast<double>(uniform_bits(rng)) * 0x1.0p-53; }
inline double uniform(std::mt19937_64 &rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace detail

struct RenderOutput {
  Frame frame;
  /// True z-depth in the rendering camera.
  DepthImage depth;
  Image<int> segments;
};

namespace detail {

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  const PlanarPatch *patch = nullptr;
};

inline RayHit cast_ray(const PlanarScene &scene, const Eigen::Vector3d &origin, const Eigen::Vector3d &dir) {
  RayHit hit;
  for (const auto &patch : scene.patches) {
    const double denom = patch.normal().dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = -(patch.normal().dot(origin) + patch.plane.w()) / denom;
    if (!(t > 1e-9) || t >= hit.t) continue;
    if (patch.bounds && !patch.bounds->contains(origin + t * dir)) continue;
    hit = {t, &patch};
  }
  return hit;
}

}  // namespace detail

/**
 * Ray-casts every pixel against all patches and keeps the nearest hit.
 * Depth and segment come from the pixel center; intensity is the box-filtered
 * mean over `supersampling`^2 sub-pixel rays. Pixels that hit nothing get the
 * background depth and intensity.
 */
inline RenderOutput render(const PlanarScene &scene, const CameraIntrinsics &intr, const RigidPose &camera_to_world,
                           int frame_id = 0, int supersampling = 3) {
  scene.validate();
  intr.validate();
  if (supersampling < 1) throw std::invalid_argument("render: supersampling must be >= 1");
  RenderOutput out{Frame{GrayImage(intr.width, intr.height), camera_to_world, frame_id},
                   DepthImage(intr.width, intr.height), Image<int>(intr.width, intr.height)};
  const Eigen::Vector3d origin = camera_to_world.translation();
  const Eigen::Matrix3d &rot = camera_to_world.rotation();
  auto shade = [&](double u, double v) {
    const Eigen::Vector3d dir = rot * intr.backproject(u, v);
    const auto hit = detail::cast_ray(scene, origin, dir);
    return hit.patch ? detail::texture_value(*hit.patch, origin + hit.t * dir) : scene.background_intensity;
  };
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      // Unit z in camera coordinates, so the ray parameter is the z-depth.
      const Eigen::Vector3d dir = rot * intr.backproject(u, v);
      const auto hit = detail::cast_ray(scene, origin, dir);
      out.depth(u, v) = hit.patch ? hit.t : scene.background_depth;
      out.segments(u, v) = hit.patch ? hit.patch->segment : kBackgroundSegment;
      double sum = 0.0;
      for (int j = 0; j < supersampling; ++j) {
        for (int i = 0; i < supersampling; ++i) {
          sum += shade(u - 0.5 + (i + 0.5) / supersampling, v - 0.5 + (j + 0.5) / supersampling);
        }
      }
      out.frame.image(u, v) = sum / (supersampling * supersampling);
    }
  }
  return out;
}

/// Smallest depth fabricate_single_view emits.
inline constexpr double kMinFabricatedDepth = 0.05;

/**
 * Single-view-like depth: gt + per-segment offset + a sum of four seeded
 * sinusoids (wavelengths 32..128 px, total amplitude `smooth_noise_amp`),
 * clamped to kMinFabricatedDepth.
 */
inline DepthImage fabricate_single_view(const DepthImage &gt, const Image<int> &segments,
                                        const std::map<int, double> &offsets, double smooth_noise_amp,
                                        std::uint64_t seed) {
  if (!segments.same_shape(gt)) throw std::invalid_argument("fabricate_single_view: segment map size differs");
  if (!(smooth_noise_amp >= 0.0)) throw std::invalid_argument("fabricate_single_view: negative noise amplitude");
  struct Wave {
    double kx, ky, phase;
  };
  std::mt19937_64 rng(seed);
  std::array<Wave, 4> waves{};
  for (auto &w : waves) {
    const double wavelength = detail::uniform(rng, 32.0, 128.0);
    const double angle = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
    w = {std::cos(angle) * 2.0 * std::numbers::pi / wavelength, std::sin(angle) * 2.0 * std::numbers::pi / wavelength,
         detail::uniform(rng, 0.0, 2.0 * std::numbers::pi)};
  }
  DepthImage s(gt.width(), gt.height());
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      const auto it = offsets.find(segments(u, v));
      if (it == offsets.end()) {
        throw std::invalid_argument("fabricate_single_view: no offset for segment " + std::to_string(segments(u, v)));
      }
      double noise = 0.0;
      if (smooth_noise_amp > 0.0) {
        for (const auto &w : waves) noise += std::sin(w.kx * u + w.ky * v + w.phase);
        noise *= smooth_noise_amp / waves.size();
      }
      s(u, v) = std::max(kMinFabricatedDepth, gt(u, v) + it->second + noise);
    }
  }
  return s;
}

/// Offsets drawn uniformly from [-range, range] for every segment of the scene, plus 0 for the background.
inline std::map<int, double> random_segment_offsets(const PlanarScene &scene, double range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<int, double> offsets{{kBackgroundSegment, 0.0}};
  for (const auto &p : scene.patches) offsets[p.segment] = detail::uniform(rng, -range, range);
  return offsets;
}

/// Rendered frames with ground truth and a fabricated single-view map per frame.
struct SyntheticSequence {
  CameraIntrinsics intrinsics;
  std::vector<Frame> frames;
  std::vector<DepthImage> ground_truth;
  std::vector<DepthImage> single_view;
  std::vector<Image<int>> segments;
};

/**
 * Renders `scene` along `trajectory`. Single-view maps share the per-segment
 * offsets; the smooth noise is reseeded per frame from `seed`.
 */
inline SyntheticSequence make_sequence(const PlanarScene &scene, const CameraIntrinsics &intr,
                                       const TrajectorySpec &trajectory, const std::map<int, double> &offsets,
                                       double noise_amp, std::uint64_t seed) {
  SyntheticSequence seq;
  seq.intrinsics = intr;
  for (std::size_t i = 0; i < trajectory.poses.size(); ++i) {
    RenderOutput r = render(scene, intr, trajectory.poses[i], static_cast<int>(i));
    seq.single_view.push_back(
        fabricate_single_view(r.depth, r.segments, offsets, noise_amp, detail::splitmix64(seed + 7919 * (i + 1))));
    seq.frames.push_back(std::move(r.frame));
    seq.ground_truth.push_back(std::move(r.depth));
    seq.segments.push_back(std::move(r.segments));
  }
  return seq;
}

/**
 * Fronto-parallel textured planes side by side: z = near for x < 0 and
 * z = far for x >= 0 (world coordinates).
 */
inline PlanarScene two_plane_scene(double near_z = 2.0, double far_z = 4.0, std::uint64_t seed = 0) {
  PlanarScene scene;
  PlanarPatch near;
  near.plane = {0.0, 0.0, 1.0, -near_z};
  near.texture = TextureKind::kNoise;
  near.amplitude = 0.9;
  near.segment = 0;
  near.cell = 0.04;
  near.seed = seed;
  near.bounds = Box{{-1e3, -1e3, -1e3}, {0.0, 1e3, 1e3}};
  PlanarPatch far = near;
  far.plane = {0.0, 0.0, 1.0, -far_z};
  far.segment = 1;
  far.cell = 0.07;
  far.bounds = Box{{0.0, -1e3, -1e3}, {1e3, 1e3, 1e3}};
  scene.patches = {near, far};
  return scene;
}

/**
 * Room-like scene with `n_segments` (2..4) textured planes: a back wall plus
 * a random choice among floor, side walls and a floating panel. Camera at the
 * origin looking down +z, y pointing down.
 */
inline PlanarScene random_planar_scene(std::uint64_t seed, int n_segments) {
  if (n_segments < 2 || n_segments > 4) throw std::invalid_argument("random_planar_scene: 2..4 segments");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return detail::uniform(rng, lo, hi); };
  auto textured = [&](int segment, Eigen::Vector4d plane) {
    PlanarPatch p;
    p.plane = plane;
    p.texture = TextureKind::kNoise;
    p.amplitude = uni(0.6, 1.0);
    p.cell = uni(0.05, 0.09);
    p.segment = segment;
    p.seed = seed;
    return p;
  };

  PlanarScene scene;
  {
    const double depth = uni(3.0, 4.5);
    const double yaw = uni(-0.35, 0.35);
    const double pitch = uni(-0.15, 0.15);
    const Eigen::Vector3d n = Eigen::Vector3d(std::sin(yaw), std::sin(pitch), std::cos(yaw)).normalized();
    scene.patches.push_back(textured(0, {n.x(), n.y(), n.z(), -n.dot(Eigen::Vector3d(0, 0, depth))}));
  }
  std::array<int, 4> kinds{0, 1, 2, 3};  // floor, left wall, right wall, panel
  for (int i = 3; i > 0; --i) std::swap(kinds[i], kinds[detail::uniform_bits(rng) % (i + 1)]);
  for (int k = 0; k < n_segments - 1; ++k) {
    const int segment = k + 1;
    switch (kinds[k]) {
      case 0: {
        const double h = uni(0.7, 1.1);
        scene.patches.push_back(textured(segment, {0, 1, 0, -h}));
        break;
      }
      case 1: {
        const double x = uni(0.9, 1.5);
        const double yaw = uni(-0.25, 0.25);
        const Eigen::Vector3d n(std::cos(yaw), 0.0, std::sin(yaw));
        scene.patches.push_back(textured(segment, {n.x(), n.y(), n.z(), -n.dot(Eigen::Vector3d(-x, 0, 2.5))}));
        break;
      }
      case 2: {
        const double x = uni(0.9, 1.5);
        const double yaw = uni(-0.25, 0.25);
        const Eigen::Vector3d n(std::cos(yaw), 0.0, std::sin(yaw));
        scene.patches.push_back(textured(segment, {n.x(), n.y(), n.z(), -n.dot(Eigen::Vector3d(x, 0, 2.5))}));
        break;
      }
      default: {
        const double z = uni(1.8, 2.4);
        const double yaw = uni(-0.5, 0.5);
        const Eigen::Vector3d n = Eigen::Vector3d(std::sin(yaw), 0.0, std::cos(yaw));
        PlanarPatch p = textured(segment, {n.x(), n.y(), n.z(), -n.dot(Eigen::Vector3d(0, 0, z))});
        const double cx = uni(-0.5, 0.3);
        const double cy = uni(-0.4, 0.2);
        p.bounds = Box{{cx - uni(0.3, 0.5), cy - uni(0.25, 0.4), 0.5}, {cx + uni(0.3, 0.5), cy + uni(0.25, 0.4), 4.0}};
        scene.patches.push_back(p);
        break;
      }
    }
  }
  return scene;
}

/**
 * Scene text format, one item per line, '#' starts a comment:
 *
 *   background <depth_m> <intensity>
 *   <a> <b> <c> <d> <flat|checker|noise> <amplitude> <segment> [cell=<m>] [seed=<n>]
 *       [box=<x0>,<x1>,<y0>,<y1>,<z0>,<z1>]
 *
 * The plane is a*x + b*y + c*z + d = 0 in world coordinates.
 */
inline PlanarScene parse_scene(std::istream &in) {
  PlanarScene scene;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    auto fail = [&](const std::string &why) {
      throw std::runtime_error("scene line " + std::to_string(line_no) + ": " + why);
    };
    if (first == "background") {
      if (!(ls >> scene.background_depth >> scene.background_intensity)) fail("expected 'background <depth> <intensity>'");
      continue;
    }
    PlanarPatch patch;
    std::string kind;
    try {
      patch.plane.x() = std::stod(first);
    } catch (const std::exception &) {
      fail("expected plane coefficients");
    }
    if (!(ls >> patch.plane.y() >> patch.plane.z() >> patch.plane.w() >> kind >> patch.amplitude >> patch.segment)) {
      fail("expected '<a> <b> <c> <d> <texture> <amplitude> <segment>'");
    }
    try {
      patch.texture = texture_from_string(kind);
    } catch (const std::exception &e) {
      fail(e.what());
    }
    std::string opt;
    while (ls >> opt) {
      const auto eq = opt.find('=');
      if (eq == std::string::npos) fail("unexpected token '" + opt + "'");
      const std::string key = opt.substr(0, eq);
      const std::string value = opt.substr(eq + 1);
      try {
        if (key == "cell") {
          patch.cell = std::stod(value);
        } else if (key == "seed") {
          patch.seed = std::stoull(value);
        } else if (key == "box") {
          std::array<double, 6> b{};
          std::istringstream bs(value);
          std::string item;
          for (double &x : b) {
            if (!std::getline(bs, item, ',')) fail("box needs six comma-separated values");
            x = std::stod(item);
          }
          patch.bounds = Box{{b[0], b[2], b[4]}, {b[1], b[3], b[5]}};
        } else {
          fail("unknown option '" + key + "'");
        }
      } catch (const std::invalid_argument &) {
        fail("bad value in '" + opt + "'");
      }
    }
    scene.patches.push_back(patch);
  }
  scene.validate();
  return scene;
}

inline PlanarScene read_scene(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path);
  return parse_scene(in);
}

inline std::string format_scene(const PlanarScene &scene) {
  std::ostringstream os;
  os.precision(17);
  os << "background " << scene.background_depth << ' ' << scene.background_intensity << '\n';
  for (const auto &p : scene.patches) {
    os << p.plane.x() << ' ' << p.plane.y() << ' ' << p.plane.z() << ' ' << p.plane.w() << ' ' << to_string(p.texture)
       << ' ' << p.amplitude << ' ' << p.segment << " cell=" << p.cell << " seed=" << p.seed;
    if (p.bounds) {
      os << " box=" << p.bounds->lo.x() << ',' << p.bounds->hi.x() << ',' << p.bounds->lo.y() << ','
         << p.bounds->hi.y() << ',' << p.bounds->lo.z() << ',' << p.bounds->hi.z();
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace smvfuse

#endif  // SMVFUSE_SYNTH_HPP

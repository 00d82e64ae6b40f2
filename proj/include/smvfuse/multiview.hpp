#ifndef SMVFUSE_MULTIVIEW_HPP
#define SMVFUSE_MULTIVIEW_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smvfuse/geometry.hpp"
#include "smvfuse/image.hpp"
#include "smvfuse/parallel.hpp"

namespace smvfuse {

/// A posed grayscale image. `pose` is camera-to-world.
struct Frame {
  GrayImage image;
  RigidPose pose;
  int id = 0;

  void validate(const CameraIntrinsics &intr) const {
    if (!image.same_shape(intr.width, intr.height)) {
      throw std::invalid_argument("Frame " + std::to_string(id) + ": image size does not match intrinsics");
    }
    for (double value : image.pixels()) {
      if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument("Frame " + std::to_string(id) + ": intensity outside [0,1]");
      }
    }
  }
};

/// Hypotheses uniformly spaced in inverse depth, endpoints included.
struct InverseDepthGrid {
  double rho_min = 0.1;
  double rho_max = 2.0;
  int n_samples = 192;

  void validate() const {
    if (!(rho_min > 0.0) || !(rho_max > rho_min) || !std::isfinite(rho_max)) {
      throw std::invalid_argument("InverseDepthGrid: need 0 < rho_min < rho_max");
    }
    if (n_samples < 8) {
      throw std::invalid_argument("InverseDepthGrid: need at least 8 samples");
    }
  }

  double step() const { return (rho_max - rho_min) / (n_samples - 1); }
  double at(int i) const { return rho_min + i * step(); }
};

enum class CostNorm { kL1, kL2 };

struct MultiviewOptions {
  CostNorm norm = CostNorm::kL1;
  /// Contributing views required for a hypothesis cost to count.
  int min_views = 1;
  /// Pixels whose cost range over the grid is below this are excluded.
  double flat_threshold = 1.0 / 255.0;
  /// Minimum hypothesis separation from the argmin for the second-best cost.
  int second_best_separation = 3;
  /// Worker threads; 0 resolves through SMVFUSE_THREADS.
  int threads = 0;
};

/// Per-pixel minimum of the cost curve and the statistics used for scoring.
struct PixelEstimate {
  double rho = 0.0;
  double best_cost = 0.0;
  double second_best_cost = 0.0;
  /// Mean cost rise to the argmin's neighbors, in cost units per grid step.
  double cost_slope = 0.0;
  /// Largest sensitivity over the overlapping views, pixels per 1/m. Zero when unavailable.
  double sensitivity = 0.0;

  bool operator==(const PixelEstimate &) const = default;
};

enum class PixelStatus : std::uint8_t {
  kNotRequested = 0,
  kEstimated,
  kNoViews,  ///< fewer than min_views contributing frames at every hypothesis
  kFlat,     ///< cost range below flat_threshold
};

struct SemiDenseDepthResult {
  int width = 0;
  int height = 0;
  InverseDepthGrid grid;
  std::vector<std::optional<PixelEstimate>> estimates;
  std::vector<PixelStatus> status;

  const std::optional<PixelEstimate> &at(int u, int v) const {
    return estimates[static_cast<std::size_t>(v) * width + u];
  }
  PixelStatus status_at(int u, int v) const { return status[static_cast<std::size_t>(v) * width + u]; }

  std::size_t estimated_count() const {
    std::size_t n = 0;
    for (const auto &e : estimates) n += e.has_value();
    return n;
  }

  /// Z-depth map; excluded pixels are 0.
  DepthImage z_depth(const CameraIntrinsics &intr) const {
    DepthImage depth(width, height, 0.0);
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        if (const auto &e = at(u, v)) depth(u, v) = inverse_distance_to_z(intr, u, v, e->rho);
      }
    }
    return depth;
  }
};

/// Cost of one hypothesis and how many views produced it.
struct CostSample {
  double cost = 0.0;
  int views = 0;
};

/**
 * Intensity difference I_ref(x_k) - I_other(warp(x_k, rho)), both looked up
 * bilinearly. nullopt when the warp leaves the other view or x_k is outside
 * the reference image.
 */
inline std::optional<double> photometric_error(const Frame &ref, const Frame &other,
                                               const CameraIntrinsics &intr, const PixelCoord &x_k,
                                               double rho) {
  const auto ref_value = sample_bilinear(ref.image, x_k.u, x_k.v);
  if (!ref_value) return std::nullopt;
  const auto x_o = warp_pixel(intr, relative_pose(ref.pose, other.pose), x_k, rho);
  if (!x_o) return std::nullopt;
  const auto other_value = sample_bilinear(other.image, x_o->u, x_o->v);
  if (!other_value) return std::nullopt;
  return *ref_value - *other_value;
}

namespace detail {

/// Overlapping frame with its pose already expressed relative to the keyframe.
struct PreparedView {
  const GrayImage *image;
  RigidPose pose_ko;
};

inline std::vector<PreparedView> prepare_views(const Frame &ref, std::span<const Frame> others) {
  std::vector<PreparedView> views;
  views.reserve(others.size());
  for (const Frame &f : others) views.push_back({&f.image, relative_pose(ref.pose, f.pose)});
  return views;
}

inline double apply_norm(double e, CostNorm norm) { return norm == CostNorm::kL1 ? std::abs(e) : e * e; }

inline std::optional<CostSample> total_cost(double ref_value, std::span<const PreparedView> views,
                                            const CameraIntrinsics &intr, const PixelCoord &x_k,
                                            double rho, CostNorm norm) {
  double sum = 0.0;
  int count = 0;
  for (const PreparedView &view : views) {
    const auto x_o = warp_pixel(intr, view.pose_ko, x_k, rho);
    if (!x_o) continue;
    const auto value = sample_bilinear(*view.image, x_o->u, x_o->v);
    if (!value) continue;
    sum += apply_norm(ref_value - *value, norm);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return CostSample{sum / count, count};
}

}  // namespace detail

/**
 * Mean over the overlapping frames of the per-view photometric cost (|e| for
 * L1, e^2 for L2). Frames whose warp leaves the view do not contribute.
 * nullopt when no frame contributes.
 */
inline std::optional<CostSample> total_cost(const Frame &ref, std::span<const Frame> others,
                                            const CameraIntrinsics &intr, const PixelCoord &x_k,
                                            double rho, CostNorm norm = CostNorm::kL1) {
  if (others.empty()) {
    throw std::invalid_argument("total_cost: need at least one overlapping frame");
  }
  const auto ref_value = sample_bilinear(ref.image, x_k.u, x_k.v);
  if (!ref_value) return std::nullopt;
  const auto views = detail::prepare_views(ref, others);
  return detail::total_cost(*ref_value, views, intr, x_k, rho, norm);
}

namespace detail {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Minimizes one pixel's sampled cost curve. `costs` holds NaN where unavailable.
inline std::pair<PixelStatus, std::optional<PixelEstimate>> minimize_curve(
    std::span<const double> costs, const InverseDepthGrid &grid, const MultiviewOptions &opts) {
  const int n = static_cast<int>(costs.size());
  int best = -1;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (std::isnan(costs[i])) continue;
    if (best < 0 || costs[i] < costs[best]) best = i;
    lo = std::min(lo, costs[i]);
    hi = std::max(hi, costs[i]);
  }
  if (best < 0) return {PixelStatus::kNoViews, std::nullopt};
  if (hi - lo < opts.flat_threshold) return {PixelStatus::kFlat, std::nullopt};

  PixelEstimate est;
  est.best_cost = costs[best];

  est.second_best_cost = est.best_cost;
  bool have_second = false;
  for (int i = 0; i < n; ++i) {
    if (std::isnan(costs[i]) || std::abs(i - best) < opts.second_best_separation) continue;
    if (!have_second || costs[i] < est.second_best_cost) {
      est.second_best_cost = costs[i];
      have_second = true;
    }
  }

  const bool has_prev = best > 0 && !std::isnan(costs[best - 1]);
  const bool has_next = best + 1 < n && !std::isnan(costs[best + 1]);
  double rise = 0.0;
  int sides = 0;
  if (has_prev) {
    rise += costs[best - 1] - costs[best];
    ++sides;
  }
  if (has_next) {
    rise += costs[best + 1] - costs[best];
    ++sides;
  }
  est.cost_slope = sides > 0 ? rise / sides : 0.0;

  double offset = 0.0;
  if (has_prev && has_next) {
    const double curvature = costs[best - 1] - 2.0 * costs[best] + costs[best + 1];
    if (curvature > 0.0) {
      offset = std::clamp(0.5 * (costs[best - 1] - costs[best + 1]) / curvature, -1.0, 1.0);
    }
  }
  est.rho = std::clamp(grid.at(best) + offset * grid.step(), grid.rho_min, grid.rho_max);
  return {PixelStatus::kEstimated, est};
}

}  // namespace detail

/**
 * Per-pixel inverse depth by exhaustive search over `grid` followed by one
 * parabolic refinement through the argmin and its neighbors. Pixels are
 * independent; only those selected by `mask` are estimated.
 */
inline SemiDenseDepthResult estimate_inverse_depth(const Frame &ref, std::span<const Frame> others,
                                                   const CameraIntrinsics &intr,
                                                   const InverseDepthGrid &grid, const PixelMask &mask,
                                                   const MultiviewOptions &opts = {}) {
  intr.validate();
  grid.validate();
  ref.validate(intr);
  for (const Frame &f : others) f.validate(intr);
  if (!mask.same_shape(intr.width, intr.height)) {
    throw std::invalid_argument("estimate_inverse_depth: mask size does not match intrinsics");
  }
  if (opts.min_views < 1) {
    throw std::invalid_argument("estimate_inverse_depth: min_views must be at least 1");
  }

  SemiDenseDepthResult result;
  result.width = intr.width;
  result.height = intr.height;
  result.grid = grid;
  result.estimates.assign(static_cast<std::size_t>(intr.width) * intr.height, std::nullopt);
  result.status.assign(result.estimates.size(), PixelStatus::kNotRequested);
  if (others.empty()) {
    for (int v = 0; v < intr.height; ++v) {
      for (int u = 0; u < intr.width; ++u) {
        if (mask(u, v)) result.status[static_cast<std::size_t>(v) * intr.width + u] = PixelStatus::kNoViews;
      }
    }
    return result;
  }

  const auto views = detail::prepare_views(ref, others);
  // R^T (bearing - rho t) = a - rho b with a = R^T bearing, b = R^T t per view.
  std::vector<Eigen::Vector3d> rt_translation;
  for (const auto &view : views) rt_translation.push_back(view.pose_ko.rotation().transpose() * view.pose_ko.translation());
  const double max_u = intr.width - 1;
  const double max_v = intr.height - 1;
  parallel_for(intr.height, resolve_thread_count(opts.threads), [&](int v) {
    std::vector<double> costs(static_cast<std::size_t>(grid.n_samples));
    std::vector<double> sums(costs.size());
    std::vector<int> counts(costs.size());
    for (int u = 0; u < intr.width; ++u) {
      if (!mask(u, v)) continue;
      const PixelCoord x{static_cast<double>(u), static_cast<double>(v)};
      const double ref_value = ref.image(u, v);
      const Eigen::Vector3d bearing = intr.bearing(x.u, x.v);
      std::fill(sums.begin(), sums.end(), 0.0);
      std::fill(counts.begin(), counts.end(), 0);
      for (std::size_t k = 0; k < views.size(); ++k) {
        const GrayImage &img = *views[k].image;
        const Eigen::Vector3d a = views[k].pose_ko.rotation().transpose() * bearing;
        const Eigen::Vector3d &b = rt_translation[k];
        for (int i = 0; i < grid.n_samples; ++i) {
          const double rho = grid.at(i);
          const double pz = a.z() - rho * b.z();
          if (!(pz > 0.0)) continue;
          const double uo = intr.fx * (a.x() - rho * b.x()) / pz + intr.cx;
          const double vo = intr.fy * (a.y() - rho * b.y()) / pz + intr.cy;
          if (!(uo >= 0.0 && vo >= 0.0 && uo <= max_u && vo <= max_v)) continue;
          const int u0 = std::min(static_cast<int>(uo), intr.width - 2);
          const int v0 = std::min(static_cast<int>(vo), intr.height - 2);
          const double fu = uo - u0;
          const double fv = vo - v0;
          const double top = (1.0 - fu) * img(u0, v0) + fu * img(u0 + 1, v0);
          const double bottom = (1.0 - fu) * img(u0, v0 + 1) + fu * img(u0 + 1, v0 + 1);
          sums[i] += detail::apply_norm(ref_value - ((1.0 - fv) * top + fv * bottom), opts.norm);
          ++counts[i];
        }
      }
      for (int i = 0; i < grid.n_samples; ++i) {
        costs[i] = (counts[i] > 0 && counts[i] >= opts.min_views) ? sums[i] / counts[i] : detail::kMissing;
      }
      auto [status, est] = detail::minimize_curve(costs, grid, opts);
      if (est) {
        for (const auto &view : views) {
          if (auto s = inverse_depth_sensitivity(intr, view.pose_ko, x, est->rho)) {
            est->sensitivity = std::max(est->sensitivity, *s);
          }
        }
      }
      const std::size_t idx = static_cast<std::size_t>(v) * intr.width + u;
      result.status[idx] = status;
      result.estimates[idx] = est;
    }
  });
  return result;
}

/**
 * Dense multi-view z-depth: every pixel is estimated with no flatness
 * rejection; pixels no view covers take the median of the estimated depths.
 */
inline DepthImage dense_multiview_depth(const Frame &ref, std::span<const Frame> others,
                                        const CameraIntrinsics &intr, const InverseDepthGrid &grid,
                                        MultiviewOptions opts = {}) {
  opts.flat_threshold = 0.0;
  const PixelMask all(intr.width, intr.height, 1);
  DepthImage depth = estimate_inverse_depth(ref, others, intr, grid, all, opts).z_depth(intr);
  std::vector<double> known;
  for (double d : depth.pixels()) {
    if (d > 0.0) known.push_back(d);
  }
  if (known.empty()) throw std::invalid_argument("dense_multiview_depth: no pixel could be estimated");
  auto mid = known.begin() + static_cast<std::ptrdiff_t>(known.size() / 2);
  std::nth_element(known.begin(), mid, known.end());
  for (double &d : depth.pixels()) {
    if (!(d > 0.0)) d = *mid;
  }
  return depth;
}

}  // namespace smvfuse

#endif  // SMVFUSE_MULTIVIEW_HPP

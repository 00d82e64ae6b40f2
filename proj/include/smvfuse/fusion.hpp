#ifndef SMVFUSE_FUSION_HPP
#define SMVFUSE_FUSION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smvfuse/image.hpp"
#include "smvfuse/parallel.hpp"
#include "smvfuse/selection.hpp"

namespace smvfuse {

/// Dense single-view (or fused) depth in meters; every value finite and > 0.
using DenseDepthMap = DepthImage;

inline void validate_dense_depth(const DenseDepthMap &s, const char *what) {
  for (double d : s.pixels()) {
    if (!std::isfinite(d) || !(d > 0.0)) {
      throw std::invalid_argument(std::string(what) + ": depth must be finite and positive everywhere");
    }
  }
}

/// Per-pixel depth derivatives of s in meters per pixel.
struct DepthGradients {
  Image<double> dx;
  Image<double> dy;
};

/**
 * Central differences in the interior, forward/backward differences on the
 * first/last column and row.
 */
inline DepthGradients depth_gradients(const DenseDepthMap &s) {
  const int w = s.width();
  const int h = s.height();
  if (w < 2 || h < 2) {
    throw std::invalid_argument("depth_gradients: map must be at least 2x2");
  }
  DepthGradients g{Image<double>(w, h), Image<double>(w, h)};
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (u == 0) {
        g.dx(u, v) = s(1, v) - s(0, v);
      } else if (u == w - 1) {
        g.dx(u, v) = s(w - 1, v) - s(w - 2, v);
      } else {
        g.dx(u, v) = 0.5 * (s(u + 1, v) - s(u - 1, v));
      }
      if (v == 0) {
        g.dy(u, v) = s(u, 1) - s(u, 0);
      } else if (v == h - 1) {
        g.dy(u, v) = s(u, h - 1) - s(u, h - 2);
      } else {
        g.dy(u, v) = 0.5 * (s(u, v + 1) - s(u, v - 1));
      }
    }
  }
  return g;
}

struct FusionParams {
  /// Proximity radius, pixels.
  double sigma1 = 15.0;
  /// Gradient-similarity offset, meters per pixel.
  double sigma2 = 0.1;
  /// Planarity floor.
  double sigma3 = 1e-3;

  void validate() const {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || !(sigma3 > 0.0)) {
      throw std::invalid_argument("FusionParams: all sigmas must be positive");
    }
  }
};

/// Proximity factor exp(-|p - q| / sigma1).
inline double weight_w1(Pixel p, Pixel q, double sigma1) {
  const double du = p.u - q.u;
  const double dv = p.v - q.v;
  return std::exp(-std::sqrt(du * du + dv * dv) / sigma1);
}

/// Gradient-similarity factor; symmetric in p and q.
inline double weight_w2(double dx_p, double dy_p, double dx_q, double dy_q, double sigma2) {
  return 1.0 / (std::abs(dx_q - dx_p) + sigma2) * (1.0 / (std::abs(dy_q - dy_p) + sigma2));
}

struct PlanarityWeights {
  double w3 = 0.0;
  double w4 = 0.0;
};

/**
 * Planarity factors: how well p's depth, extrapolated along each axis with
 * p's own gradient, predicts the depth at q. Both are bounded below by sigma3.
 */
inline PlanarityWeights weight_w3_w4(const DenseDepthMap &s, const DepthGradients &g, Pixel p, Pixel q,
                                     double sigma3) {
  const double sp = s(p.u, p.v);
  const double sq = s(q.u, q.v);
  return {std::exp(-std::abs(sp + g.dx(p.u, p.v) * (q.u - p.u) - sq)) + sigma3,
          std::exp(-std::abs(sp + g.dy(p.u, p.v) * (q.v - p.v) - sq)) + sigma3};
}

/// Which factors enter the raw weight.
enum class WeightSet { kW1, kW1W2, kAll };

inline const char *to_string(WeightSet set) {
  switch (set) {
    case WeightSet::kW1:
      return "W1";
    case WeightSet::kW1W2:
      return "W1W2";
    case WeightSet::kAll:
      return "W1W2W3W4";
  }
  return "?";
}

/// Unnormalized influence of anchor q on pixel p.
inline double raw_weight(Pixel p, Pixel q, const DenseDepthMap &s, const DepthGradients &g,
                         const FusionParams &params, WeightSet set = WeightSet::kAll) {
  double w = weight_w1(p, q, params.sigma1);
  if (set == WeightSet::kW1) return w;
  w *= weight_w2(g.dx(p.u, p.v), g.dy(p.u, p.v), g.dx(q.u, q.v), g.dy(q.u, q.v), params.sigma2);
  if (set == WeightSet::kW1W2) return w;
  const auto planar = weight_w3_w4(s, g, p, q, params.sigma3);
  return w * planar.w3 * planar.w4;
}

struct NormalizedWeights {
  std::vector<double> weights;
  /// Raw weights were all equal; weights are uniform.
  bool uniform_fallback = false;
};

/**
 * (w - min w) / sum(w - min w). The smallest raw weight gets exactly zero.
 * Falls back to uniform weights when every raw weight is equal.
 */
inline NormalizedWeights normalize_weights(std::span<const double> raw) {
  if (raw.size() < 2) {
    throw std::invalid_argument("normalize_weights: need at least two weights");
  }
  const double lowest = *std::min_element(raw.begin(), raw.end());
  double denom = 0.0;
  for (double w : raw) denom += w - lowest;
  NormalizedWeights out;
  out.weights.resize(raw.size());
  if (!(denom > 0.0)) {
    std::fill(out.weights.begin(), out.weights.end(), 1.0 / static_cast<double>(raw.size()));
    out.uniform_fallback = true;
    return out;
  }
  for (std::size_t k = 0; k < raw.size(); ++k) out.weights[k] = (raw[k] - lowest) / denom;
  return out;
}

enum class FusionStatus {
  kFused,
  kNoFusion,     ///< empty anchor set, output is s
  kSingleAnchor  ///< one anchor, output is s shifted by its discrepancy
};

struct FusionOptions {
  WeightSet weights = WeightSet::kAll;
  int threads = 0;
};

struct FusionResult {
  DenseDepthMap depth;
  FusionStatus status = FusionStatus::kFused;
  /// Pixels that used the uniform-weight fallback.
  std::size_t uniform_fallback_pixels = 0;
};

/**
 * Dense fusion of single-view depth s with anchors omega:
 *
 *   f(p) = sum_q W(p, q) * (m_q + s_p - s_q)
 *
 * with W the normalized product of the selected weight factors. Evaluated as
 * s_p + sum_q W(p, q) * (m_q - s_q), iterating omega in a fixed order per pixel.
 */
inline FusionResult fuse(const DenseDepthMap &s, const SparseDepthSet &omega, const FusionParams &params,
                         const FusionOptions &opts = {}) {
  params.validate();
  validate_dense_depth(s, "fuse");
  omega.validate();
  for (const auto &q : omega.points) {
    if (!s.contains(q.pixel.u, q.pixel.v)) {
      throw std::invalid_argument("fuse: anchor pixel outside the single-view map");
    }
  }

  FusionResult result;
  if (omega.empty()) {
    result.depth = s;
    result.status = FusionStatus::kNoFusion;
    return result;
  }
  if (omega.size() == 1) {
    const auto &q = omega.points.front();
    const double shift = q.depth - s(q.pixel.u, q.pixel.v);
    result.depth = s;
    for (double &d : result.depth.pixels()) d = shift + d;
    result.status = FusionStatus::kSingleAnchor;
    return result;
  }

  const DepthGradients g = depth_gradients(s);
  const int w = s.width();
  const int h = s.height();
  const std::size_t n = omega.size();

  // Anchor attributes in structure-of-arrays form.
  std::vector<int> qu(n), qv(n);
  std::vector<double> qs(n), qdx(n), qdy(n), qdelta(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto &q = omega.points[k];
    qu[k] = q.pixel.u;
    qv[k] = q.pixel.v;
    qs[k] = s(q.pixel.u, q.pixel.v);
    qdx[k] = g.dx(q.pixel.u, q.pixel.v);
    qdy[k] = g.dy(q.pixel.u, q.pixel.v);
    qdelta[k] = q.depth - qs[k];
  }

  // Proximity factor depends only on the integer offset.
  const int tw = 2 * w - 1;
  std::vector<double> proximity(static_cast<std::size_t>(tw) * (2 * h - 1));
  for (int dv = -(h - 1); dv <= h - 1; ++dv) {
    for (int du = -(w - 1); du <= w - 1; ++du) {
      proximity[static_cast<std::size_t>(dv + h - 1) * tw + (du + w - 1)] =
          weight_w1(Pixel{du, dv}, Pixel{0, 0}, params.sigma1);
    }
  }

  result.depth = DenseDepthMap(w, h);
  std::vector<std::size_t> fallback_rows(static_cast<std::size_t>(h), 0);
  const WeightSet set = opts.weights;

  parallel_for(h, resolve_thread_count(opts.threads), [&](int j) {
    std::vector<double> raw(n), arg3(n), arg4(n);
    for (int i = 0; i < w; ++i) {
      const double sp = s(i, j);
      const double dxp = g.dx(i, j);
      const double dyp = g.dy(i, j);
      // Separate passes keep the exp-free arithmetic vectorizable.
      for (std::size_t k = 0; k < n; ++k) {
        double wk = proximity[static_cast<std::size_t>(j - qv[k] + h - 1) * tw + (i - qu[k] + w - 1)];
        if (set != WeightSet::kW1) {
          wk *= 1.0 / (std::abs(qdx[k] - dxp) + params.sigma2) * (1.0 / (std::abs(qdy[k] - dyp) + params.sigma2));
        }
        raw[k] = wk;
      }
      if (set == WeightSet::kAll) {
        for (std::size_t k = 0; k < n; ++k) {
          arg3[k] = -std::abs(sp + dxp * (qu[k] - i) - qs[k]);
          arg4[k] = -std::abs(sp + dyp * (qv[k] - j) - qs[k]);
        }
        for (std::size_t k = 0; k < n; ++k) {
          arg3[k] = std::exp(arg3[k]);
          arg4[k] = std::exp(arg4[k]);
        }
        for (std::size_t k = 0; k < n; ++k) raw[k] = raw[k] * (arg3[k] + params.sigma3) * (arg4[k] + params.sigma3);
      }
      const double lowest = *std::min_element(raw.begin(), raw.end());
      double denom = 0.0;
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double shifted = raw[k] - lowest;
        denom += shifted;
        acc += shifted * qdelta[k];
      }
      if (denom > 0.0) {
        result.depth(i, j) = sp + acc / denom;
      } else {
        double mean = 0.0;
        for (std::size_t k = 0; k < n; ++k) mean += qdelta[k];
        result.depth(i, j) = sp + mean / static_cast<double>(n);
        ++fallback_rows[static_cast<std::size_t>(j)];
      }
    }
  });
  for (auto c : fallback_rows) result.uniform_fallback_pixels += c;
  return result;
}

}  // namespace smvfuse

#endif  // SMVFUSE_FUSION_HPP

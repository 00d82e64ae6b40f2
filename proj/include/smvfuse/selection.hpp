#ifndef SMVFUSE_SELECTION_HPP
#define SMVFUSE_SELECTION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "smvfuse/geometry.hpp"
#include "smvfuse/image.hpp"
#include "smvfuse/multiview.hpp"

namespace smvfuse {

/// Integer pixel position, u = column, v = row.
struct Pixel {
  int u = 0;
  int v = 0;

  bool operator==(const Pixel &) const = default;
  /// Row-major order.
  friend bool operator<(const Pixel &a, const Pixel &b) { return std::tie(a.v, a.u) < std::tie(b.v, b.u); }
};

/// A multi-view depth with the cost statistics it was selected by.
struct CandidatePoint {
  Pixel pixel;
  /// Z-depth in meters.
  double depth_multiview = 0.0;
  double best_cost = 0.0;
  double second_best_cost = 0.0;
  double cost_slope = 0.0;
  double sensitivity = 0.0;
};

struct SparseDepthPoint {
  Pixel pixel;
  double depth = 0.0;

  bool operator==(const SparseDepthPoint &) const = default;
};

/// The trusted multi-view anchors used by fusion. Pixels are unique.
struct SparseDepthSet {
  std::vector<SparseDepthPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    std::vector<Pixel> pixels;
    pixels.reserve(points.size());
    for (const auto &p : points) {
      if (!std::isfinite(p.depth) || !(p.depth > 0.0)) {
        throw std::invalid_argument("SparseDepthSet: depths must be positive and finite");
      }
      pixels.push_back(p.pixel);
    }
    std::sort(pixels.begin(), pixels.end());
    if (std::adjacent_find(pixels.begin(), pixels.end()) != pixels.end()) {
      throw std::invalid_argument("SparseDepthSet: duplicate pixel");
    }
  }

  bool operator==(const SparseDepthSet &) const = default;
};

/// m = a * s + b.
struct LinearDepthModel {
  double a = 1.0;
  double b = 0.0;

  double operator()(double s) const { return a * s + b; }
};

/// Converts every estimated pixel, in row-major order, to a candidate with z-depth.
inline std::vector<CandidatePoint> to_candidates(const SemiDenseDepthResult &result,
                                                 const CameraIntrinsics &intr) {
  std::vector<CandidatePoint> out;
  for (int v = 0; v < result.height; ++v) {
    for (int u = 0; u < result.width; ++u) {
      const auto &e = result.at(u, v);
      if (!e) continue;
      out.push_back({{u, v},
                     inverse_distance_to_z(intr, u, v, e->rho),
                     e->best_cost,
                     e->second_best_cost,
                     e->cost_slope,
                     e->sensitivity});
    }
  }
  return out;
}

inline constexpr double kScoreEpsilon = 1e-6;

/// Second-best ratio gap times the V-shape slope. Zero for ambiguous or flat minima.
inline double photometric_score(const CandidatePoint &c) {
  return (c.second_best_cost - c.best_cost) / (c.best_cost + kScoreEpsilon) * c.cost_slope;
}

/// Pixels per unit inverse depth; a 1 px matching error costs 1/score in inverse depth.
inline double geometric_score(const CandidatePoint &c) { return c.sensitivity; }

inline double candidate_score(const CandidatePoint &c) { return photometric_score(c) * geometric_score(c); }

/// ceil(fraction * n), robust to representation error in fraction.
inline std::size_t top_fraction_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("select_top_fraction: fraction must be in (0, 1]");
  }
  const double exact = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::min(k, n);
}

/**
 * Keeps the ceil(fraction * N) candidates with the highest photometric x
 * geometric score. Ties fall back to row-major pixel order.
 */
inline std::vector<CandidatePoint> select_top_fraction(std::vector<CandidatePoint> candidates,
                                                       double fraction) {
  const std::size_t keep = top_fraction_count(candidates.size(), fraction);
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) order.emplace_back(candidate_score(candidates[i]), i);
  std::sort(order.begin(), order.end(), [&](const auto &a, const auto &b) {
    if (a.first != b.first) return a.first > b.first;
    return candidates[a.second].pixel < candidates[b.second].pixel;
  });
  std::vector<CandidatePoint> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(candidates[order[i].second]);
  return out;
}

struct RansacParams {
  int iterations = 200;
  /// Meters.
  double inlier_tolerance = 0.10;
  std::uint64_t seed = 0;
};

struct ConsensusResult {
  LinearDepthModel model;
  SparseDepthSet inliers;
};

namespace detail {

inline std::vector<std::size_t> consensus_set(std::span<const double> s, std::span<const double> m,
                                              const LinearDepthModel &model, double tol) {
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::abs(m[i] - model(s[i])) < tol) in.push_back(i);
  }
  return in;
}

inline std::optional<LinearDepthModel> least_squares_line(std::span<const double> s, std::span<const double> m,
                                                          std::span<const std::size_t> idx) {
  if (idx.size() < 2) return std::nullopt;
  double ms = 0.0, mm = 0.0;
  for (auto i : idx) {
    ms += s[i];
    mm += m[i];
  }
  ms /= idx.size();
  mm /= idx.size();
  double sxx = 0.0, sxy = 0.0;
  for (auto i : idx) {
    sxx += (s[i] - ms) * (s[i] - ms);
    sxy += (s[i] - ms) * (m[i] - mm);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  const double a = sxy / sxx;
  if (!(a > 0.0) || !std::isfinite(a)) return std::nullopt;
  return LinearDepthModel{a, mm - a * ms};
}

}  // namespace detail

/**
 * Fits one global model m ~ a * s + b between multi-view depths and the
 * single-view map by RANSAC over two-point hypotheses. Candidates are sorted
 * row-major before sampling, so the outcome depends only on the set and the
 * seed. The winner (most inliers; on ties, the lower index of the first sample) is refit by
 * least squares; the returned inliers are those of the refit model.
 * nullopt when fewer than two points are given or no hypothesis reaches two
 * inliers.
 */
inline std::optional<ConsensusResult> ransac_linear_consensus(std::vector<CandidatePoint> points,
                                                              const DepthImage &single_view,
                                                              const RansacParams &params) {
  if (params.iterations < 1 || !(params.inlier_tolerance > 0.0)) {
    throw std::invalid_argument("ransac_linear_consensus: need iterations >= 1 and a positive tolerance");
  }
  if (points.size() < 2) return std::nullopt;
  std::sort(points.begin(), points.end(),
            [](const CandidatePoint &a, const CandidatePoint &b) { return a.pixel < b.pixel; });

  std::vector<double> s(points.size()), m(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Pixel p = points[i].pixel;
    if (!single_view.contains(p.u, p.v) || !(single_view(p.u, p.v) > 0.0)) {
      throw std::invalid_argument("ransac_linear_consensus: single-view depth undefined at a candidate");
    }
    s[i] = single_view(p.u, p.v);
    m[i] = points[i].depth_multiview;
  }

  std::mt19937_64 rng(params.seed);
  const std::uint64_t n = points.size();
  std::optional<LinearDepthModel> best_model;
  std::size_t best_count = 0;
  std::size_t best_first = 0;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t i = rng() % n;
    std::size_t j = rng() % (n - 1);
    if (j >= i) ++j;
    if (s[i] == s[j]) continue;
    const double a = (m[i] - m[j]) / (s[i] - s[j]);
    if (!(a > 0.0) || !std::isfinite(a)) continue;
    const LinearDepthModel model{a, m[i] - a * s[i]};
    const std::size_t count = detail::consensus_set(s, m, model, params.inlier_tolerance).size();
    if (count > best_count || (count == best_count && best_model && i < best_first)) {
      best_count = count;
      best_first = i;
      best_model = model;
    }
  }
  if (!best_model || best_count < 2) return std::nullopt;

  auto inliers = detail::consensus_set(s, m, *best_model, params.inlier_tolerance);
  LinearDepthModel model = *best_model;
  if (auto refit = detail::least_squares_line(s, m, inliers)) {
    auto refit_inliers = detail::consensus_set(s, m, *refit, params.inlier_tolerance);
    if (refit_inliers.size() >= 2) {
      model = *refit;
      inliers = std::move(refit_inliers);
    }
  }

  ConsensusResult out;
  out.model = model;
  out.inliers.points.reserve(inliers.size());
  for (auto i : inliers) out.inliers.points.push_back({points[i].pixel, m[i]});
  return out;
}

/// Candidates as anchors, without filtering.
inline SparseDepthSet to_sparse_set(std::span<const CandidatePoint> candidates) {
  SparseDepthSet set;
  set.points.reserve(candidates.size());
  for (const auto &c : candidates) set.points.push_back({c.pixel, c.depth_multiview});
  std::sort(set.points.begin(), set.points.end(),
            [](const SparseDepthPoint &a, const SparseDepthPoint &b) { return a.pixel < b.pixel; });
  return set;
}

}  // namespace smvfuse

#endif  // SMVFUSE_SELECTION_HPP

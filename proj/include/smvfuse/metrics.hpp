#ifndef SMVFUSE_METRICS_HPP
#define SMVFUSE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smvfuse/image.hpp"

namespace smvfuse {

namespace detail {

inline void require_same_shape(const DepthImage &est, const DepthImage &gt, const PixelMask &valid) {
  if (!est.same_shape(gt) || !valid.same_shape(gt)) {
    throw std::invalid_argument("metrics: estimate, ground truth and mask must have the same size");
  }
}

template <typename F>
std::optional<double> masked_mean(const DepthImage &est, const DepthImage &gt, const PixelMask &valid, F term) {
  require_same_shape(est, gt, valid);
  double sum = 0.0;
  std::size_t n = 0;
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      if (!valid(u, v)) continue;
      sum += term(est(u, v), gt(u, v));
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline double median_of(std::vector<double> values) {
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Root mean squared error over valid pixels; nullopt for an empty mask.
inline std::optional<double> rmse(const DepthImage &est, const DepthImage &gt, const PixelMask &valid) {
  const auto mse = detail::masked_mean(est, gt, valid, [](double e, double y) { return (e - y) * (e - y); });
  if (!mse) return std::nullopt;
  return std::sqrt(*mse);
}

/// Mean absolute error over valid pixels; nullopt for an empty mask.
inline std::optional<double> mean_abs_error(const DepthImage &est, const DepthImage &gt, const PixelMask &valid) {
  return detail::masked_mean(est, gt, valid, [](double e, double y) { return std::abs(e - y); });
}

/**
 * Scale-invariant log error: mean(d^2) - mean(d)^2 with d = log(gt) - log(est).
 * Both maps must be positive on the mask.
 */
inline std::optional<double> scale_invariant_error(const DepthImage &est, const DepthImage &gt,
                                                   const PixelMask &valid) {
  detail::require_same_shape(est, gt, valid);
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      if (!valid(u, v)) continue;
      if (!(est(u, v) > 0.0) || !(gt(u, v) > 0.0)) {
        throw std::invalid_argument("scale_invariant_error: non-positive depth inside the mask");
      }
      const double d = std::log(gt(u, v)) - std::log(est(u, v));
      sum += d;
      sum_sq += d * d;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  const double nn = static_cast<double>(n);
  return std::max(0.0, sum_sq / nn - (sum / nn) * (sum / nn));
}

struct GradientSplit {
  std::optional<double> median_high;
  std::optional<double> median_low;
};

/**
 * Median |est - gt| separately for pixels whose image gradient magnitude
 * (max forward difference) exceeds `threshold` and for the rest.
 */
inline GradientSplit gradient_split_medians(const DepthImage &est, const DepthImage &gt, const GrayImage &image,
                                            const PixelMask &valid, double threshold) {
  detail::require_same_shape(est, gt, valid);
  if (!image.same_shape(gt)) {
    throw std::invalid_argument("gradient_split_medians: image size differs from depth");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("gradient_split_medians: threshold must be in (0, 1]");
  }
  const PixelMask high = high_gradient_mask(image, threshold);
  std::vector<double> hi, lo;
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      if (!valid(u, v)) continue;
      (high(u, v) ? hi : lo).push_back(std::abs(est(u, v) - gt(u, v)));
    }
  }
  GradientSplit out;
  if (!hi.empty()) out.median_high = detail::median_of(std::move(hi));
  if (!lo.empty()) out.median_low = detail::median_of(std::move(lo));
  return out;
}

struct DepthErrorReport {
  double rmse = 0.0;
  double mean_abs_error = 0.0;
  double scale_invariant = 0.0;
  std::size_t n_pixels = 0;
  std::optional<GradientSplit> split;

  /// One `key=value` per line.
  std::string to_key_value() const {
    std::ostringstream os;
    os << "rmse=" << format(rmse) << '\n'
       << "mae=" << format(mean_abs_error) << '\n'
       << "scale_inv=" << format(scale_invariant) << '\n'
       << "n=" << n_pixels << '\n';
    if (split) {
      os << "median_high_gradient=" << (split->median_high ? format(*split->median_high) : "nan") << '\n'
         << "median_low_gradient=" << (split->median_low ? format(*split->median_low) : "nan") << '\n';
    }
    return os.str();
  }

  static const char *csv_header() { return "sequence,method,rmse,mae,scale_inv,n"; }

  std::string to_csv_row(const std::string &sequence, const std::string &method) const {
    return sequence + "," + method + "," + format(rmse) + "," + format(mean_abs_error) + "," +
           format(scale_invariant) + "," + std::to_string(n_pixels);
  }

  static std::string format(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
  }
};

/**
 * All metrics on pixels where the mask is set and both maps are positive.
 * When `image` is given, also the high/low gradient medians at
 * `gradient_threshold`. nullopt when no pixel qualifies.
 */
inline std::optional<DepthErrorReport> evaluate_depth(const DepthImage &est, const DepthImage &gt,
                                                      const PixelMask &mask, const GrayImage *image = nullptr,
                                                      double gradient_threshold = 0.35) {
  detail::require_same_shape(est, gt, mask);
  PixelMask valid(gt.width(), gt.height(), 0);
  for (int v = 0; v < gt.height(); ++v) {
    for (int u = 0; u < gt.width(); ++u) {
      valid(u, v) = (mask(u, v) && gt(u, v) > 0.0 && std::isfinite(gt(u, v)) && est(u, v) > 0.0 &&
                     std::isfinite(est(u, v)))
                        ? 1
                        : 0;
    }
  }
  const std::size_t n = count_selected(valid);
  if (n == 0) return std::nullopt;
  DepthErrorReport report;
  report.rmse = *rmse(est, gt, valid);
  report.mean_abs_error = *mean_abs_error(est, gt, valid);
  report.scale_invariant = *scale_invariant_error(est, gt, valid);
  report.n_pixels = n;
  if (image) report.split = gradient_split_medians(est, gt, *image, valid, gradient_threshold);
  return report;
}

}  // namespace smvfuse

#endif  // SMVFUSE_METRICS_HPP

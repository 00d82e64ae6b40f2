#ifndef SMVFUSE_IMAGE_HPP
#define SMVFUSE_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace smvfuse {

/**
 * Row-major single-channel image. Pixel (u, v) is column u, row v, origin at
 * the top-left pixel center.
 */
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw std::invalid_argument("Image: negative dimensions");
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int u, int v) const {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }

  T &operator()(int u, int v) { return data_[index(u, v)]; }
  const T &operator()(int u, int v) const { return data_[index(u, v)]; }

  std::span<T> row(int v) {
    return {data_.data() + static_cast<std::size_t>(v) * width_, static_cast<std::size_t>(width_)};
  }
  std::span<const T> row(int v) const {
    return {data_.data() + static_cast<std::size_t>(v) * width_, static_cast<std::size_t>(width_)};
  }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }

  bool same_shape(int width, int height) const {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Image<U> &other) const {
    return same_shape(other.width(), other.height());
  }

  bool operator==(const Image &other) const = default;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Grayscale intensities in [0, 1].
using GrayImage = Image<double>;
/// Per-pixel metric depth in meters. Zero marks an invalid pixel in loaded
/// ground truth; estimated maps are strictly positive.
using DepthImage = Image<double>;
/// Non-zero entries select a pixel.
using PixelMask = Image<std::uint8_t>;

/**
 * Bilinear lookup at a continuous coordinate. The full 2x2 neighborhood must
 * lie inside the image, so valid coordinates are [0, width-1] x [0, height-1].
 */
template <typename T>
std::optional<double> sample_bilinear(const Image<T> &img, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0) || u > img.width() - 1 || v > img.height() - 1 ||
      img.width() < 2 || img.height() < 2) {
    return std::nullopt;
  }
  int u0 = std::min(static_cast<int>(u), img.width() - 2);
  int v0 = std::min(static_cast<int>(v), img.height() - 2);
  const double a = u - u0;
  const double b = v - v0;
  const double top = (1.0 - a) * img(u0, v0) + a * img(u0 + 1, v0);
  const double bottom = (1.0 - a) * img(u0, v0 + 1) + a * img(u0 + 1, v0 + 1);
  return (1.0 - b) * top + b * bottom;
}

/**
 * Bilinear resize using pixel-center alignment; source coordinates are clamped
 * to the border.
 */
inline Image<double> resize_bilinear(const Image<double> &src, int width, int height) {
  if (src.empty()) {
    throw std::invalid_argument("resize_bilinear: empty source");
  }
  if (src.same_shape(width, height)) {
    return src;
  }
  Image<double> dst(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int v = 0; v < height; ++v) {
    const double y = std::clamp((v + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double b = y - y0;
    for (int u = 0; u < width; ++u) {
      const double x = std::clamp((u + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double a = x - x0;
      const double top = (1.0 - a) * src(x0, y0) + a * src(x1, y0);
      const double bottom = (1.0 - a) * src(x0, y1) + a * src(x1, y1);
      dst(u, v) = (1.0 - b) * top + b * bottom;
    }
  }
  return dst;
}

/// Resize that keeps invalid (non-positive) pixels out of the interpolation:
/// output is invalid wherever any contributing source pixel is invalid.
inline Image<double> resize_bilinear_masked(const Image<double> &src, int width, int height) {
  if (src.same_shape(width, height)) {
    return src;
  }
  Image<double> validity(src.width(), src.height());
  for (int v = 0; v < src.height(); ++v) {
    for (int u = 0; u < src.width(); ++u) {
      validity(u, v) = src(u, v) > 0.0 ? 1.0 : 0.0;
    }
  }
  Image<double> out = resize_bilinear(src, width, height);
  const Image<double> weight = resize_bilinear(validity, width, height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      if (weight(u, v) < 1.0 - 1e-12) out(u, v) = 0.0;
    }
  }
  return out;
}

/// Mask of pixels with finite, strictly positive depth.
inline PixelMask valid_depth_mask(const DepthImage &depth) {
  PixelMask mask(depth.width(), depth.height(), 0);
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth(u, v);
      mask(u, v) = (std::isfinite(d) && d > 0.0) ? 1 : 0;
    }
  }
  return mask;
}

inline std::size_t count_selected(const PixelMask &mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.pixels().begin(), mask.pixels().end(), [](std::uint8_t m) { return m != 0; }));
}

/**
 * Gradient magnitude used for high/low-gradient classification: the larger of
 * the absolute forward differences along u and v. The last column (row) has
 * no forward neighbor and contributes zero along that axis.
 */
inline Image<double> forward_gradient_magnitude(const GrayImage &img) {
  Image<double> mag(img.width(), img.height(), 0.0);
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      const double gx = u + 1 < img.width() ? std::abs(img(u + 1, v) - img(u, v)) : 0.0;
      const double gy = v + 1 < img.height() ? std::abs(img(u, v + 1) - img(u, v)) : 0.0;
      mag(u, v) = std::max(gx, gy);
    }
  }
  return mag;
}

/// Pixels whose forward gradient magnitude strictly exceeds `threshold`.
inline PixelMask high_gradient_mask(const GrayImage &img, double threshold) {
  const Image<double> mag = forward_gradient_magnitude(img);
  PixelMask mask(img.width(), img.height(), 0);
  for (int v = 0; v < img.height(); ++v) {
    for (int u = 0; u < img.width(); ++u) {
      mask(u, v) = mag(u, v) > threshold ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace smvfuse

#endif  // SMVFUSE_IMAGE_HPP

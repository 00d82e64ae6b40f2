#ifndef SMVFUSE_GEOMETRY_HPP
#define SMVFUSE_GEOMETRY_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace smvfuse {

/// Pinhole intrinsics. No lens distortion.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
      throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive and finite");
    }
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("CameraIntrinsics: image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw std::invalid_argument("CameraIntrinsics: principal point outside the image");
    }
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  /// Unnormalized ray K^-1 [u v 1]^T.
  Eigen::Vector3d backproject(double u, double v) const {
    return {(u - cx) / fx, (v - cy) / fy, 1.0};
  }

  /// Unit-norm viewing ray through (u, v).
  Eigen::Vector3d bearing(double u, double v) const { return backproject(u, v).normalized(); }

  bool operator==(const CameraIntrinsics &) const = default;
};

/// Continuous pixel coordinate: u is the column, v the row.
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

/**
 * Rigid transform x' = rotation * x + translation. Frame poses are stored
 * camera-to-world.
 */
class RigidPose {
 public:
  static constexpr double kTolerance = 1e-9;

  RigidPose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

  RigidPose(const Eigen::Matrix3d &rotation, const Eigen::Vector3d &translation)
      : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !translation_.allFinite()) {
      throw std::invalid_argument("RigidPose: non-finite entries");
    }
    const double ortho_err =
        (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho_err > kTolerance || std::abs(rotation_.determinant() - 1.0) > kTolerance) {
      throw std::invalid_argument("RigidPose: rotation is not orthonormal with det +1");
    }
  }

  /// Builds from a quaternion, which must already be unit within 1e-9.
  static RigidPose from_quaternion(const Eigen::Quaterniond &q, const Eigen::Vector3d &translation) {
    return {q.toRotationMatrix(), translation};
  }

  static RigidPose translation_only(const Eigen::Vector3d &translation) {
    return {Eigen::Matrix3d::Identity(), translation};
  }

  const Eigen::Matrix3d &rotation() const { return rotation_; }
  const Eigen::Vector3d &translation() const { return translation_; }

  Eigen::Vector3d operator*(const Eigen::Vector3d &x) const { return rotation_ * x + translation_; }

  RigidPose operator*(const RigidPose &rhs) const {
    return RigidPose(Unchecked{}, rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
  }

  RigidPose inverse() const {
    const Eigen::Matrix3d rt = rotation_.transpose();
    return RigidPose(Unchecked{}, rt, -(rt * translation_));
  }

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_); }

 private:
  struct Unchecked {};
  RigidPose(Unchecked, const Eigen::Matrix3d &rotation, const Eigen::Vector3d &translation)
      : rotation_(rotation), translation_(translation) {}

  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/**
 * Pose of the overlapping camera expressed in the keyframe camera, given both
 * camera-to-world poses. This is the (R_ko, t_ko) pair consumed by warp_pixel:
 * a point X_k in keyframe coordinates lands at R_ko^T (X_k - t_ko) in the
 * overlapping camera.
 */
inline RigidPose relative_pose(const RigidPose &keyframe_to_world, const RigidPose &other_to_world) {
  return keyframe_to_world.inverse() * other_to_world;
}

namespace detail {

inline void require_warp_inputs(const PixelCoord &x, double rho) {
  if (!std::isfinite(x.u) || !std::isfinite(x.v) || !std::isfinite(rho)) {
    throw std::invalid_argument("warp_pixel: non-finite input");
  }
  if (!(rho > 0.0)) {
    throw std::invalid_argument("warp_pixel: inverse depth must be positive");
  }
}

}  // namespace detail

/**
 * Backproject keyframe pixel x_k to the point at inverse ray distance rho and
 * project it into the overlapping camera:
 *
 *   x_o ~ K R_ko^T ( [ K^-1 x_k / |K^-1 x_k| ; rho ] - t_ko )
 *
 * The homogeneous point is scaled by 1/rho before subtracting t_ko. Returns
 * nullopt when the point is not in front of the camera or lands outside
 * [0, width-1] x [0, height-1].
 */
inline std::optional<PixelCoord> warp_pixel(const CameraIntrinsics &intr, const RigidPose &pose_ko,
                                            const PixelCoord &x_k, double rho) {
  detail::require_warp_inputs(x_k, rho);
  const Eigen::Vector3d bearing = intr.bearing(x_k.u, x_k.v);
  // R^T (b/rho - t) scaled by rho; projection is invariant to the positive scale.
  const Eigen::Vector3d p = pose_ko.rotation().transpose() * (bearing - rho * pose_ko.translation());
  if (!(p.z() > 0.0)) return std::nullopt;
  const double u = intr.fx * p.x() / p.z() + intr.cx;
  const double v = intr.fy * p.y() / p.z() + intr.cy;
  if (!(u >= 0.0 && v >= 0.0 && u <= intr.width - 1 && v <= intr.height - 1)) {
    return std::nullopt;
  }
  return PixelCoord{u, v};
}

/// Finite-difference step for inverse_depth_sensitivity, in 1/m.
inline constexpr double kSensitivityStep = 1e-4;

/**
 * Pixels of epipolar motion per unit inverse depth at rho: central difference
 * of the warp with step kSensitivityStep. nullopt when either perturbed warp
 * leaves the view (or rho - step is not positive).
 */
inline std::optional<double> inverse_depth_sensitivity(const CameraIntrinsics &intr,
                                                       const RigidPose &pose_ko,
                                                       const PixelCoord &x_k, double rho) {
  detail::require_warp_inputs(x_k, rho);
  if (!(rho - kSensitivityStep > 0.0)) return std::nullopt;
  const auto plus = warp_pixel(intr, pose_ko, x_k, rho + kSensitivityStep);
  const auto minus = warp_pixel(intr, pose_ko, x_k, rho - kSensitivityStep);
  if (!plus || !minus) return std::nullopt;
  return std::hypot(plus->u - minus->u, plus->v - minus->v) / (2.0 * kSensitivityStep);
}

/// Z-depth of the point at inverse ray distance rho along the ray through (u, v).
inline double inverse_distance_to_z(const CameraIntrinsics &intr, double u, double v, double rho) {
  return 1.0 / (rho * intr.backproject(u, v).norm());
}

/// Inverse ray distance of the point with z-depth z on the ray through (u, v).
inline double z_to_inverse_distance(const CameraIntrinsics &intr, double u, double v, double z) {
  return 1.0 / (z * intr.backproject(u, v).norm());
}

}  // namespace smvfuse

#endif  // SMVFUSE_GEOMETRY_HPP

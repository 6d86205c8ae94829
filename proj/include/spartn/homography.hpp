#pragma once

#include "spartn/camera.hpp"
#include "spartn/image.hpp"
#include "spartn/se3.hpp"

#include <Eigen/Core>

#include <vector>

namespace spartn {

// Projective map between pixel coordinates, normalized so h(2,2) = 1 when nonzero.
struct Homography {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();

  static Homography normalized(const Eigen::Matrix3d& m);
  Homography inverse() const;
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
};

Homography compose(const Homography& second, const Homography& first);

// H = K R^T K^-1: maps a pixel of the original camera to the pixel of a camera
// rotated by `r` (expressed in the original camera frame) about its center.
Homography rotation_homography(const CameraIntrinsics& intr, const Rotation& r);

// Inverse-mapped bilinear resampling: out(p) = in(H^-1 p). Pixels whose
// preimage falls outside the source get `fill`. `valid` (optional) records
// which output pixels had an in-bounds preimage.
Image warp(const Image& img, const Homography& h, const Color& fill,
           std::vector<bool>* valid = nullptr);

// Camera-frame rotation induced by an end-effector rotation perturbation for a
// camera mounted at e_T_c (translation of the mount is ignored).
Rotation camera_rotation_from_ee(const Rotation& ee_rotation, const Transform& e_T_c);

}  // namespace spartn

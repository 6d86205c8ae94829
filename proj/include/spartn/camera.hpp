#pragma once

#include "spartn/se3.hpp"

#include <Eigen/Core>

namespace spartn {

// Pinhole intrinsics. Pixel (u, v) has its center at integer coordinates, so a
// W-wide image is centered at cx = (W - 1) / 2. Camera frame: x right, y down,
// z forward.
struct CameraIntrinsics {
  double fx = 48.0;
  double fy = 48.0;
  double cx = 31.5;
  double cy = 31.5;
  int width = 64;
  int height = 64;

  static CameraIntrinsics centered(int width, int height, double focal) {
    return {focal, focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  }

  void validate() const;
  Eigen::Matrix3d matrix() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

// Ray through pixel (u, v) for a camera at pose ^RefT^C.
Ray pixel_ray(const Transform& camera_pose, const CameraIntrinsics& intr, double u, double v);

}  // namespace spartn

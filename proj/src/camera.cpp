#include "spartn/camera.hpp"

#include "spartn/errors.hpp"

namespace spartn {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw InvalidArgument("principal point outside the image");
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Ray pixel_ray(const Transform& camera_pose, const CameraIntrinsics& intr, double u, double v) {
  const Vec3 local((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return {camera_pose.translation, (camera_pose.rotation * local).normalized()};
}

}  // namespace spartn

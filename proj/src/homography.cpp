#include "spartn/homography.hpp"

#include "spartn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace spartn {

Homography Homography::normalized(const Eigen::Matrix3d& m) {
  if (std::abs(m.determinant()) <= 1e-12) throw InvalidArgument("homography is singular");
  Homography out{m};
  if (std::abs(m(2, 2)) > 1e-15) out.h /= m(2, 2);
  return out;
}

Homography Homography::inverse() const { return normalized(h.inverse()); }

Eigen::Vector2d Homography::apply(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

Homography compose(const Homography& second, const Homography& first) {
  return Homography::normalized(second.h * first.h);
}

Homography rotation_homography(const CameraIntrinsics& intr, const Rotation& r) {
  const Eigen::Matrix3d k = intr.matrix();
  return Homography::normalized(k * r.transpose() * k.inverse());
}

Image warp(const Image& img, const Homography& h, const Color& fill, std::vector<bool>* valid) {
  const Homography inv = h.inverse();
  const int w = img.width();
  const int ht = img.height();
  Image out(w, ht, fill);
  if (valid) valid->assign(out.pixel_count(), false);
  for (int y = 0; y < ht; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d q = inv.h * Eigen::Vector3d(x, y, 1.0);
      if (q.z() <= 0.0) continue;
      const double sx = q.x() / q.z();
      const double sy = q.y() / q.z();
      // Tolerance keeps integer-offset preimages on the last row/column in bounds.
      constexpr double kEdge = 1e-9;
      if (sx < -kEdge || sy < -kEdge || sx > w - 1 + kEdge || sy > ht - 1 + kEdge) continue;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, w - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, ht - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, ht - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      const double fy = std::clamp(sy - y0, 0.0, 1.0);
      const Color c = (1 - fx) * (1 - fy) * img.at(x0, y0) + fx * (1 - fy) * img.at(x1, y0) +
                      (1 - fx) * fy * img.at(x0, y1) + fx * fy * img.at(x1, y1);
      out.set(x, y, c);
      if (valid) (*valid)[static_cast<std::size_t>(y) * w + x] = true;
    }
  }
  return out;
}

Rotation camera_rotation_from_ee(const Rotation& ee_rotation, const Transform& e_T_c) {
  return e_T_c.rotation.transpose() * ee_rotation * e_T_c.rotation;
}

}  // namespace spartn

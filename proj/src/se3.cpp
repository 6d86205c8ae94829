#include "spartn/se3.hpp"

#include "spartn/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace spartn {

Transform Transform::from_matrix(const Eigen::Matrix4d& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Eigen::Matrix4d Transform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

std::array<double, 12> Transform::to_row_major() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 4 + c] = rotation(r, c);
    out[r * 4 + 3] = translation(r);
  }
  return out;
}

Transform Transform::from_row_major(std::span<const double, 12> v) {
  Transform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[r * 4 + c];
    t.translation(r) = v[r * 4 + 3];
  }
  return t;
}

Transform compose(const Transform& a, const Transform& b) {
  Transform out;
  out.rotation = orthonormalize(a.rotation * b.rotation);
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Transform inverse(const Transform& t) {
  Transform out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

double max_abs_diff(const Transform& a, const Transform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

bool is_rotation(const Rotation& r, double tol) {
  const double ortho = (r.transpose() * r - Rotation::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

Rotation orthonormalize(const Rotation& r, double threshold) {
  const double defect = (r.transpose() * r - Rotation::Identity()).cwiseAbs().maxCoeff();
  if (defect <= threshold) return r;
  Eigen::JacobiSVD<Rotation> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Rotation u = svd.matrixU();
  const Rotation& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

double rotation_angle_between(const Rotation& a, const Rotation& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Rotation axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Rotation from_euler(const EulerAngles& e) {
  const Rotation rx = Eigen::AngleAxisd(e.phi, Vec3::UnitX()).toRotationMatrix();
  const Rotation ry = Eigen::AngleAxisd(e.theta, Vec3::UnitY()).toRotationMatrix();
  const Rotation rz = Eigen::AngleAxisd(e.psi, Vec3::UnitZ()).toRotationMatrix();
  return rx * ry * rz;
}

EulerDecomposition to_euler_checked(const Rotation& r) {
  // R = Rx*Ry*Rz gives R(0,2) = sin(theta), R(1,2) = -sin(phi)cos(theta),
  // R(2,2) = cos(phi)cos(theta), R(0,1) = -cos(theta)sin(psi), R(0,0) = cos(theta)cos(psi).
  EulerDecomposition out;
  const double s = std::clamp(r(0, 2), -1.0, 1.0);
  out.angles.theta = std::asin(s);
  if (std::abs(s) > 1.0 - 1e-12) {
    out.gimbal_lock = true;
    out.angles.psi = 0.0;
    // With psi = 0: R(1,0) = sin(phi)sin(theta), R(1,1) = cos(phi).
    out.angles.phi = std::atan2(r(1, 0) * (s > 0 ? 1.0 : -1.0), r(1, 1));
  } else {
    out.angles.phi = std::atan2(-r(1, 2), r(2, 2));
    out.angles.psi = std::atan2(-r(0, 1), r(0, 0));
  }
  return out;
}

void NoiseParams::validate() const {
  if (!(alpha >= 0.0) || !(beta_t >= 0.0)) {
    throw InvalidArgument("noise bounds must be non-negative");
  }
}

Transform sample_perturbation(const NoiseParams& p, std::mt19937_64& rng) {
  p.validate();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  EulerAngles e;
  e.phi = p.alpha * unit(rng);
  e.theta = p.alpha * unit(rng);
  e.psi = p.alpha * unit(rng);
  Vec3 t;
  for (int i = 0; i < 3; ++i) t(i) = p.beta_t * unit(rng);
  return {from_euler(e), t};
}

Transform perturb_pose(const Transform& t, const Transform& eps) { return compose(t, eps); }

Transform corrective_action(const Transform& eps, const Transform& a) {
  return compose(inverse(eps), a);
}

Transform camera_from_ee(const Transform& w_T_e, const Transform& e_T_c) {
  return compose(w_T_e, e_T_c);
}

std::ostream& operator<<(std::ostream& os, const Transform& t) {
  const auto v = t.to_row_major();
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os;
}

}  // namespace spartn

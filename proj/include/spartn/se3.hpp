#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <iosfwd>
#include <random>
#include <span>

namespace spartn {

using Vec3 = Eigen::Vector3d;
using Rotation = Eigen::Matrix3d;

// Rigid transform ^aT^b: maps points expressed in frame b into frame a.
struct Transform {
  Rotation rotation = Rotation::Identity();
  Vec3 translation = Vec3::Zero();

  static Transform identity() { return {}; }
  static Transform from_translation(const Vec3& t) { return {Rotation::Identity(), t}; }
  static Transform from_matrix(const Eigen::Matrix4d& m);

  Eigen::Matrix4d matrix() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  // Row-major 3x4 [R | t], the on-disk representation used by every dataset file.
  std::array<double, 12> to_row_major() const;
  static Transform from_row_major(std::span<const double, 12> v);
};

Transform compose(const Transform& a, const Transform& b);
Transform inverse(const Transform& t);
inline Transform operator*(const Transform& a, const Transform& b) { return compose(a, b); }

// Largest elementwise difference between the 4x4 matrix forms.
double max_abs_diff(const Transform& a, const Transform& b);

bool is_rotation(const Rotation& r, double tol = 1e-9);

// Polar-decomposition projection onto SO(3); only applied when the
// orthonormality defect exceeds `threshold`.
Rotation orthonormalize(const Rotation& r, double threshold = 1e-7);

// Geodesic angle between two rotations (radians).
double rotation_angle_between(const Rotation& a, const Rotation& b);

// Intrinsic X-Y-Z Euler angles: R = Rx(phi) * Ry(theta) * Rz(psi).
struct EulerAngles {
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;
};

Rotation from_euler(const EulerAngles& e);

struct EulerDecomposition {
  EulerAngles angles;
  bool gimbal_lock = false;
};

// At gimbal lock (|theta| = pi/2) psi is pinned to 0 and the remaining
// rotation is folded into phi.
EulerDecomposition to_euler_checked(const Rotation& r);
inline EulerAngles to_euler(const Rotation& r) { return to_euler_checked(r).angles; }

Rotation axis_angle(const Vec3& axis, double angle);

// Uniform box noise on the six Euler/translation parameters.
struct NoiseParams {
  double alpha = 0.0;   // radians, per Euler angle
  double beta_t = 0.0;  // meters, per translation component

  void validate() const;
};

Transform sample_perturbation(const NoiseParams& p, std::mt19937_64& rng);

// eps acts in the end-effector frame (right multiplication).
Transform perturb_pose(const Transform& t, const Transform& eps);

// Relative action that takes the perturbed pose t*eps to the same desired
// world pose as `a` takes t: compose(t*eps, result) == compose(t, a).
Transform corrective_action(const Transform& eps, const Transform& a);

// Eye-in-hand chain ^WT^C = ^WT^E * ^ET^C.
Transform camera_from_ee(const Transform& w_T_e, const Transform& e_T_c);

std::ostream& operator<<(std::ostream& os, const Transform& t);

}  // namespace spartn

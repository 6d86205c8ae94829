#include "oracles.hpp"
#include "spartn/errors.hpp"
#include "spartn/se3.hpp"

#include <doctest.h>

#include <numbers>

using namespace spartn;

TEST_CASE("compose with identity and inverse") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Transform t = oracle::random_transform(rng);
    CHECK(max_abs_diff(compose(Transform::identity(), t), t) == 0.0);
    CHECK(max_abs_diff(compose(t, inverse(t)), Transform::identity()) < 1e-12);
  }
}

TEST_CASE("compose matches 4x4 homogeneous product") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Transform a = oracle::random_transform(rng, 2.0);
    const Transform b = oracle::random_transform(rng, 2.0);
    const Eigen::Matrix4d expect = oracle::homogeneous(a) * oracle::homogeneous(b);
    CHECK(oracle::max_abs(compose(a, b).matrix(), expect) < 1e-12);
  }
}

TEST_CASE("inverse") {
  CHECK(max_abs_diff(inverse(Transform::identity()), Transform::identity()) == 0.0);
  const Transform t = Transform::from_translation(Vec3(0, 0, 0.1));
  const Transform ti = inverse(t);
  CHECK(ti.rotation == Rotation::Identity());
  CHECK(ti.translation.isApprox(Vec3(0, 0, -0.1)));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Transform r = oracle::random_transform(rng);
    CHECK(max_abs_diff(inverse(inverse(r)), r) < 1e-12);
    CHECK(oracle::max_abs(inverse(r).matrix(), oracle::homogeneous(r).inverse()) < 1e-12);
  }
}

TEST_CASE("associativity") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Transform a = oracle::random_transform(rng), b = oracle::random_transform(rng),
                    c = oracle::random_transform(rng);
    CHECK(max_abs_diff(compose(compose(a, b), c), compose(a, compose(b, c))) < 1e-12);
  }
}

TEST_CASE("long compose chains stay orthonormal") {
  std::mt19937_64 rng(5);
  Transform acc;
  for (int i = 0; i < 20000; ++i) acc = compose(acc, oracle::random_transform(rng, 0.01));
  CHECK(is_rotation(acc.rotation, 1e-9));
}

TEST_CASE("orthonormalize projects a perturbed rotation") {
  std::mt19937_64 rng(6);
  const Rotation r = oracle::random_rotation(rng);
  Rotation bad = r;
  bad(0, 1) += 1e-4;
  const Rotation fixed = orthonormalize(bad);
  CHECK(is_rotation(fixed, 1e-12));
  CHECK(oracle::max_abs(fixed, r) < 1e-4);
  // Below the threshold the input is returned untouched.
  CHECK(orthonormalize(r) == r);
}

TEST_CASE("from_euler") {
  CHECK(oracle::max_abs(from_euler({0, 0, 0}), Eigen::Matrix3d::Identity()) == 0.0);
  const Rotation r = from_euler({std::numbers::pi / 2, 0, 0});
  CHECK(oracle::max_abs(r, oracle::rodrigues(Vec3::UnitX(), std::numbers::pi / 2)) < 1e-15);
  CHECK((r * Vec3::UnitY()).isApprox(Vec3::UnitZ(), 1e-15));
  // Intrinsic X-Y-Z as a product of elementary rotations.
  const double a = 0.3, b = -0.7, c = 1.1;
  const Eigen::Matrix3d expect = oracle::rodrigues(Vec3::UnitX(), a) * oracle::rodrigues(Vec3::UnitY(), b) *
                                 oracle::rodrigues(Vec3::UnitZ(), c);
  CHECK(oracle::max_abs(from_euler({a, b, c}), expect) < 1e-14);
}

TEST_CASE("euler round trip") {
  const EulerAngles e = to_euler(from_euler({0.1, -0.2, 0.3}));
  CHECK(e.phi == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(e.theta == doctest::Approx(-0.2).epsilon(1e-9));
  CHECK(e.psi == doctest::Approx(0.3).epsilon(1e-9));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> tilt(-std::numbers::pi / 2 + 1e-3, std::numbers::pi / 2 - 1e-3);
  for (int i = 0; i < 10000; ++i) {
    const Rotation r = from_euler({ang(rng), tilt(rng), ang(rng)});
    const auto d = to_euler_checked(r);
    CHECK_FALSE(d.gimbal_lock);
    CHECK(oracle::max_abs(from_euler(d.angles), r) < 1e-9);
    CHECK(d.angles.phi > -std::numbers::pi);
    CHECK(d.angles.phi <= std::numbers::pi);
  }
}

TEST_CASE("gimbal lock pins psi to zero") {
  for (double sign : {1.0, -1.0}) {
    const Rotation r = from_euler({0.4, sign * std::numbers::pi / 2, 0.25});
    const auto d = to_euler_checked(r);
    CHECK(d.gimbal_lock);
    CHECK(d.angles.psi == 0.0);
    CHECK(oracle::max_abs(from_euler(d.angles), r) < 1e-9);
  }
}

TEST_CASE("sample_perturbation") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    CHECK(max_abs_diff(sample_perturbation({0.0, 0.0}, rng), Transform::identity()) == 0.0);
  }
  const NoiseParams p{0.2, 0.003};
  for (int i = 0; i < 10000; ++i) {
    const Transform e = sample_perturbation(p, rng);
    CHECK(is_rotation(e.rotation));
    const EulerAngles a = to_euler(e.rotation);
    for (double v : {a.phi, a.theta, a.psi}) CHECK(std::abs(v) <= 0.2 + 1e-12);
    CHECK(e.translation.cwiseAbs().maxCoeff() <= 0.003);
  }
  CHECK_THROWS_AS(NoiseParams({-0.1, 0.0}).validate(), InvalidArgument);
}

TEST_CASE("perturbation translation mean is zero") {
  std::mt19937_64 rng(9);
  const NoiseParams p{0.2, 0.003};
  const int n = 100000;
  Vec3 sum = Vec3::Zero();
  for (int i = 0; i < n; ++i) sum += sample_perturbation(p, rng).translation;
  const Vec3 mean = sum / n;
  // Per-component uniform on [-b, b] has std b / sqrt(3).
  const double tol = 3.0 * (p.beta_t / std::sqrt(3.0 * n));
  CHECK(mean.cwiseAbs().maxCoeff() < tol);
}

TEST_CASE("perturbation determinism") {
  std::mt19937_64 a(10), b(10);
  for (int i = 0; i < 100; ++i) {
    CHECK(max_abs_diff(sample_perturbation({0.2, 0.003}, a), sample_perturbation({0.2, 0.003}, b)) == 0.0);
  }
}

TEST_CASE("perturb_pose and corrective_action") {
  std::mt19937_64 rng(11);
  const Transform t = oracle::random_transform(rng), eps = oracle::random_transform(rng, 0.01),
                  a = oracle::random_transform(rng, 0.02);
  CHECK(max_abs_diff(perturb_pose(t, Transform::identity()), t) == 0.0);
  CHECK(max_abs_diff(perturb_pose(Transform::identity(), eps), eps) == 0.0);
  CHECK(oracle::max_abs(perturb_pose(t, eps).matrix(), oracle::homogeneous(t) * oracle::homogeneous(eps)) < 1e-12);
  CHECK(max_abs_diff(corrective_action(Transform::identity(), a), a) < 1e-15);
  CHECK(max_abs_diff(corrective_action(eps, Transform::identity()), inverse(eps)) < 1e-15);
  for (int i = 0; i < 1000; ++i) {
    const Transform T = oracle::random_transform(rng), e = oracle::random_transform(rng, 0.2),
                    act = oracle::random_transform(rng, 0.05);
    const Eigen::Matrix4d lhs = oracle::homogeneous(perturb_pose(T, e)) * oracle::homogeneous(corrective_action(e, act));
    CHECK(oracle::max_abs(lhs, oracle::homogeneous(T) * oracle::homogeneous(act)) < 1e-12);
  }
}

TEST_CASE("camera_from_ee") {
  std::mt19937_64 rng(12);
  const Transform w = oracle::random_transform(rng), c = oracle::random_transform(rng);
  CHECK(max_abs_diff(camera_from_ee(w, Transform::identity()), w) == 0.0);
  CHECK(max_abs_diff(camera_from_ee(Transform::identity(), c), c) == 0.0);
  CHECK(oracle::max_abs(camera_from_ee(w, c).matrix(), oracle::homogeneous(w) * oracle::homogeneous(c)) < 1e-12);
}

TEST_CASE("row-major serialization") {
  std::mt19937_64 rng(13);
  const Transform t = oracle::random_transform(rng);
  const auto v = t.to_row_major();
  CHECK(v[0] == t.rotation(0, 0));
  CHECK(v[1] == t.rotation(0, 1));
  CHECK(v[3] == t.translation.x());
  CHECK(v[11] == t.translation.z());
  CHECK(max_abs_diff(Transform::from_row_major(std::span<const double, 12>(v)), t) == 0.0);
}

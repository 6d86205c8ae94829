#pragma once

#include "spartn/camera.hpp"
#include "spartn/image.hpp"
#include "spartn/se3.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace spartn {

enum class Shape { Sphere, Box, Cylinder };

// Primitive in its own frame: sphere of radius size.x; box of half-extents
// size; cylinder of radius size.x and half-height size.z about the local z axis.
struct SceneObject {
  Shape shape = Shape::Sphere;
  Transform pose;
  Vec3 size = Vec3::Zero();
  Color color = Color::Zero();
  bool is_target = false;

  double lowest_point() const;
  double bounding_radius_xy() const;
  std::vector<Vec3> grasp_sites() const;  // world frame
  bool contains(const Vec3& p) const;
  // Closest hit distance along a unit ray, with the world-frame surface normal.
  std::optional<std::pair<double, Vec3>> intersect(const Vec3& origin, const Vec3& dir) const;
};

struct Scene {
  std::vector<SceneObject> objects;
  double table_height = 0.0;
  std::uint64_t seed = 0;

  int target_index() const;  // -1 if no target
};

struct ActionBounds {
  double rotation = 0.2;      // radians, per Euler angle
  double translation = 0.02;  // meters, per component
};

enum class GripperCommand { Open, Close };

struct EnvAction {
  Transform delta;  // ^ET^{E-hat}
  GripperCommand gripper = GripperCommand::Open;
};

struct EnvConfig {
  CameraIntrinsics intrinsics = CameraIntrinsics::centered(64, 64, 48.0);
  // Camera 10 cm behind the fingertip point along the approach axis, offset so
  // the fingers appear in the lower part of the image.
  Transform e_T_c = Transform::from_translation(Vec3(0.0, -0.04, -0.10));
  ActionBounds bounds;
  int horizon = 40;
  int distractors = 2;
  double grasp_radius = 0.015;
  double lift_height = 0.10;
  double table_height = 0.0;
  double target_region = 0.08;       // target xy in [-r, r]^2
  double distractor_region = 0.16;
  double start_offset_xy = 0.06;     // start fingertip offset from target site
  double start_height_min = 0.24;
  double start_height_max = 0.28;
  double start_yaw = 0.3;
  double start_tilt = 0.08;
  double expert_gain = 0.5;
  double expert_max_step = 0.018;
  double expert_rot_gain = 0.5;
  double expert_max_rot = 0.12;
  double lift_step = 0.018;
  double min_fingertip_height = 0.002;

  void validate() const;
};

struct EnvState {
  Scene scene;
  Transform ee_pose;  // ^WT^E, origin at the fingertip point
  bool gripper_open = true;
  std::optional<int> grasped;
  Transform grasp_offset;  // ^ET^O captured at grasp time
  int step_count = 0;
  bool collision = false;
};

struct Observation {
  Image image;
  Transform ee_pose;
  bool gripper_open = true;
};

struct StepResult {
  EnvState state;
  Observation observation;
  bool clamped = false;
};

// End-effector orientation looking straight down at the table.
Rotation top_down();

EnvState reset(const EnvConfig& cfg, std::uint64_t seed);
StepResult step(const EnvConfig& cfg, const EnvState& state, const EnvAction& action);

// Clamp Euler angles and translation components into the bounds.
EnvAction clamp_action(const EnvAction& a, const ActionBounds& b, bool* clamped = nullptr);

// Fixed finger overlay region for the configured intrinsics.
PixelMask gripper_mask(const CameraIntrinsics& intr);

// Analytic closest-hit render of the scene from a world camera pose, without
// the gripper overlay. `ids` (optional) receives per-pixel hit ids: object
// index, -1 for table, -2 for background.
Image render_scene(const Scene& scene, const Transform& w_T_c, const CameraIntrinsics& intr,
                   std::vector<int>* ids = nullptr);

// Wrist-camera observation: scene render at camera_from_ee(ee_pose, e_T_c)
// with the fixed finger overlay composited into the mask region.
Image render_camera(const EnvConfig& cfg, const EnvState& state);

Observation observe(const EnvConfig& cfg, const EnvState& state);

EnvAction scripted_expert(const EnvConfig& cfg, const EnvState& state);

bool success(const EnvState& state, double lift_height);

// Distance from the fingertip point to the nearest target grasp site.
double distance_to_target(const EnvState& state);

}  // namespace spartn

#include "spartn/grasp_sim.hpp"

#include "spartn/errors.hpp"
#include "spartn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace spartn {
namespace {

constexpr int kMaxPlacementAttempts = 1000;
const Color kSky(0.78, 0.84, 0.90);
const Color kTableA(0.62, 0.56, 0.46);
const Color kTableB(0.54, 0.48, 0.39);
const Color kFinger(0.22, 0.22, 0.25);
constexpr double kCheckerSize = 0.04;

Vec3 light_direction() { return Vec3(0.3, -0.2, 1.0).normalized(); }

double shade(const Vec3& normal) { return 0.35 + 0.65 * std::max(0.0, normal.dot(light_direction())); }

Color table_color(const Vec3& p) {
  const auto ix = static_cast<long>(std::floor(p.x() / kCheckerSize));
  const auto iy = static_cast<long>(std::floor(p.y() / kCheckerSize));
  return ((ix + iy) % 2 == 0) ? kTableA : kTableB;
}

// Rest-pose distance of the object center above its lowest point.
double rest_height(Shape shape, const Vec3& size) {
  switch (shape) {
    case Shape::Sphere:
      return size.x();
    case Shape::Box:
    case Shape::Cylinder:
      return size.z();
  }
  return 0.0;
}

std::vector<Vec3> finger_points() {
  std::vector<Vec3> pts;
  for (double x : {-0.03, 0.03}) {
    for (double z : {-0.05, -0.025, 0.0}) pts.emplace_back(x, 0.0, z);
  }
  return pts;
}

bool any_collision(const EnvState& s) {
  const auto pts = finger_points();
  for (std::size_t i = 0; i < s.scene.objects.size(); ++i) {
    if (s.grasped && *s.grasped == static_cast<int>(i)) continue;
    for (const auto& p : pts) {
      if (s.scene.objects[i].contains(s.ee_pose.apply(p))) return true;
    }
  }
  return false;
}

Rotation scaled_rotation(const Rotation& r, double gain, double cap) {
  const Eigen::AngleAxisd aa(r);
  const double angle = std::min(std::abs(aa.angle()) * gain, cap);
  if (angle < 1e-15) return Rotation::Identity();
  return axis_angle(aa.axis() * (aa.angle() >= 0 ? 1.0 : -1.0), angle);
}

}  // namespace

double SceneObject::lowest_point() const {
  const Rotation& r = pose.rotation;
  const double z = pose.translation.z();
  switch (shape) {
    case Shape::Sphere:
      return z - size.x();
    case Shape::Box:
      return z - (std::abs(r(2, 0)) * size.x() + std::abs(r(2, 1)) * size.y() +
                  std::abs(r(2, 2)) * size.z());
    case Shape::Cylinder: {
      const double c = std::abs(r(2, 2));
      return z - (c * size.z() + std::sqrt(std::max(0.0, 1.0 - c * c)) * size.x());
    }
  }
  return z;
}

double SceneObject::bounding_radius_xy() const {
  switch (shape) {
    case Shape::Sphere:
    case Shape::Cylinder:
      return size.x();
    case Shape::Box:
      return std::hypot(size.x(), size.y());
  }
  return 0.0;
}

std::vector<Vec3> SceneObject::grasp_sites() const {
  std::vector<Vec3> local;
  switch (shape) {
    case Shape::Sphere:
      local.emplace_back(0.0, 0.0, size.x());
      break;
    case Shape::Box:
      local.emplace_back(0.0, 0.0, size.z());
      break;
    case Shape::Cylinder:
      for (int q = 0; q < 4; ++q) {
        const double a = q * std::numbers::pi / 2.0;
        local.emplace_back(size.x() * std::cos(a), size.x() * std::sin(a), size.z());
      }
      break;
  }
  std::vector<Vec3> world;
  for (const auto& p : local) world.push_back(pose.apply(p));
  return world;
}

bool SceneObject::contains(const Vec3& p) const {
  const Vec3 q = inverse(pose).apply(p);
  switch (shape) {
    case Shape::Sphere:
      return q.norm() < size.x();
    case Shape::Box:
      return (q.cwiseAbs().array() < size.array()).all();
    case Shape::Cylinder:
      return std::hypot(q.x(), q.y()) < size.x() && std::abs(q.z()) < size.z();
  }
  return false;
}

std::optional<std::pair<double, Vec3>> SceneObject::intersect(const Vec3& origin,
                                                             const Vec3& dir) const {
  const Rotation& r = pose.rotation;
  const Vec3 o = r.transpose() * (origin - pose.translation);
  const Vec3 d = r.transpose() * dir;
  constexpr double kEps = 1e-9;
  double best = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();

  switch (shape) {
    case Shape::Sphere: {
      const double rad = size.x();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - rad * rad;
      const double disc = b * b - c;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      for (double t : {-b - sq, -b + sq}) {
        if (t > kEps) {
          best = t;
          normal = (o + t * d) / rad;
          break;
        }
      }
      break;
    }
    case Shape::Box: {
      double t_enter = -std::numeric_limits<double>::infinity();
      double t_exit = std::numeric_limits<double>::infinity();
      int axis = -1;
      double sign = 0.0;
      for (int a = 0; a < 3; ++a) {
        if (std::abs(d(a)) < 1e-15) {
          if (std::abs(o(a)) > size(a)) return std::nullopt;
          continue;
        }
        double t1 = (-size(a) - o(a)) / d(a);
        double t2 = (size(a) - o(a)) / d(a);
        double s = -1.0;
        if (t1 > t2) {
          std::swap(t1, t2);
          s = 1.0;
        }
        if (t1 > t_enter) {
          t_enter = t1;
          axis = a;
          sign = s;
        }
        t_exit = std::min(t_exit, t2);
      }
      if (t_exit < t_enter || t_enter <= kEps || axis < 0) return std::nullopt;
      best = t_enter;
      normal = Vec3::Zero();
      normal(axis) = sign;
      break;
    }
    case Shape::Cylinder: {
      const double rad = size.x();
      const double h = size.z();
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a > 1e-15) {
        const double b = o.x() * d.x() + o.y() * d.y();
        const double c = o.x() * o.x() + o.y() * o.y() - rad * rad;
        const double disc = b * b - a * c;
        if (disc >= 0.0) {
          const double t = (-b - std::sqrt(disc)) / a;
          const double z = o.z() + t * d.z();
          if (t > kEps && std::abs(z) <= h) {
            best = t;
            const Vec3 p = o + t * d;
            normal = Vec3(p.x(), p.y(), 0.0) / rad;
          }
        }
      }
      if (std::abs(d.z()) > 1e-15) {
        for (double cap : {h, -h}) {
          const double t = (cap - o.z()) / d.z();
          if (t <= kEps || t >= best) continue;
          const Vec3 p = o + t * d;
          if (p.x() * p.x() + p.y() * p.y() <= rad * rad) {
            best = t;
            normal = Vec3(0.0, 0.0, cap > 0 ? 1.0 : -1.0);
          }
        }
      }
      break;
    }
  }
  if (!std::isfinite(best)) return std::nullopt;
  return std::make_pair(best, Vec3(r * normal));
}

int Scene::target_index() const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].is_target) return static_cast<int>(i);
  }
  return -1;
}

void EnvConfig::validate() const {
  intrinsics.validate();
  if (horizon <= 0) throw InvalidArgument("horizon must be positive");
  if (distractors < 0 || distractors > 3) throw InvalidArgument("distractors must be in [0, 3]");
  if (!(grasp_radius > 0.0) || !(lift_height > 0.0)) throw InvalidArgument("bad grasp config");
  if (!(bounds.rotation > 0.0) || !(bounds.translation > 0.0)) {
    throw InvalidArgument("action bounds must be positive");
  }
  if (start_height_max < start_height_min) throw InvalidArgument("bad start height range");
}

Rotation top_down() { return axis_angle(Vec3::UnitX(), std::numbers::pi); }

EnvState reset(const EnvConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto rng = make_rng(seed, "env.reset");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  EnvState state;
  state.scene.table_height = cfg.table_height;
  state.scene.seed = seed;

  const std::array<Color, 3> distractor_palette = {Color(0.15, 0.55, 0.2), Color(0.15, 0.3, 0.75),
                                                   Color(0.85, 0.8, 0.15)};
  const int count = 1 + cfg.distractors;
  for (int i = 0; i < count; ++i) {
    const bool target = i == 0;
    SceneObject obj;
    obj.is_target = target;
    obj.shape = static_cast<Shape>(std::min(2, static_cast<int>(unit(rng) * 3.0)));
    switch (obj.shape) {
      case Shape::Sphere:
        obj.size = Vec3::Constant(uniform(0.02, 0.03));
        break;
      case Shape::Box:
        obj.size = Vec3(uniform(0.015, 0.025), uniform(0.015, 0.025), uniform(0.015, 0.03));
        break;
      case Shape::Cylinder: {
        const double r = uniform(0.015, 0.025);
        obj.size = Vec3(r, r, uniform(0.02, 0.035));
        break;
      }
    }
    obj.color = target ? Color(uniform(0.75, 0.9), uniform(0.1, 0.2), uniform(0.1, 0.2))
                       : distractor_palette[static_cast<std::size_t>(i - 1) % 3];
    const double yaw = uniform(-std::numbers::pi, std::numbers::pi);
    obj.pose.rotation = axis_angle(Vec3::UnitZ(), yaw);

    const double region = target ? cfg.target_region : cfg.distractor_region;
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      const Vec3 p(uniform(-region, region), uniform(-region, region),
                   cfg.table_height + rest_height(obj.shape, obj.size));
      placed = std::all_of(state.scene.objects.begin(), state.scene.objects.end(),
                           [&](const SceneObject& other) {
                             const double gap = (p.head<2>() - other.pose.translation.head<2>()).norm();
                             return gap > obj.bounding_radius_xy() + other.bounding_radius_xy() + 0.01;
                           });
      if (placed) obj.pose.translation = p;
    }
    if (!placed) throw PlacementFailure("could not place object " + std::to_string(i));
    state.scene.objects.push_back(obj);
  }

  const auto sites = state.scene.objects.front().grasp_sites();
  const Vec3 site = sites[static_cast<std::size_t>(unit(rng) * sites.size()) % sites.size()];
  const Vec3 start = site + Vec3(uniform(-cfg.start_offset_xy, cfg.start_offset_xy),
                                 uniform(-cfg.start_offset_xy, cfg.start_offset_xy),
                                 uniform(cfg.start_height_min, cfg.start_height_max));
  const EulerAngles tilt{uniform(-cfg.start_tilt, cfg.start_tilt),
                         uniform(-cfg.start_tilt, cfg.start_tilt),
                         uniform(-cfg.start_yaw, cfg.start_yaw)};
  state.ee_pose = {top_down() * from_euler(tilt), start};
  return state;
}

EnvAction clamp_action(const EnvAction& a, const ActionBounds& b, bool* clamped) {
  const EulerAngles e = to_euler(a.delta.rotation);
  auto clip = [&](double v, double lim) {
    const double c = std::clamp(v, -lim, lim);
    if (c != v && clamped) *clamped = true;
    return c;
  };
  EnvAction out = a;
  const EulerAngles ce{clip(e.phi, b.rotation), clip(e.theta, b.rotation), clip(e.psi, b.rotation)};
  if (ce.phi != e.phi || ce.theta != e.theta || ce.psi != e.psi) out.delta.rotation = from_euler(ce);
  for (int i = 0; i < 3; ++i) out.delta.translation(i) = clip(a.delta.translation(i), b.translation);
  return out;
}

StepResult step(const EnvConfig& cfg, const EnvState& state, const EnvAction& action) {
  StepResult res;
  const EnvAction act = clamp_action(action, cfg.bounds, &res.clamped);
  EnvState s = state;
  s.step_count += 1;
  s.ee_pose = compose(s.ee_pose, act.delta);
  const double floor_z = s.scene.table_height + cfg.min_fingertip_height;
  if (s.ee_pose.translation.z() < floor_z) s.ee_pose.translation.z() = floor_z;

  if (act.gripper == GripperCommand::Close && s.gripper_open) {
    s.gripper_open = false;
    double best = cfg.grasp_radius;
    for (std::size_t i = 0; i < s.scene.objects.size(); ++i) {
      for (const auto& site : s.scene.objects[i].grasp_sites()) {
        const double d = (site - s.ee_pose.translation).norm();
        if (d <= best) {
          best = d;
          s.grasped = static_cast<int>(i);
        }
      }
    }
    if (s.grasped) s.grasp_offset = compose(inverse(s.ee_pose), s.scene.objects[*s.grasped].pose);
  } else if (act.gripper == GripperCommand::Open && !s.gripper_open) {
    s.gripper_open = true;
    if (s.grasped) {
      SceneObject& obj = s.scene.objects[*s.grasped];
      obj.pose.translation.z() += s.scene.table_height - obj.lowest_point();
      s.grasped.reset();
    }
  }
  if (s.grasped) s.scene.objects[*s.grasped].pose = compose(s.ee_pose, s.grasp_offset);
  s.collision = s.collision || any_collision(s);
  res.observation = observe(cfg, s);
  res.state = std::move(s);
  return res;
}

PixelMask gripper_mask(const CameraIntrinsics& intr) {
  PixelMask mask(intr.width, intr.height);
  const double sx = intr.width / 64.0;
  const double sy = intr.height / 64.0;
  auto fill = [&](double x0, double x1, double y0, double y1) {
    for (int y = static_cast<int>(y0 * sy); y < static_cast<int>(y1 * sy); ++y) {
      for (int x = static_cast<int>(x0 * sx); x < static_cast<int>(x1 * sx); ++x) mask.set(x, y, true);
    }
  };
  fill(17, 24, 44, 64);  // left finger
  fill(40, 47, 44, 64);  // right finger
  fill(17, 47, 60, 64);  // palm edge
  return mask;
}

Image render_scene(const Scene& scene, const Transform& w_T_c, const CameraIntrinsics& intr,
                   std::vector<int>* ids) {
  Image img(intr.width, intr.height);
  if (ids) ids->assign(static_cast<std::size_t>(intr.width) * intr.height, -2);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Ray ray = pixel_ray(w_T_c, intr, u, v);
      double best = std::numeric_limits<double>::infinity();
      Color color = kSky;
      int id = -2;
      if (ray.direction.z() < -1e-12) {
        const double t = (scene.table_height - ray.origin.z()) / ray.direction.z();
        if (t > 0.0) {
          best = t;
          color = table_color(ray.origin + t * ray.direction) * shade(Vec3::UnitZ());
          id = -1;
        }
      }
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const auto hit = scene.objects[i].intersect(ray.origin, ray.direction);
        if (hit && hit->first < best) {
          best = hit->first;
          color = scene.objects[i].color * shade(hit->second);
          id = static_cast<int>(i);
        }
      }
      img.set(u, v, color.cwiseMin(1.0));
      if (ids) (*ids)[static_cast<std::size_t>(v) * intr.width + u] = id;
    }
  }
  return img;
}

Image render_camera(const EnvConfig& cfg, const EnvState& state) {
  Image img = render_scene(state.scene, camera_from_ee(state.ee_pose, cfg.e_T_c), cfg.intrinsics);
  const PixelMask mask = gripper_mask(cfg.intrinsics);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (mask.at(x, y)) img.set(x, y, kFinger * (0.9 + 0.1 * y / img.height()));
    }
  }
  return img;
}

Observation observe(const EnvConfig& cfg, const EnvState& state) {
  return {render_camera(cfg, state), state.ee_pose, state.gripper_open};
}

double distance_to_target(const EnvState& state) {
  const int t = state.scene.target_index();
  if (t < 0) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& site : state.scene.objects[static_cast<std::size_t>(t)].grasp_sites()) {
    best = std::min(best, (site - state.ee_pose.translation).norm());
  }
  return best;
}

EnvAction scripted_expert(const EnvConfig& cfg, const EnvState& state) {
  const Transform& pose = state.ee_pose;
  EnvAction act;
  const Rotation rot_err = pose.rotation.transpose() * top_down();
  const Rotation rot_step = scaled_rotation(rot_err, cfg.expert_rot_gain, cfg.expert_max_rot);

  if (!state.gripper_open && state.grasped) {
    act.gripper = GripperCommand::Close;
    act.delta = {rot_step, pose.rotation.transpose() * Vec3(0.0, 0.0, cfg.lift_step)};
    return act;
  }

  const int t = state.scene.target_index();
  Vec3 site = pose.translation;
  double dist = std::numeric_limits<double>::infinity();
  for (const auto& s : state.scene.objects[static_cast<std::size_t>(t)].grasp_sites()) {
    const double d = (s - pose.translation).norm();
    if (d < dist) {
      dist = d;
      site = s;
    }
  }
  const Vec3 diff = site - pose.translation;
  const double scale = dist > 0.0 ? std::min(cfg.expert_gain, cfg.expert_max_step / dist) : 0.0;
  act.delta = {rot_step, pose.rotation.transpose() * (scale * diff)};
  // A closed, empty gripper reopens; otherwise close once inside half the grasp radius.
  act.gripper = (dist < cfg.grasp_radius / 2.0 && state.gripper_open) ? GripperCommand::Close
                                                                      : GripperCommand::Open;
  return act;
}

bool success(const EnvState& state, double lift_height) {
  const int t = state.scene.target_index();
  if (t < 0 || !state.grasped || *state.grasped != t) return false;
  return state.scene.objects[static_cast<std::size_t>(t)].lowest_point() >=
         state.scene.table_height + lift_height;
}

}  // namespace spartn

#pragma once

#include "spartn/camera.hpp"
#include "spartn/image.hpp"
#include "spartn/se3.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace spartn {

struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const;
  bool empty() const { return (hi.array() <= lo.array()).any(); }
  Aabb intersect(const Aabb& other) const;
  // Parametric entry/exit distances along a ray, if it hits the box.
  std::optional<std::pair<double, double>> clip(const Vec3& origin, const Vec3& dir) const;
};

// near/far are distances in the field's grid frame (meters for world-trained fields).
struct RenderConfig {
  int samples_per_ray = 64;
  double near = 0.02;
  double far = 1.0;
  bool jitter = false;  // stratified jitter; off gives midpoint samples

  void validate() const;
};

// Similarity from a reference frame (where poses live) into the grid frame:
// q = grid_from_ref * (p / ref_scale). Identity for world-posed training; for
// SfM-posed training it undoes the SfM scale and frame so the grid keeps metric
// units and an axis-aligned workspace box.
struct GridFrame {
  Transform grid_from_ref;
  double ref_scale = 1.0;

  Vec3 point_to_grid(const Vec3& p) const { return grid_from_ref.apply(p / ref_scale); }
  Vec3 direction_to_grid(const Vec3& d) const { return grid_from_ref.rotation * d; }
  Transform pose_to_grid(const Transform& ref_T_c) const;
};

// Dense grid of density/color nodes with trilinear interpolation. Nodes sit on
// a resolution^3 lattice spanning `bounds` (grid frame); density is zero
// outside the box.
class RadianceField {
 public:
  RadianceField() = default;
  RadianceField(int resolution, const Aabb& bounds, const Color& background,
                const GridFrame& frame = {});

  const GridFrame& frame() const { return frame_; }
  int resolution() const { return resolution_; }
  const Aabb& bounds() const { return bounds_; }
  const Color& background() const { return background_; }
  void set_background(const Color& c) { background_ = c; }
  std::size_t node_count() const { return density_.size(); }
  Vec3 spacing() const;

  double density(std::size_t node) const { return density_[node]; }
  Color color(std::size_t node) const {
    return {color_[3 * node], color_[3 * node + 1], color_[3 * node + 2]};
  }
  void set_density(std::size_t node, double sigma) { density_[node] = sigma; }
  void set_color(std::size_t node, const Color& c);
  std::size_t node_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * resolution_ + j) * resolution_ + i;
  }
  Vec3 node_position(int i, int j, int k) const;

  void fill(double sigma, const Color& c);
  double mean_density() const;

  // Trilinear stencil: eight node indices and weights; empty outside bounds.
  struct Stencil {
    std::array<std::uint32_t, 8> nodes{};
    std::array<double, 8> weights{};
    bool inside = false;
  };
  Stencil stencil(const Vec3& p) const;
  double sample_density(const Stencil& s) const;
  Color sample_color(const Stencil& s) const;

  // Little-endian float32 checkpoint; layout documented in README.
  void save(const std::filesystem::path& path) const;
  static RadianceField load(const std::filesystem::path& path);

 private:
  friend class FieldTrainer;
  int resolution_ = 0;
  Aabb bounds_;
  GridFrame frame_;
  Color background_ = Color::Zero();
  std::vector<double> density_;  // 1/m, >= 0
  std::vector<double> color_;    // rgb per node, [0, 1]
};

// Per-sample record of one rendered ray, kept for gradients and diagnostics.
struct RayTrace {
  Color color = Color::Zero();
  double final_transmittance = 1.0;
  double delta = 0.0;
  std::vector<double> weights;  // T_i * (1 - exp(-sigma_i * delta))
  std::vector<double> sigmas;
  std::vector<Color> colors;
  std::vector<RadianceField::Stencil> stencils;
};

// Emission-absorption quadrature along a unit-direction ray given in the
// field's reference frame. `rng` supplies stratified jitter when cfg.jitter is set.
RayTrace trace_ray(const RadianceField& field, const Vec3& origin, const Vec3& direction,
                   const RenderConfig& cfg, std::mt19937_64* rng = nullptr);
Color render_ray(const RadianceField& field, const Vec3& origin, const Vec3& direction,
                 const RenderConfig& cfg, std::mt19937_64* rng = nullptr);

Image render(const RadianceField& field, const Transform& pose, const CameraIntrinsics& intr,
             const RenderConfig& cfg, std::uint64_t seed = 0);

struct PosedImage {
  Image image;
  Transform pose;  // camera-to-reference
  CameraIntrinsics intrinsics;
};

struct FieldTrainConfig {
  int resolution = 128;
  int iters = 3500;
  int rays_per_step = 4096;
  double lr_density = 0.1;  // optical depth per node spacing, per step
  double lr_color = 0.05;
  double lr_final_fraction = 0.1;  // exponential decay of both rates to this fraction
  double rms_decay = 0.99;
  RenderConfig render{64, 0.02, 1.0, true};
  Aabb workspace{Vec3(-0.5, -0.5, -0.03), Vec3(0.5, 0.5, 0.15)};  // grid frame
  GridFrame frame;  // how view poses map into the grid frame
  std::uint64_t seed = 0;
};

struct FieldTrainResult {
  RadianceField field;
  std::vector<double> losses;  // batch photometric MSE per iteration
};

// Box enclosing every camera frustum out to cfg.render.far, clipped to the workspace.
Aabb frusta_bounds(const std::vector<PosedImage>& views, const FieldTrainConfig& cfg);

FieldTrainResult train_field(const std::vector<PosedImage>& views, const PixelMask& mask,
                             const FieldTrainConfig& cfg);

// Gradient of the mean photometric loss over the given rays w.r.t. every node's
// density and color, with deterministic midpoint sampling. Exposed for
// finite-difference verification.
struct FieldGradient {
  std::vector<double> density;
  std::vector<double> color;
  Color background = Color::Zero();
  double loss = 0.0;
};
struct RaySample {
  Vec3 origin;
  Vec3 direction;
  Color target;
};
FieldGradient photometric_gradient(const RadianceField& field, const std::vector<RaySample>& rays,
                                   const RenderConfig& cfg);

}  // namespace spartn

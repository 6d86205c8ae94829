#include "spartn/radiance_field.hpp"

#include "spartn/errors.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace spartn {
namespace {

constexpr char kFieldMagic[4] = {'S', 'P', 'R', 'F'};
constexpr std::uint32_t kFieldVersion = 1;

void trace_into(const RadianceField& field, const Vec3& ref_origin, const Vec3& ref_direction,
                const RenderConfig& cfg, std::mt19937_64* rng, RayTrace& out) {
  assert(std::abs(ref_direction.norm() - 1.0) < 1e-9);
  const Vec3 origin = field.frame().point_to_grid(ref_origin);
  const Vec3 direction = field.frame().direction_to_grid(ref_direction);
  out.weights.clear();
  out.sigmas.clear();
  out.colors.clear();
  out.stencils.clear();
  out.color = field.background();
  out.final_transmittance = 1.0;
  out.delta = 0.0;

  const auto hit = field.bounds().clip(origin, direction);
  if (!hit) return;
  const double t0 = std::max(cfg.near, hit->first);
  const double t1 = std::min(cfg.far, hit->second);
  if (!(t1 > t0)) return;

  const int n = cfg.samples_per_ray;
  const double delta = (t1 - t0) / n;
  out.delta = delta;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double transmittance = 1.0;
  Color accum = Color::Zero();
  for (int i = 0; i < n; ++i) {
    const double offset = (cfg.jitter && rng != nullptr) ? unit(*rng) : 0.5;
    const Vec3 p = origin + (t0 + (i + offset) * delta) * direction;
    const auto s = field.stencil(p);
    const double sigma = s.inside ? field.sample_density(s) : 0.0;
    const Color c = s.inside ? field.sample_color(s) : Color::Zero();
    const double alpha = 1.0 - std::exp(-sigma * delta);
    const double w = transmittance * alpha;
    accum += w * c;
    transmittance *= 1.0 - alpha;
    out.weights.push_back(w);
    out.sigmas.push_back(sigma);
    out.colors.push_back(c);
    out.stencils.push_back(s);
  }
  out.final_transmittance = transmittance;
  out.color = accum + transmittance * field.background();
}

// Accumulates d(loss)/d(params) for one ray with d(loss)/d(color) = `dl_dc`.
template <typename AddDensity, typename AddColor>
void backprop_ray(const RayTrace& tr, const Color& dl_dc, AddDensity&& add_density,
                  AddColor&& add_color) {
  const std::size_t n = tr.weights.size();
  Color prefix = Color::Zero();
  double transmittance = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = tr.weights[i];
    prefix += w * tr.colors[i];
    transmittance -= w;  // T_{i+1}
    // dC/dsigma_i = delta * (T_{i+1} c_i - (C - A_i)), A_i the prefix including i.
    const Color after = tr.color - prefix;
    const double dsigma = tr.delta * dl_dc.dot(transmittance * tr.colors[i] - after);
    const Color dcolor = w * dl_dc;
    const auto& s = tr.stencils[i];
    if (!s.inside) continue;
    for (int c = 0; c < 8; ++c) {
      const double sw = s.weights[c];
      if (sw == 0.0) continue;
      add_density(s.nodes[c], sw * dsigma);
      add_color(s.nodes[c], sw * dcolor);
    }
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated field checkpoint");
  return v;
}

}  // namespace

bool Aabb::contains(const Vec3& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

Aabb Aabb::intersect(const Aabb& other) const {
  return {lo.cwiseMax(other.lo), hi.cwiseMin(other.hi)};
}

std::optional<std::pair<double, double>> Aabb::clip(const Vec3& origin, const Vec3& dir) const {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir(a)) < 1e-15) {
      if (origin(a) < lo(a) || origin(a) > hi(a)) return std::nullopt;
      continue;
    }
    double ta = (lo(a) - origin(a)) / dir(a);
    double tb = (hi(a) - origin(a)) / dir(a);
    if (ta > tb) std::swap(ta, tb);
    t_enter = std::max(t_enter, ta);
    t_exit = std::min(t_exit, tb);
  }
  if (t_exit <= std::max(t_enter, 0.0)) return std::nullopt;
  return std::make_pair(std::max(t_enter, 0.0), t_exit);
}

void RenderConfig::validate() const {
  if (samples_per_ray <= 0) throw InvalidArgument("samples_per_ray must be positive");
  if (!(near > 0.0) || !(far > near)) throw InvalidArgument("need 0 < near < far");
}

Transform GridFrame::pose_to_grid(const Transform& ref_T_c) const {
  return compose(grid_from_ref, {ref_T_c.rotation, ref_T_c.translation / ref_scale});
}

RadianceField::RadianceField(int resolution, const Aabb& bounds, const Color& background,
                             const GridFrame& frame)
    : resolution_(resolution), bounds_(bounds), frame_(frame), background_(background) {
  if (resolution < 2) throw InvalidArgument("field resolution must be at least 2");
  if (!(frame.ref_scale > 0.0)) throw InvalidArgument("grid frame scale must be positive");
  if (bounds.empty()) throw InvalidArgument("field bounds are empty");
  const std::size_t n = static_cast<std::size_t>(resolution) * resolution * resolution;
  density_.assign(n, 0.0);
  color_.assign(3 * n, 0.5);
}

Vec3 RadianceField::spacing() const { return (bounds_.hi - bounds_.lo) / (resolution_ - 1); }

void RadianceField::set_color(std::size_t node, const Color& c) {
  color_[3 * node] = c.x();
  color_[3 * node + 1] = c.y();
  color_[3 * node + 2] = c.z();
}

Vec3 RadianceField::node_position(int i, int j, int k) const {
  return bounds_.lo + spacing().cwiseProduct(Vec3(i, j, k));
}

void RadianceField::fill(double sigma, const Color& c) {
  std::fill(density_.begin(), density_.end(), sigma);
  for (std::size_t n = 0; n < density_.size(); ++n) set_color(n, c);
}

double RadianceField::mean_density() const {
  double sum = 0.0;
  for (double d : density_) sum += d;
  return density_.empty() ? 0.0 : sum / static_cast<double>(density_.size());
}

RadianceField::Stencil RadianceField::stencil(const Vec3& p) const {
  Stencil s;
  if (!bounds_.contains(p)) return s;
  s.inside = true;
  const Vec3 g = (p - bounds_.lo).cwiseQuotient(spacing());
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    base[a] = std::clamp(static_cast<int>(std::floor(g(a))), 0, resolution_ - 2);
    frac[a] = std::clamp(g(a) - base[a], 0.0, 1.0);
  }
  int c = 0;
  for (int dk = 0; dk < 2; ++dk) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int di = 0; di < 2; ++di, ++c) {
        s.nodes[c] = static_cast<std::uint32_t>(node_index(base[0] + di, base[1] + dj, base[2] + dk));
        s.weights[c] = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                       (dk ? frac[2] : 1.0 - frac[2]);
      }
    }
  }
  return s;
}

double RadianceField::sample_density(const Stencil& s) const {
  double v = 0.0;
  for (int c = 0; c < 8; ++c) v += s.weights[c] * density_[s.nodes[c]];
  return v;
}

Color RadianceField::sample_color(const Stencil& s) const {
  Color v = Color::Zero();
  for (int c = 0; c < 8; ++c) {
    const double* p = &color_[3 * static_cast<std::size_t>(s.nodes[c])];
    v += s.weights[c] * Color(p[0], p[1], p[2]);
  }
  return v;
}

void RadianceField::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kFieldMagic, 4);
  put<std::uint32_t>(out, kFieldVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(resolution_));
  for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(bounds_.lo(a)));
  for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(bounds_.hi(a)));
  for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(background_(a)));
  for (double v : frame_.grid_from_ref.to_row_major()) put<double>(out, v);
  put<double>(out, frame_.ref_scale);
  for (std::size_t n = 0; n < density_.size(); ++n) {
    put<float>(out, static_cast<float>(density_[n]));
    for (int c = 0; c < 3; ++c) put<float>(out, static_cast<float>(color_[3 * n + c]));
  }
}

RadianceField RadianceField::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFieldMagic, 4) != 0) throw FormatError("not a field checkpoint");
  if (get<std::uint32_t>(in) != kFieldVersion) throw FormatError("unsupported checkpoint version");
  const auto res = static_cast<int>(get<std::uint32_t>(in));
  Aabb box;
  for (int a = 0; a < 3; ++a) box.lo(a) = get<float>(in);
  for (int a = 0; a < 3; ++a) box.hi(a) = get<float>(in);
  Color bg;
  for (int a = 0; a < 3; ++a) bg(a) = get<float>(in);
  GridFrame frame;
  std::array<double, 12> m{};
  for (double& v : m) v = get<double>(in);
  frame.grid_from_ref = Transform::from_row_major(m);
  frame.ref_scale = get<double>(in);
  RadianceField f(res, box, bg, frame);
  for (std::size_t n = 0; n < f.density_.size(); ++n) {
    f.density_[n] = get<float>(in);
    for (int c = 0; c < 3; ++c) f.color_[3 * n + c] = get<float>(in);
  }
  return f;
}

RayTrace trace_ray(const RadianceField& field, const Vec3& origin, const Vec3& direction,
                   const RenderConfig& cfg, std::mt19937_64* rng) {
  RayTrace tr;
  trace_into(field, origin, direction, cfg, rng, tr);
  return tr;
}

Color render_ray(const RadianceField& field, const Vec3& origin, const Vec3& direction,
                 const RenderConfig& cfg, std::mt19937_64* rng) {
  return trace_ray(field, origin, direction, cfg, rng).color;
}

Image render(const RadianceField& field, const Transform& pose, const CameraIntrinsics& intr,
             const RenderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Image img(intr.width, intr.height);
  std::mt19937_64 rng(seed);
  RayTrace scratch;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Ray ray = pixel_ray(pose, intr, u, v);
      trace_into(field, ray.origin, ray.direction, cfg, &rng, scratch);
      img.set(u, v, scratch.color.cwiseMax(0.0).cwiseMin(1.0));
    }
  }
  return img;
}

Aabb frusta_bounds(const std::vector<PosedImage>& views, const FieldTrainConfig& cfg) {
  Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& view : views) {
    const auto& in = view.intrinsics;
    const Transform pose = cfg.frame.pose_to_grid(view.pose);
    box.lo = box.lo.cwiseMin(pose.translation);
    box.hi = box.hi.cwiseMax(pose.translation);
    for (double u : {0.0, in.width - 1.0}) {
      for (double v : {0.0, in.height - 1.0}) {
        const Ray r = pixel_ray(pose, in, u, v);
        const Vec3 p = r.origin + cfg.render.far * r.direction;
        box.lo = box.lo.cwiseMin(p);
        box.hi = box.hi.cwiseMax(p);
      }
    }
  }
  const Aabb clipped = box.intersect(cfg.workspace);
  return clipped.empty() ? cfg.workspace : clipped;
}

FieldGradient photometric_gradient(const RadianceField& field, const std::vector<RaySample>& rays,
                                   const RenderConfig& cfg) {
  FieldGradient g;
  g.density.assign(field.node_count(), 0.0);
  g.color.assign(3 * field.node_count(), 0.0);
  RenderConfig det = cfg;
  det.jitter = false;
  const double scale = 1.0 / (3.0 * static_cast<double>(rays.size()));
  RayTrace tr;
  for (const auto& r : rays) {
    trace_into(field, r.origin, r.direction, det, nullptr, tr);
    const Color residual = tr.color - r.target;
    g.loss += residual.squaredNorm() * scale;
    const Color dl_dc = 2.0 * scale * residual;
    g.background += tr.final_transmittance * dl_dc;
    backprop_ray(
        tr, dl_dc, [&](std::uint32_t n, double d) { g.density[n] += d; },
        [&](std::uint32_t n, const Color& c) {
          for (int k = 0; k < 3; ++k) g.color[3 * n + k] += c(k);
        });
  }
  return g;
}

// Sparse RMS-normalized descent over the touched nodes of each batch.
class FieldTrainer {
 public:
  FieldTrainer(RadianceField& field, const FieldTrainConfig& cfg)
      : field_(field),
        cfg_(cfg),
        grad_(4 * field.node_count(), 0.0),
        acc_(4 * field.node_count(), 0.0),
        touches_(field.node_count(), 0),
        touched_(field.node_count(), 0) {}

  void add_density(std::uint32_t n, double d) {
    mark(n);
    grad_[4 * n] += d;
  }
  void add_color(std::uint32_t n, const Color& c) {
    mark(n);
    for (int k = 0; k < 3; ++k) grad_[4 * n + 1 + k] += c(k);
  }
  void add_background(const Color& c) { bg_grad_ += c; }

  void apply(int iter) {
    const double decay =
        std::pow(cfg_.lr_final_fraction, static_cast<double>(iter) / std::max(1, cfg_.iters - 1));
    const Vec3 sp = field_.spacing();
    const double node_len = (sp.x() + sp.y() + sp.z()) / 3.0;
    const double lr_sigma = cfg_.lr_density * decay / node_len;
    const double lr_color = cfg_.lr_color * decay;
    const double rho = cfg_.rms_decay;
    for (std::uint32_t n : list_) {
      const int count = ++touches_[n];
      const double correction = 1.0 - std::pow(rho, count);
      for (int k = 0; k < 4; ++k) {
        double& g = grad_[4 * n + k];
        double& a = acc_[4 * n + k];
        a = rho * a + (1.0 - rho) * g * g;
        const double step = g / (std::sqrt(a / correction) + 1e-12);
        if (k == 0) {
          field_.density_[n] = std::max(0.0, field_.density_[n] - lr_sigma * step);
        } else {
          double& c = field_.color_[3 * n + (k - 1)];
          c = std::clamp(c - lr_color * step, 0.0, 1.0);
        }
        g = 0.0;
      }
      touched_[n] = 0;
    }
    list_.clear();
    for (int k = 0; k < 3; ++k) {
      bg_acc_(k) = rho * bg_acc_(k) + (1.0 - rho) * bg_grad_(k) * bg_grad_(k);
    }
    ++bg_steps_;
    const double correction = 1.0 - std::pow(rho, bg_steps_);
    Color bg = field_.background();
    for (int k = 0; k < 3; ++k) {
      bg(k) -= lr_color * bg_grad_(k) / (std::sqrt(bg_acc_(k) / correction) + 1e-12);
    }
    field_.set_background(bg.cwiseMax(0.0).cwiseMin(1.0));
    bg_grad_.setZero();
  }

 private:
  void mark(std::uint32_t n) {
    if (!touched_[n]) {
      touched_[n] = 1;
      list_.push_back(n);
    }
  }

  RadianceField& field_;
  const FieldTrainConfig& cfg_;
  std::vector<double> grad_;
  std::vector<double> acc_;
  std::vector<int> touches_;
  std::vector<std::uint8_t> touched_;
  std::vector<std::uint32_t> list_;
  Color bg_grad_ = Color::Zero();
  Color bg_acc_ = Color::Zero();
  int bg_steps_ = 0;
};

FieldTrainResult train_field(const std::vector<PosedImage>& views, const PixelMask& mask,
                             const FieldTrainConfig& cfg) {
  if (views.size() < 3) {
    throw InsufficientViews("field training needs at least 3 views, got " +
                            std::to_string(views.size()));
  }
  if (cfg.iters < 0 || cfg.rays_per_step <= 0) throw InvalidArgument("bad field training schedule");
  cfg.render.validate();
  const CameraIntrinsics& intr = views.front().intrinsics;
  intr.validate();
  for (const auto& v : views) {
    if (!(v.intrinsics == intr)) throw IntrinsicsMismatch("all views must share intrinsics");
    if (v.image.width() != intr.width || v.image.height() != intr.height) {
      throw DimensionMismatch("view image does not match intrinsics");
    }
  }
  if (mask.width() != intr.width || mask.height() != intr.height) {
    throw DimensionMismatch("mask does not match view size");
  }

  // Unmasked pixel pool and the initial background estimate.
  struct PixelRef {
    std::uint32_t view;
    std::uint16_t x;
    std::uint16_t y;
  };
  std::vector<PixelRef> pool;
  Color border = Color::Zero();
  std::size_t border_n = 0;
  for (std::uint32_t vi = 0; vi < views.size(); ++vi) {
    for (int y = 0; y < intr.height; ++y) {
      for (int x = 0; x < intr.width; ++x) {
        if (mask.at(x, y)) continue;
        pool.push_back({vi, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y)});
        if (x == 0 || y == 0 || x == intr.width - 1 || y == intr.height - 1) {
          border += views[vi].image.at(x, y);
          ++border_n;
        }
      }
    }
  }
  if (pool.empty()) throw InsufficientViews("mask excludes every pixel");
  const Color background = border_n ? Color(border / static_cast<double>(border_n)) : Color(0.5, 0.5, 0.5);

  FieldTrainResult result;
  result.field = RadianceField(cfg.resolution, frusta_bounds(views, cfg), background, cfg.frame);
  RadianceField& field = result.field;
  FieldTrainer trainer(field, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  RayTrace tr;
  const double scale = 1.0 / (3.0 * cfg.rays_per_step);
  result.losses.reserve(static_cast<std::size_t>(cfg.iters));
  for (int iter = 0; iter < cfg.iters; ++iter) {
    double loss = 0.0;
    for (int r = 0; r < cfg.rays_per_step; ++r) {
      const PixelRef px = pool[pick(rng)];
      const auto& view = views[px.view];
      const Ray ray = pixel_ray(view.pose, intr, px.x, px.y);
      trace_into(field, ray.origin, ray.direction, cfg.render, &rng, tr);
      const Color residual = tr.color - view.image.at(px.x, px.y);
      loss += residual.squaredNorm() * scale;
      const Color dl_dc = 2.0 * scale * residual;
      trainer.add_background(tr.final_transmittance * dl_dc);
      backprop_ray(
          tr, dl_dc, [&](std::uint32_t n, double d) { trainer.add_density(n, d); },
          [&](std::uint32_t n, const Color& c) { trainer.add_color(n, c); });
    }
    result.losses.push_back(loss);
    trainer.apply(iter);
  }
  return result;
}

}  // namespace spartn

#include "spartn/pipeline.hpp"

#include "spartn/errors.hpp"
#include "spartn/homography.hpp"
#include "spartn/rng.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace fs = std::filesystem;

namespace spartn {
namespace {

std::string transition_image_name(std::size_t k, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "k%03zu_i%03zu.ppm", k, i);
  return buf;
}

StepWindow resolve_window(const Demonstration& demo, const AugmentConfig& cfg) {
  const StepWindow pre = pre_grasp_segment(demo);
  if (!cfg.window) return pre;
  const StepWindow w = *cfg.window;
  if (w.size() == 0) return w;
  if (w.begin < pre.begin || w.end > pre.end) {
    throw WindowOutOfRange("window [" + std::to_string(w.begin) + ", " + std::to_string(w.end) +
                           ") exceeds pre-grasp segment [0, " + std::to_string(pre.end) + ")");
  }
  return w;
}

nlohmann::json config_json(const DatasetJob& job) {
  const auto& a = job.augment;
  const auto& f = job.field.train;
  nlohmann::json j;
  j["method"] = job.method == AugmentMethod::Spartn ? "spartn" : "ha";
  j["n_aug"] = a.n_aug;
  j["alpha"] = a.noise.alpha;
  j["beta_t"] = a.noise.beta_t;
  j["window"] = a.window ? nlohmann::json::array({a.window->begin, a.window->end})
                         : nlohmann::json("pre-grasp");
  j["seed"] = a.seed;
  j["render"] = {{"samples_per_ray", a.render.samples_per_ray},
                 {"near", a.render.near},
                 {"far", a.render.far},
                 {"jitter", a.render.jitter}};
  if (job.method == AugmentMethod::Spartn) {
    j["field"] = {{"resolution", f.resolution},     {"iters", f.iters},
                  {"rays_per_step", f.rays_per_step}, {"lr_density", f.lr_density},
                  {"lr_color", f.lr_color},         {"samples_per_ray", f.render.samples_per_ray},
                  {"use_alignment", job.field.use_alignment}};
    if (job.sfm) {
      j["sfm"] = {{"scale_beta", job.sfm->scale_beta},
                  {"translation_sigma", job.sfm->translation_sigma},
                  {"rotation_sigma", job.sfm->rotation_sigma}};
    }
  }
  return j;
}

std::vector<TransitionRecord> to_records(const std::vector<AugmentedTransition>& ts) {
  std::vector<TransitionRecord> rows;
  rows.reserve(ts.size());
  for (const auto& t : ts) {
    rows.push_back({t.k, t.sample, t.w_T_e_tilde, t.action_tilde, t.gripper_closed,
                    transition_image_name(t.k, t.sample)});
  }
  return rows;
}

}  // namespace

void AugmentConfig::validate() const {
  if (n_aug < 1) throw InvalidArgument("n_aug must be at least 1");
  noise.validate();
  render.validate();
}

AugmentConfig simulation_preset() {
  AugmentConfig cfg;
  cfg.n_aug = 100;
  cfg.noise = {0.2, 0.003};
  cfg.window = StepWindow{5, 14};
  return cfg;
}

StepWindow pre_grasp_segment(const Demonstration& demo) {
  std::size_t end = 0;
  while (end < demo.steps.size() && !demo.steps[end].gripper_closed) ++end;
  return {0, end};
}

DemoField train_demo_field(const Demonstration& demo, const FieldOptions& opts) {
  const StepWindow seg = pre_grasp_segment(demo);
  if (seg.size() < 3) {
    throw InsufficientViews("pre-grasp segment has " + std::to_string(seg.size()) +
                            " frames; field training needs 3");
  }
  DemoField out;
  FieldTrainConfig train = opts.train;
  std::vector<PosedImage> views;
  if (opts.use_alignment) {
    if (!opts.sfm_poses || opts.sfm_poses->size() < seg.end) {
      throw InvalidArgument("alignment requires one SfM pose per pre-grasp frame");
    }
    std::vector<PosePair> pairs;
    for (std::size_t k = seg.begin; k < seg.end; ++k) {
      pairs.push_back({camera_from_ee(demo.steps[k].w_T_e, demo.e_T_c), (*opts.sfm_poses)[k]});
    }
    out.alignment = align(pairs);
    train.frame = {inverse(averaged_frame(*out.alignment)), out.alignment->scale_beta};
    for (std::size_t k = seg.begin; k < seg.end; ++k) {
      views.push_back({demo.steps[k].image, (*opts.sfm_poses)[k].as_transform(), demo.intrinsics});
    }
    const Transform v_T_w = averaged_frame(*out.alignment);
    for (const auto& p : opts.preroll) {
      views.push_back({p.image, scale_up(compose(v_T_w, p.pose), out.alignment->scale_beta).as_transform(),
                       p.intrinsics});
    }
  } else {
    for (std::size_t k = seg.begin; k < seg.end; ++k) {
      views.push_back({demo.steps[k].image, camera_from_ee(demo.steps[k].w_T_e, demo.e_T_c),
                       demo.intrinsics});
    }
    views.insert(views.end(), opts.preroll.begin(), opts.preroll.end());
  }
  auto trained = train_field(views, demo.mask, train);
  out.field = std::move(trained.field);
  out.losses = std::move(trained.losses);
  return out;
}

Image splice_gripper(const Image& rendered, const Image& original, const PixelMask& mask) {
  if (rendered.width() != original.width() || rendered.height() != original.height() ||
      mask.width() != rendered.width() || mask.height() != rendered.height()) {
    throw DimensionMismatch("splice inputs differ in size");
  }
  Image out = rendered;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (mask.at(x, y)) out.set(x, y, original.at(x, y));
    }
  }
  return out;
}

std::uint64_t transition_seed(std::uint64_t root, std::size_t demo_id, std::size_t k, std::size_t i) {
  return derive_seed(root, "augment", {demo_id, k, i});
}

std::vector<AugmentedTransition> augment_demo(const Demonstration& demo, const DemoField& field,
                                              const AugmentConfig& cfg, std::size_t demo_id) {
  cfg.validate();
  const StepWindow window = resolve_window(demo, cfg);
  std::vector<AugmentedTransition> out;
  out.reserve(window.size() * cfg.n_aug);
  for (std::size_t k = window.begin; k < window.end; ++k) {
    const DemoStep& step = demo.steps[k];
    for (std::size_t i = 0; i < cfg.n_aug; ++i) {
      const std::uint64_t seed = transition_seed(cfg.seed, demo_id, k, i);
      std::mt19937_64 rng(seed);
      const Transform eps = sample_perturbation(cfg.noise, rng);
      AugmentedTransition t;
      t.w_T_e_tilde = perturb_pose(step.w_T_e, eps);
      t.action_tilde = corrective_action(eps, step.action);
      t.gripper_closed = step.gripper_closed;
      t.demo_id = demo_id;
      t.k = k;
      t.sample = i;
      const Transform w_T_c = camera_from_ee(t.w_T_e_tilde, demo.e_T_c);
      const Transform render_pose =
          field.alignment ? world_to_sfm(w_T_c, *field.alignment, k).as_transform() : w_T_c;
      const Image rendered = render(field.field, render_pose, demo.intrinsics, cfg.render, seed);
      t.image = splice_gripper(rendered, step.image, demo.mask);
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<AugmentedTransition> augment_demo_homography(const Demonstration& demo,
                                                         const AugmentConfig& cfg,
                                                         std::size_t demo_id) {
  AugmentConfig rot_only = cfg;
  rot_only.noise.beta_t = 0.0;
  rot_only.validate();
  const StepWindow window = resolve_window(demo, rot_only);
  std::vector<AugmentedTransition> out;
  out.reserve(window.size() * cfg.n_aug);
  for (std::size_t k = window.begin; k < window.end; ++k) {
    const DemoStep& step = demo.steps[k];
    const Color fill = border_mean(step.image);
    for (std::size_t i = 0; i < cfg.n_aug; ++i) {
      std::mt19937_64 rng(transition_seed(cfg.seed, demo_id, k, i));
      const Transform eps = sample_perturbation(rot_only.noise, rng);
      AugmentedTransition t;
      t.w_T_e_tilde = perturb_pose(step.w_T_e, eps);
      t.action_tilde = corrective_action(eps, step.action);
      t.gripper_closed = step.gripper_closed;
      t.demo_id = demo_id;
      t.k = k;
      t.sample = i;
      const Homography h =
          rotation_homography(demo.intrinsics, camera_rotation_from_ee(eps.rotation, demo.e_T_c));
      t.image = splice_gripper(warp(step.image, h, fill), step.image, demo.mask);
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::string Manifest::hash() const { return sha256_hex(text); }

Manifest build_augmented_dataset(const std::vector<fs::path>& demo_dirs, const fs::path& out_dir,
                                 const DatasetJob& job) {
  job.augment.validate();
  fs::create_directories(out_dir);
  for (const auto& old : list_subdirs(out_dir, "aug_")) fs::remove_all(old);
  fs::remove_all(out_dir / "fields");
  if (job.method == AugmentMethod::Spartn) fs::create_directories(out_dir / "fields");

  std::vector<DemoSummary> summaries(demo_dirs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t d = next++; d < demo_dirs.size(); d = next++) {
      DemoSummary& s = summaries[d];
      s.demo = demo_dirs[d].filename().string();
      s.field_seed = derive_seed(job.augment.seed, "field", {d});
      const fs::path final_dir = out_dir / aug_dir_name(d);
      fs::path tmp_dir = final_dir;
      tmp_dir += ".partial";
      try {
        const Demonstration demo = read_demo(demo_dirs[d]);
        std::vector<AugmentedTransition> ts;
        if (job.method == AugmentMethod::Spartn) {
          FieldOptions opts = job.field;
          opts.train.seed = s.field_seed;
          if (job.sfm) {
            auto rng = make_rng(job.augment.seed, "sfm", {d});
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            const Transform v_T_w{from_euler({u(rng) * 3.0, u(rng) * 1.5, u(rng) * 3.0}),
                                  Vec3(u(rng), u(rng), u(rng))};
            std::vector<Transform> cams;
            for (const auto& st : demo.steps) cams.push_back(camera_from_ee(st.w_T_e, demo.e_T_c));
            opts.use_alignment = true;
            opts.sfm_poses = synthesize_sfm(cams, v_T_w, job.sfm->scale_beta, job.sfm->translation_sigma,
                                            job.sfm->rotation_sigma, rng);
          }
          const DemoField field = train_demo_field(demo, opts);
          char name[32];
          std::snprintf(name, sizeof(name), "field_%04zu.bin", d);
          field.field.save(out_dir / "fields" / name);
          ts = augment_demo(demo, field, job.augment, d);

          const StepWindow w = resolve_window(demo, job.augment);
          std::vector<bool> valid(demo.mask.pixel_count());
          for (int y = 0; y < demo.mask.height(); ++y) {
            for (int x = 0; x < demo.mask.width(); ++x) {
              valid[static_cast<std::size_t>(y) * demo.mask.width() + x] = !demo.mask.at(x, y);
            }
          }
          double sum = 0.0;
          for (std::size_t k = w.begin; k < w.end; ++k) {
            const Transform w_T_c = camera_from_ee(demo.steps[k].w_T_e, demo.e_T_c);
            const Transform pose =
                field.alignment ? world_to_sfm(w_T_c, *field.alignment, k).as_transform() : w_T_c;
            const Image img = render(field.field, pose, demo.intrinsics, job.augment.render);
            sum += std::min(psnr_masked(img, demo.steps[k].image, valid), 99.0);
          }
          if (w.size() > 0) s.train_psnr = sum / static_cast<double>(w.size());
        } else {
          ts = augment_demo_homography(demo, job.augment, d);
        }
        fs::remove_all(tmp_dir);
        fs::create_directories(tmp_dir);
        for (const auto& t : ts) write_ppm(tmp_dir / transition_image_name(t.k, t.sample), t.image);
        write_transitions(tmp_dir / "frames", to_records(ts));
        fs::rename(tmp_dir, final_dir);
        s.count = ts.size();
      } catch (const std::exception& e) {
        fs::remove_all(tmp_dir);
        s.ok = false;
        s.error = e.what();
        s.count = 0;
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(job.parallelism, demo_dirs.size()));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  Manifest m;
  m.method = job.method == AugmentMethod::Spartn ? "spartn" : "ha";
  const nlohmann::json cfg = config_json(job);
  m.config_hash = sha256_hex(cfg.dump());
  std::string content;
  for (std::size_t d = 0; d < demo_dirs.size(); ++d) {
    const fs::path dir = out_dir / aug_dir_name(d);
    content += fs::exists(dir) ? hash_directory(dir) : std::string("missing");
  }
  if (fs::exists(out_dir / "fields")) content += hash_directory(out_dir / "fields");
  m.content_hash = sha256_hex(content);
  m.demos = summaries;

  nlohmann::json j;
  j["config"] = cfg;
  j["config_hash"] = m.config_hash;
  j["content_hash"] = m.content_hash;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : summaries) {
    m.total += s.count;
    nlohmann::json r = {{"demo", s.demo}, {"count", s.count}, {"status", s.ok ? "ok" : "error"},
                        {"field_seed", s.field_seed}};
    if (!s.ok) r["error"] = s.error;
    if (s.train_psnr) r["train_psnr"] = *s.train_psnr;
    rows.push_back(r);
  }
  j["demos"] = rows;
  j["total"] = m.total;
  m.text = j.dump(2) + "\n";
  atomic_write_text(out_dir / "manifest", m.text);
  return m;
}

}  // namespace spartn

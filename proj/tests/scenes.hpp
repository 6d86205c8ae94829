// Shared fixtures built from the simulator.
#pragma once

#include "spartn/collect.hpp"
#include "spartn/grasp_sim.hpp"
#include "spartn/pipeline.hpp"
#include "spartn/radiance_field.hpp"

namespace fixture {

inline constexpr std::uint64_t kSceneSeed = 3;

inline const spartn::Demonstration& standard_demo() {
  static const spartn::Demonstration demo = spartn::collect_demo(spartn::EnvConfig{}, kSceneSeed);
  return demo;
}

// Field settings used for the desk experiments.
inline spartn::FieldTrainConfig desk_field() {
  spartn::FieldTrainConfig c;
  c.resolution = 64;
  c.iters = 300;
  c.rays_per_step = 1024;
  c.render.samples_per_ray = 48;
  return c;
}

inline spartn::RenderConfig eval_render(const spartn::FieldTrainConfig& c) {
  spartn::RenderConfig r = c.render;
  r.jitter = false;
  return r;
}

struct Split {
  std::vector<spartn::PosedImage> train;
  std::vector<std::size_t> held;
};

// Every fourth pre-grasp frame (offset 2) is held out.
inline Split split_pre_grasp(const spartn::Demonstration& demo) {
  Split s;
  const auto seg = spartn::pre_grasp_segment(demo);
  for (std::size_t k = seg.begin; k < seg.end; ++k) {
    if (k % 4 == 2) {
      s.held.push_back(k);
    } else {
      s.train.push_back({demo.steps[k].image, spartn::camera_from_ee(demo.steps[k].w_T_e, demo.e_T_c),
                         demo.intrinsics});
    }
  }
  return s;
}

inline spartn::Scene scene_of(const spartn::Demonstration& demo) {
  return spartn::reset(spartn::EnvConfig{}, demo.scene_seed).scene;
}

}  // namespace fixture

#include "spartn/collect.hpp"

#include "spartn/errors.hpp"
#include "spartn/rng.hpp"

namespace spartn {

Demonstration collect_demo(const EnvConfig& cfg, std::uint64_t seed,
                           const std::optional<DartNoise>& dart) {
  Demonstration demo;
  demo.intrinsics = cfg.intrinsics;
  demo.e_T_c = cfg.e_T_c;
  demo.mask = gripper_mask(cfg.intrinsics);
  demo.scene_seed = seed;

  auto noise_rng = make_rng(seed, "dart.noise");
  EnvState state = reset(cfg, seed);
  Observation obs = observe(cfg, state);
  for (int k = 0; k < cfg.horizon; ++k) {
    const EnvAction act = scripted_expert(cfg, state);
    demo.steps.push_back({obs.image, state.ee_pose, act.delta, act.gripper == GripperCommand::Close});
    StepResult res = step(cfg, state, act);
    if (dart && res.state.gripper_open &&
        (!dart->window || dart->window->contains(static_cast<std::size_t>(k)))) {
      const Transform eps = sample_perturbation(dart->noise, noise_rng);
      res.state.ee_pose = perturb_pose(res.state.ee_pose, eps);
      res.observation = observe(cfg, res.state);
    }
    state = std::move(res.state);
    obs = std::move(res.observation);
    if (success(state, cfg.lift_height)) {
      demo.validate();
      return demo;
    }
  }
  throw EpisodeFailed("expert did not lift the target within the horizon (seed " +
                      std::to_string(seed) + ")");
}

}  // namespace spartn

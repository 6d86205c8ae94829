#pragma once

#include "spartn/dataset.hpp"
#include "spartn/grasp_sim.hpp"
#include "spartn/se3.hpp"

#include <cstdint>
#include <optional>

namespace spartn {

// State-noise injection while the expert demonstrates. Noise is applied to the
// executed pose at open-gripper steps inside `window` (all such steps if unset).
struct DartNoise {
  NoiseParams noise;
  std::optional<StepWindow> window;
};

// Rolls out the scripted expert until success or the horizon. Each record holds
// the observation before acting, the measured pose, and the expert's relative
// action from that pose. With DART noise the executed pose is additionally
// post-multiplied by a sampled perturbation, so labels carry corrections.
// Throws EpisodeFailed if the expert does not succeed.
Demonstration collect_demo(const EnvConfig& cfg, std::uint64_t seed,
                           const std::optional<DartNoise>& dart = std::nullopt);

}  // namespace spartn

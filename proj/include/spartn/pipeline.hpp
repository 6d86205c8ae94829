#pragma once

#include "spartn/dataset.hpp"
#include "spartn/frame_alignment.hpp"
#include "spartn/radiance_field.hpp"
#include "spartn/se3.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spartn {

struct AugmentConfig {
  std::size_t n_aug = 1;
  NoiseParams noise{0.2, 0.003};
  std::optional<StepWindow> window;  // unset: the pre-grasp segment
  std::uint64_t seed = 0;
  RenderConfig render{64, 0.02, 1.0, false};

  void validate() const;
};

// 100 samples per step over steps 5..13 at alpha = 0.2 rad, beta_t = 3 mm.
AugmentConfig simulation_preset();

struct AugmentedTransition {
  Image image;
  Transform w_T_e_tilde;
  Transform action_tilde;
  bool gripper_closed = false;
  std::size_t demo_id = 0;
  std::size_t k = 0;
  std::size_t sample = 0;
};

// [0, first close); empty if the first step closes, everything if none does.
StepWindow pre_grasp_segment(const Demonstration& demo);

struct FieldOptions {
  FieldTrainConfig train;
  bool use_alignment = false;
  // SfM-estimated camera poses ^VH^C_k for the pre-grasp frames; required with use_alignment.
  std::optional<std::vector<ScaledTransform>> sfm_poses;
  // Extra world-posed views added to the training set only.
  std::vector<PosedImage> preroll;
};

struct DemoField {
  RadianceField field;
  std::optional<AlignmentSolution> alignment;
  std::vector<double> losses;
};

DemoField train_demo_field(const Demonstration& demo, const FieldOptions& opts);

// ~M * rendered + M * original, pixelwise.
Image splice_gripper(const Image& rendered, const Image& original, const PixelMask& mask);

// Corrective transitions for every step of the window and every sample index.
std::vector<AugmentedTransition> augment_demo(const Demonstration& demo, const DemoField& field,
                                              const AugmentConfig& cfg, std::size_t demo_id = 0);

// Homography baseline: rotation-only perturbations warped from the original image.
std::vector<AugmentedTransition> augment_demo_homography(const Demonstration& demo,
                                                         const AugmentConfig& cfg,
                                                         std::size_t demo_id = 0);

// Seed for sample i at step k of demo `demo_id`; independent of scheduling.
std::uint64_t transition_seed(std::uint64_t root, std::size_t demo_id, std::size_t k, std::size_t i);

enum class AugmentMethod { Spartn, Homography };

// Stand-in for running structure-from-motion on each demo: camera poses are
// re-expressed in a random per-demo frame at scale `scale_beta`, plus noise.
struct SfmSimulation {
  double scale_beta = 2.0;
  double translation_sigma = 0.0;
  double rotation_sigma = 0.0;
};

struct DatasetJob {
  AugmentMethod method = AugmentMethod::Spartn;
  AugmentConfig augment;
  FieldOptions field;  // train.seed is re-derived per demo from augment.seed
  std::optional<SfmSimulation> sfm;  // SPARTN only; fields are then trained in SfM coordinates
  unsigned parallelism = 1;
};

struct DemoSummary {
  std::string demo;
  std::size_t count = 0;
  bool ok = true;
  std::string error;
  std::uint64_t field_seed = 0;
  std::optional<double> train_psnr;  // field render vs. original at window poses, unmasked pixels
};

struct Manifest {
  std::string method;
  std::string config_hash;
  std::string content_hash;
  std::vector<DemoSummary> demos;
  std::size_t total = 0;
  std::string text;  // serialized manifest as written to disk

  std::string hash() const;
};

// Processes every demo directory independently (up to job.parallelism at a
// time) and writes aug_####/{frames, images}, fields/field_####.bin, and a
// manifest into out_dir.
Manifest build_augmented_dataset(const std::vector<std::filesystem::path>& demo_dirs,
                                 const std::filesystem::path& out_dir, const DatasetJob& job);

}  // namespace spartn

#pragma once

#include "spartn/camera.hpp"
#include "spartn/grasp_sim.hpp"
#include "spartn/image.hpp"
#include "spartn/se3.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spartn {

struct DemoStep {
  Image image;
  Transform w_T_e;
  Transform action;  // relative action ^ET^{E-hat}
  bool gripper_closed = false;
};

struct Demonstration {
  std::vector<DemoStep> steps;
  CameraIntrinsics intrinsics;
  Transform e_T_c;
  PixelMask mask;
  std::uint64_t scene_seed = 0;

  std::size_t size() const { return steps.size(); }
  // Throws if images disagree with the intrinsics or the gripper reopens.
  void validate() const;
};

struct StepWindow {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool contains(std::size_t k) const { return k >= begin && k < end; }
  bool operator==(const StepWindow&) const = default;
};

// One augmented (or original) transition as stored in a frames file.
struct TransitionRecord {
  std::size_t k = 0;
  std::size_t sample = 0;
  Transform pose;
  Transform action;
  bool gripper_closed = false;
  std::string image_file;
};

// demo_####/{meta, frames, mask.pgm, img_###.ppm}
void write_demo(const std::filesystem::path& dir, const Demonstration& demo);
Demonstration read_demo(const std::filesystem::path& dir);

std::string demo_dir_name(std::size_t index);
std::string aug_dir_name(std::size_t index);
std::vector<std::filesystem::path> list_subdirs(const std::filesystem::path& root,
                                                const std::string& prefix);

// Augmented frames rows: "k i pose(12) action(12) gripper image_file".
void write_transitions(const std::filesystem::path& file, const std::vector<TransitionRecord>& rows);
std::vector<TransitionRecord> read_transitions(const std::filesystem::path& file);

// SHA-256 over sorted relative paths and file contents.
std::string hash_directory(const std::filesystem::path& root);
std::string sha256_hex(const std::string& bytes);

// Write into a temporary sibling, then rename into place.
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace spartn

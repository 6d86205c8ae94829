#pragma once

#include "spartn/se3.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace spartn {

// Pose whose translation is in structure-from-motion units (scale-ambiguous).
struct ScaledTransform {
  Rotation rotation = Rotation::Identity();
  Vec3 translation = Vec3::Zero();

  // Reinterpret a rigid transform's numbers as SfM-frame numbers.
  static ScaledTransform from(const Transform& t) { return {t.rotation, t.translation}; }
  Transform as_transform() const { return {rotation, translation}; }
};

// One step's calibrated world camera pose ^WT^C_k and the SfM estimate ^VH^C_k.
struct PosePair {
  Transform world;
  ScaledTransform sfm;
};

struct AlignmentSolution {
  double scale_beta = 1.0;          // SfM units per meter
  std::vector<Transform> v_T_w;     // one per step

  std::size_t size() const { return v_T_w.size(); }
};

// Least-squares scale from consecutive relative translations:
//   beta * t(^CT^W_j ^WT^C_{j+1}) = t(^CH^V_j ^VH^C_{j+1}),
// stacked as 3-vectors and regressed through the origin.
double estimate_scale(const std::vector<PosePair>& pairs);

// (R, t / beta).
Transform rescale(const ScaledTransform& h, double scale_beta);

// (R, t * beta); the inverse of rescale.
ScaledTransform scale_up(const Transform& t, double scale_beta);

// Per-step ^VT^W_k = ^VT^C_k (^WT^C_k)^-1 with ^VT^C_k = rescale(^VH^C_k).
AlignmentSolution estimate_frame(const std::vector<PosePair>& pairs, double scale_beta);

// Convenience: estimate_scale followed by estimate_frame.
AlignmentSolution align(const std::vector<PosePair>& pairs);

// Pose handed to a renderer trained on SfM poses for a perturbed world camera pose at step k.
ScaledTransform world_to_sfm(const Transform& w_T_c_perturbed, const AlignmentSolution& sol,
                             std::size_t k);

// Single frame estimate from chordal rotation averaging and mean translation.
// Diagnostic only; world_to_sfm always uses the per-step estimate.
Transform averaged_frame(const AlignmentSolution& sol);

// Synthetic SfM estimates ^VH^C_k = scale_beta * (v_T_w ^WT^C_k), with optional
// isotropic Gaussian noise on translations (SfM units) and small-angle Gaussian
// noise on the rotation axis (radians).
std::vector<ScaledTransform> synthesize_sfm(const std::vector<Transform>& w_T_c, const Transform& v_T_w,
                                            double scale_beta, double translation_sigma,
                                            double rotation_sigma, std::mt19937_64& rng);

// Text formats: pose-pair records "k world(12) sfm(12)" and a solution file
// with "scale_beta <value>" followed by "k v_T_w(12)" rows.
std::vector<PosePair> read_pose_pairs(const std::filesystem::path& path);
void write_pose_pairs(const std::filesystem::path& path, const std::vector<PosePair>& pairs);
void write_solution(const std::filesystem::path& path, const AlignmentSolution& sol);
AlignmentSolution read_solution(const std::filesystem::path& path);

}  // namespace spartn

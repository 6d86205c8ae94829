#include "spartn/frame_alignment.hpp"

#include "spartn/errors.hpp"

#include <Eigen/SVD>

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace spartn {
namespace {

Transform relative(const Transform& from, const Transform& to) {
  return compose(inverse(from), to);
}

void check_scale(double scale_beta) {
  if (!(scale_beta > 0.0)) {
    throw InvalidScale("scale_beta must be positive, got " + std::to_string(scale_beta));
  }
}

std::array<double, 12> read_row(std::istringstream& in, const std::string& line) {
  std::array<double, 12> v{};
  for (double& x : v) {
    if (!(in >> x)) throw FormatError("truncated transform in line: " + line);
  }
  return v;
}

}  // namespace

double estimate_scale(const std::vector<PosePair>& pairs) {
  if (pairs.size() < 2) throw DegenerateMotion("scale needs at least two pose pairs");
  double num = 0.0;
  double den = 0.0;
  double max_norm = 0.0;
  for (std::size_t j = 0; j + 1 < pairs.size(); ++j) {
    const Vec3 world = relative(pairs[j].world, pairs[j + 1].world).translation;
    const Vec3 sfm =
        relative(pairs[j].sfm.as_transform(), pairs[j + 1].sfm.as_transform()).translation;
    num += world.dot(sfm);
    den += world.squaredNorm();
    max_norm = std::max(max_norm, world.norm());
  }
  if (max_norm < 1e-9) throw DegenerateMotion("all relative translations vanish; scale unobservable");
  const double beta = num / den;
  if (!(beta > 0.0)) throw DegenerateMotion("regressed scale is not positive");
  return beta;
}

Transform rescale(const ScaledTransform& h, double scale_beta) {
  check_scale(scale_beta);
  return {h.rotation, h.translation / scale_beta};
}

ScaledTransform scale_up(const Transform& t, double scale_beta) {
  check_scale(scale_beta);
  return {t.rotation, t.translation * scale_beta};
}

AlignmentSolution estimate_frame(const std::vector<PosePair>& pairs, double scale_beta) {
  check_scale(scale_beta);
  AlignmentSolution sol;
  sol.scale_beta = scale_beta;
  sol.v_T_w.reserve(pairs.size());
  for (const auto& p : pairs) {
    sol.v_T_w.push_back(compose(rescale(p.sfm, scale_beta), inverse(p.world)));
  }
  return sol;
}

AlignmentSolution align(const std::vector<PosePair>& pairs) {
  return estimate_frame(pairs, estimate_scale(pairs));
}

ScaledTransform world_to_sfm(const Transform& w_T_c_perturbed, const AlignmentSolution& sol,
                             std::size_t k) {
  if (k >= sol.v_T_w.size()) {
    throw IndexOutOfRange("step " + std::to_string(k) + " outside alignment of " +
                          std::to_string(sol.v_T_w.size()) + " steps");
  }
  return scale_up(compose(sol.v_T_w[k], w_T_c_perturbed), sol.scale_beta);
}

std::vector<ScaledTransform> synthesize_sfm(const std::vector<Transform>& w_T_c, const Transform& v_T_w,
                                            double scale_beta, double translation_sigma,
                                            double rotation_sigma, std::mt19937_64& rng) {
  if (translation_sigma < 0.0 || rotation_sigma < 0.0) throw InvalidArgument("noise sigma must be >= 0");
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<ScaledTransform> out;
  out.reserve(w_T_c.size());
  for (const auto& t : w_T_c) {
    ScaledTransform h = scale_up(compose(v_T_w, t), scale_beta);
    if (rotation_sigma > 0.0) {
      const Vec3 w(n01(rng), n01(rng), n01(rng));
      const Vec3 omega = rotation_sigma * w;
      if (omega.norm() > 0.0) h.rotation = axis_angle(omega.normalized(), omega.norm()) * h.rotation;
    }
    if (translation_sigma > 0.0) {
      const Vec3 noise(n01(rng), n01(rng), n01(rng));
      h.translation += translation_sigma * noise;
    }
    out.push_back(h);
  }
  return out;
}

Transform averaged_frame(const AlignmentSolution& sol) {
  if (sol.v_T_w.empty()) throw IndexOutOfRange("empty alignment solution");
  Rotation sum = Rotation::Zero();
  Vec3 t = Vec3::Zero();
  for (const auto& x : sol.v_T_w) {
    sum += x.rotation;
    t += x.translation;
  }
  Eigen::JacobiSVD<Rotation> svd(sum, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Rotation u = svd.matrixU();
  if ((u * svd.matrixV().transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return {u * svd.matrixV().transpose(), t / static_cast<double>(sol.v_T_w.size())};
}

std::vector<PosePair> read_pose_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open pose-pair file " + path.string());
  std::vector<PosePair> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::size_t k = 0;
    if (!(row >> k)) throw FormatError("missing step index in line: " + line);
    if (k != pairs.size()) throw FormatError("pose pairs must be listed in step order");
    const auto w = read_row(row, line);
    const auto h = read_row(row, line);
    pairs.push_back({Transform::from_row_major(w), ScaledTransform::from(Transform::from_row_major(h))});
  }
  return pairs;
}

void write_pose_pairs(const std::filesystem::path& path, const std::vector<PosePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out << k << "  " << pairs[k].world << "  " << pairs[k].sfm.as_transform() << '\n';
  }
}

void write_solution(const std::filesystem::path& path, const AlignmentSolution& sol) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17) << "scale_beta " << sol.scale_beta << '\n';
  for (std::size_t k = 0; k < sol.v_T_w.size(); ++k) out << k << "  " << sol.v_T_w[k] << '\n';
}

AlignmentSolution read_solution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open solution file " + path.string());
  AlignmentSolution sol;
  std::string key;
  if (!(in >> key >> sol.scale_beta) || key != "scale_beta") {
    throw FormatError("solution file must start with scale_beta");
  }
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t k = 0;
    row >> k;
    sol.v_T_w.push_back(Transform::from_row_major(read_row(row, line)));
  }
  return sol;
}

}  // namespace spartn

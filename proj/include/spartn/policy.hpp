#pragma once

#include "spartn/grasp_sim.hpp"
#include "spartn/image.hpp"
#include "spartn/se3.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace spartn {

// Action as six parameters (Euler phi, theta, psi; translation x, y, z).
using PoseParams = std::array<double, 6>;
PoseParams to_params(const Transform& delta);
Transform from_params(const PoseParams& p);

struct PolicyShape {
  int image_size = 64;  // observation resolution (square)
  int downsample = 2;   // average-pool factor before flattening
  int encoder_hidden = 256;
  int embedding = 128;
  int head_hidden = 128;

  int input_dim() const {
    const int s = image_size / downsample;
    return s * s * 3;
  }
  bool operator==(const PolicyShape&) const = default;
};

// Pooled image -> 2 affine+ReLU encoder layers -> 128-d embedding -> 3 affine
// head layers -> 6 pose outputs squashed by bounds * tanh, plus a gripper logit.
class PolicyNet {
 public:
  static constexpr int kOutputs = 7;

  PolicyNet() = default;
  PolicyNet(const PolicyShape& shape, const ActionBounds& bounds);

  // He-uniform weights, zero biases.
  static PolicyNet initialized(const PolicyShape& shape, const ActionBounds& bounds,
                               std::uint64_t seed);

  const PolicyShape& shape() const { return shape_; }
  const ActionBounds& bounds() const { return bounds_; }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  struct Layer {
    int in = 0;
    int out = 0;
    Eigen::Index offset = 0;  // weights (out x in, column-major) then bias
  };
  const std::vector<Layer>& layers() const { return layers_; }

  // Raw network output (7 x batch) for a batch of feature columns.
  Eigen::MatrixXd raw(const Eigen::MatrixXd& features) const;

  void save(const std::filesystem::path& path) const;
  static PolicyNet load(const std::filesystem::path& path);

 private:
  PolicyShape shape_;
  ActionBounds bounds_;
  std::vector<Layer> layers_;
  Eigen::VectorXd params_;
};

// Pooled, centered pixel features of one image (length shape.input_dim()).
Eigen::VectorXd image_features(const Image& img, const PolicyShape& shape);

EnvAction forward(const PolicyNet& net, const Observation& obs);

struct TrainingSample {
  std::vector<std::uint8_t> pixels;  // pooled image, 8-bit
  PoseParams target{};               // normalized by the action bounds, in [-1, 1]
  bool gripper_closed = false;
};

// Encodes an image/action pair; targets outside the bounds are clamped and
// counted in `clamped`.
TrainingSample make_sample(const Image& img, const Transform& action, bool gripper_closed,
                           const PolicyShape& shape, const ActionBounds& bounds,
                           std::size_t* clamped = nullptr);

struct Batch {
  Eigen::MatrixXd features;  // input_dim x n
  Eigen::MatrixXd targets;   // 6 x n, normalized
  Eigen::RowVectorXd gripper;  // 1 x n, {0, 1}
  std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
};

struct AugmentOptions {
  bool enabled = false;  // random shift and brightness jitter
  int max_shift = 2;     // pooled pixels
  double brightness = 0.1;
};

Batch make_batch(const std::vector<const TrainingSample*>& rows, const PolicyShape& shape,
                 const AugmentOptions& aug = {}, std::mt19937_64* rng = nullptr);

struct LossGrad {
  double loss = 0.0;
  double pose_mse = 0.0;
  double gripper_bce = 0.0;
  Eigen::VectorXd gradient;
};

constexpr double kGripperLossWeight = 0.1;

// Mean squared error on normalized pose parameters plus 0.1 x binary cross
// entropy on the gripper logit, with its gradient by backpropagation.
LossGrad loss_and_grad(const PolicyNet& net, const Batch& batch);

struct TrainConfig {
  int steps = 3000;
  int batch = 64;
  double lr = 1e-3;
  double lr_final_fraction = 0.1;
  double rms_decay = 0.99;
  double mix_ratio = 0.5;  // fraction of each batch drawn from the augmented set
  std::uint64_t seed = 0;
  PolicyShape shape;
  AugmentOptions image_aug;
};

struct TrainResult {
  PolicyNet net;
  std::vector<double> losses;
  double augmented_fraction = 0.0;  // realized share of augmented rows
};

// Per-row source choice: true draws from the augmented set.
std::vector<bool> sample_sources(std::size_t batch, double mix_ratio, std::mt19937_64& rng);

TrainResult train(const std::vector<TrainingSample>& original,
                  const std::vector<TrainingSample>* augmented, const TrainConfig& cfg,
                  const ActionBounds& bounds);

// Closed-loop control law used by evaluate().
using Policy = std::function<EnvAction(const EnvState&, const Observation&)>;
Policy as_policy(const PolicyNet& net);
Policy expert_policy(const EnvConfig& cfg);

struct EpisodeRecord {
  std::size_t episode = 0;
  std::uint64_t env_seed = 0;
  bool success = false;
  int steps = 0;
  bool collision = false;
};

struct EvalReport {
  double success_rate = 0.0;
  double ci_low = 0.0;  // 95% Wilson interval
  double ci_high = 0.0;
  std::vector<EpisodeRecord> episodes;
};

EvalReport evaluate(const Policy& policy, const EnvConfig& env, std::size_t n_episodes,
                    std::uint64_t seed, unsigned parallelism = 1);

// Seeds of evaluation episodes; disjoint from demonstration seeds by construction.
std::uint64_t eval_env_seed(std::uint64_t seed, std::size_t episode);

}  // namespace spartn

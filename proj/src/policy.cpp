#include "spartn/policy.hpp"

#include "spartn/errors.hpp"
#include "spartn/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <thread>

namespace spartn {
namespace {

constexpr char kPolicyMagic[4] = {'S', 'P', 'P', 'N'};
constexpr std::uint32_t kPolicyVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated policy checkpoint");
  return v;
}

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

PoseParams to_params(const Transform& delta) {
  const EulerAngles e = to_euler(delta.rotation);
  return {e.phi, e.theta, e.psi, delta.translation.x(), delta.translation.y(), delta.translation.z()};
}

Transform from_params(const PoseParams& p) {
  return {from_euler({p[0], p[1], p[2]}), Vec3(p[3], p[4], p[5])};
}

PolicyNet::PolicyNet(const PolicyShape& shape, const ActionBounds& bounds)
    : shape_(shape), bounds_(bounds) {
  if (shape.image_size <= 0 || shape.downsample <= 0 || shape.image_size % shape.downsample != 0) {
    throw InvalidArgument("image size must be a positive multiple of the downsample factor");
  }
  const std::array<int, 6> dims = {shape.input_dim(), shape.encoder_hidden, shape.embedding,
                                   shape.head_hidden,  shape.head_hidden,    kOutputs};
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    layers_.push_back({dims[l], dims[l + 1], offset});
    offset += static_cast<Eigen::Index>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

PolicyNet PolicyNet::initialized(const PolicyShape& shape, const ActionBounds& bounds,
                                 std::uint64_t seed) {
  PolicyNet net(shape, bounds);
  auto rng = make_rng(seed, "policy.init");
  for (const auto& l : net.layers_) {
    const double limit = std::sqrt(6.0 / l.in);
    std::uniform_real_distribution<double> u(-limit, limit);
    const Eigen::Index n = static_cast<Eigen::Index>(l.in) * l.out;
    for (Eigen::Index i = 0; i < n; ++i) net.params_(l.offset + i) = u(rng);
  }
  return net;
}

Eigen::MatrixXd PolicyNet::raw(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd a = features;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& ly = layers_[l];
    const ConstMatMap w(params_.data() + ly.offset, ly.out, ly.in);
    const ConstVecMap b(params_.data() + ly.offset + static_cast<Eigen::Index>(ly.in) * ly.out, ly.out);
    Eigen::MatrixXd z = w * a;
    z.colwise() += b;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

void PolicyNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kPolicyMagic, 4);
  put<std::uint32_t>(out, kPolicyVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape_.image_size));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape_.downsample));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out));
  }
  put<float>(out, static_cast<float>(bounds_.rotation));
  put<float>(out, static_cast<float>(bounds_.translation));
  for (Eigen::Index i = 0; i < params_.size(); ++i) put<float>(out, static_cast<float>(params_(i)));
}

PolicyNet PolicyNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPolicyMagic, 4) != 0) throw FormatError("not a policy checkpoint");
  if (get<std::uint32_t>(in) != kPolicyVersion) throw FormatError("unsupported policy version");
  PolicyShape shape;
  shape.image_size = static_cast<int>(get<std::uint32_t>(in));
  shape.downsample = static_cast<int>(get<std::uint32_t>(in));
  const auto n_layers = get<std::uint32_t>(in);
  std::vector<std::pair<int, int>> dims;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const int a = static_cast<int>(get<std::uint32_t>(in));
    const int b = static_cast<int>(get<std::uint32_t>(in));
    dims.emplace_back(a, b);
  }
  if (dims.size() != 5) throw FormatError("unexpected policy layer count");
  shape.encoder_hidden = dims[0].second;
  shape.embedding = dims[1].second;
  shape.head_hidden = dims[2].second;
  ActionBounds bounds;
  bounds.rotation = get<float>(in);
  bounds.translation = get<float>(in);
  PolicyNet net(shape, bounds);
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (net.layers_[l].in != dims[l].first || net.layers_[l].out != dims[l].second) {
      throw FormatError("policy layer shapes are inconsistent");
    }
  }
  for (Eigen::Index i = 0; i < net.params_.size(); ++i) net.params_(i) = get<float>(in);
  return net;
}

Eigen::VectorXd image_features(const Image& img, const PolicyShape& shape) {
  if (img.width() != shape.image_size || img.height() != shape.image_size) {
    throw ResolutionMismatch("policy expects " + std::to_string(shape.image_size) + "x" +
                             std::to_string(shape.image_size) + " images, got " +
                             std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  const Image pooled = quantize8(downsample(img, shape.downsample));
  Eigen::VectorXd f(static_cast<Eigen::Index>(pooled.data().size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = pooled.data()[static_cast<std::size_t>(i)] - 0.5;
  return f;
}

EnvAction forward(const PolicyNet& net, const Observation& obs) {
  const Eigen::MatrixXd out = net.raw(image_features(obs.image, net.shape()));
  PoseParams p{};
  for (int i = 0; i < 6; ++i) {
    const double bound = i < 3 ? net.bounds().rotation : net.bounds().translation;
    p[static_cast<std::size_t>(i)] = bound * std::tanh(out(i, 0));
  }
  EnvAction act;
  act.delta = from_params(p);
  act.gripper = out(6, 0) > 0.0 ? GripperCommand::Close : GripperCommand::Open;
  return act;
}

TrainingSample make_sample(const Image& img, const Transform& action, bool gripper_closed,
                           const PolicyShape& shape, const ActionBounds& bounds,
                           std::size_t* clamped) {
  if (img.width() != shape.image_size || img.height() != shape.image_size) {
    throw ResolutionMismatch("training image does not match policy resolution");
  }
  TrainingSample s;
  const Image pooled = downsample(img, shape.downsample);
  s.pixels.resize(pooled.data().size());
  std::transform(pooled.data().begin(), pooled.data().end(), s.pixels.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  const PoseParams p = to_params(action);
  bool any = false;
  for (std::size_t i = 0; i < 6; ++i) {
    const double bound = i < 3 ? bounds.rotation : bounds.translation;
    const double v = p[i] / bound;
    s.target[i] = std::clamp(v, -1.0, 1.0);
    any = any || s.target[i] != v;
  }
  if (any && clamped) ++*clamped;
  s.gripper_closed = gripper_closed;
  return s;
}

Batch make_batch(const std::vector<const TrainingSample*>& rows, const PolicyShape& shape,
                 const AugmentOptions& aug, std::mt19937_64* rng) {
  const int dim = shape.input_dim();
  const int side = shape.image_size / shape.downsample;
  Batch b;
  b.features.resize(dim, static_cast<Eigen::Index>(rows.size()));
  b.targets.resize(6, static_cast<Eigen::Index>(rows.size()));
  b.gripper.resize(static_cast<Eigen::Index>(rows.size()));
  std::uniform_int_distribution<int> shift(-aug.max_shift, aug.max_shift);
  std::uniform_real_distribution<double> gain(1.0 - aug.brightness, 1.0 + aug.brightness);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const TrainingSample& s = *rows[c];
    const auto col = static_cast<Eigen::Index>(c);
    if (aug.enabled && rng) {
      const int dx = shift(*rng);
      const int dy = shift(*rng);
      const double g = gain(*rng);
      for (int y = 0; y < side; ++y) {
        const int sy = std::clamp(y + dy, 0, side - 1);
        for (int x = 0; x < side; ++x) {
          const int sx = std::clamp(x + dx, 0, side - 1);
          for (int ch = 0; ch < 3; ++ch) {
            const double v = s.pixels[static_cast<std::size_t>((sy * side + sx) * 3 + ch)] / 255.0;
            b.features((y * side + x) * 3 + ch, col) = std::clamp(v * g, 0.0, 1.0) - 0.5;
          }
        }
      }
    } else {
      for (int i = 0; i < dim; ++i) b.features(i, col) = s.pixels[static_cast<std::size_t>(i)] / 255.0 - 0.5;
    }
    for (int i = 0; i < 6; ++i) b.targets(i, col) = s.target[static_cast<std::size_t>(i)];
    b.gripper(col) = s.gripper_closed ? 1.0 : 0.0;
  }
  return b;
}

LossGrad loss_and_grad(const PolicyNet& net, const Batch& batch) {
  if (batch.size() == 0) throw EmptyDataset("loss on an empty batch");
  const auto& layers = net.layers();
  const Eigen::VectorXd& params = net.parameters();
  const double n = static_cast<double>(batch.size());

  // Forward pass, keeping post-activation values of every layer.
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(batch.features);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& ly = layers[l];
    const ConstMatMap w(params.data() + ly.offset, ly.out, ly.in);
    const ConstVecMap b(params.data() + ly.offset + static_cast<Eigen::Index>(ly.in) * ly.out, ly.out);
    Eigen::MatrixXd z = w * acts.back();
    z.colwise() += b;
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Eigen::MatrixXd& out = acts.back();

  LossGrad res;
  const Eigen::ArrayXXd pose = out.topRows(6).array().tanh();
  const Eigen::ArrayXXd err = pose - batch.targets.array();
  res.pose_mse = err.square().sum() / (6.0 * n);
  const Eigen::ArrayXd logits = out.row(6).transpose().array();
  double bce = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double g = batch.gripper(i);
    bce += softplus(logits(i)) - g * logits(i);
  }
  res.gripper_bce = bce / n;
  res.loss = res.pose_mse + kGripperLossWeight * res.gripper_bce;

  Eigen::MatrixXd delta(PolicyNet::kOutputs, out.cols());
  delta.topRows(6) = (2.0 / (6.0 * n)) * (err * (1.0 - pose.square())).matrix();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    delta(6, i) = kGripperLossWeight / n * (sigmoid(logits(i)) - batch.gripper(i));
  }

  res.gradient = Eigen::VectorXd::Zero(params.size());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& ly = layers[li];
    const Eigen::MatrixXd& input = acts[li];
    Eigen::Map<Eigen::MatrixXd> gw(res.gradient.data() + ly.offset, ly.out, ly.in);
    Eigen::Map<Eigen::VectorXd> gb(res.gradient.data() + ly.offset + static_cast<Eigen::Index>(ly.in) * ly.out,
                                   ly.out);
    gw.noalias() = delta * input.transpose();
    gb = delta.rowwise().sum();
    if (li == 0) break;
    const ConstMatMap w(params.data() + ly.offset, ly.out, ly.in);
    Eigen::MatrixXd prev = w.transpose() * delta;
    prev = (input.array() > 0.0).select(prev, 0.0);
    delta = std::move(prev);
  }
  return res;
}

std::vector<bool> sample_sources(std::size_t batch, double mix_ratio, std::mt19937_64& rng) {
  std::bernoulli_distribution pick(mix_ratio);
  std::vector<bool> out(batch);
  for (std::size_t i = 0; i < batch; ++i) out[i] = pick(rng);
  return out;
}

TrainResult train(const std::vector<TrainingSample>& original,
                  const std::vector<TrainingSample>* augmented, const TrainConfig& cfg,
                  const ActionBounds& bounds) {
  if (original.empty()) throw EmptyDataset("original dataset is empty");
  if (cfg.steps < 0 || cfg.batch <= 0 || !(cfg.lr > 0.0)) throw InvalidArgument("bad training config");
  if (cfg.mix_ratio < 0.0 || cfg.mix_ratio > 1.0) throw InvalidArgument("mix_ratio must lie in [0, 1]");
  const bool use_aug = augmented != nullptr && !augmented->empty();
  const double mix = use_aug ? cfg.mix_ratio : 0.0;

  TrainResult res;
  res.net = PolicyNet::initialized(cfg.shape, bounds, cfg.seed);
  Eigen::VectorXd& params = res.net.parameters();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(params.size());
  auto rng = make_rng(cfg.seed, "policy.train");
  std::uniform_int_distribution<std::size_t> pick_orig(0, original.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_aug(0, use_aug ? augmented->size() - 1 : 0);
  std::size_t aug_rows = 0;
  std::vector<const TrainingSample*> rows(static_cast<std::size_t>(cfg.batch));
  res.losses.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const auto sources = sample_sources(rows.size(), mix, rng);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (sources[i]) {
        rows[i] = &(*augmented)[pick_aug(rng)];
        ++aug_rows;
      } else {
        rows[i] = &original[pick_orig(rng)];
      }
    }
    const Batch batch = make_batch(rows, cfg.shape, cfg.image_aug, &rng);
    const LossGrad lg = loss_and_grad(res.net, batch);
    res.losses.push_back(lg.loss);
    const double decay =
        std::pow(cfg.lr_final_fraction, static_cast<double>(step) / std::max(1, cfg.steps - 1));
    const double correction = 1.0 - std::pow(cfg.rms_decay, step + 1);
    acc = cfg.rms_decay * acc + (1.0 - cfg.rms_decay) * lg.gradient.cwiseAbs2();
    params.array() -= cfg.lr * decay * lg.gradient.array() / ((acc.array() / correction).sqrt() + 1e-8);
  }
  if (cfg.steps > 0) {
    res.augmented_fraction = static_cast<double>(aug_rows) / (static_cast<double>(cfg.steps) * cfg.batch);
  }
  return res;
}

Policy as_policy(const PolicyNet& net) {
  auto shared = std::make_shared<const PolicyNet>(net);
  return [shared](const EnvState&, const Observation& obs) { return forward(*shared, obs); };
}

Policy expert_policy(const EnvConfig& cfg) {
  return [cfg](const EnvState& s, const Observation&) { return scripted_expert(cfg, s); };
}

std::uint64_t eval_env_seed(std::uint64_t seed, std::size_t episode) {
  return derive_seed(seed, "eval.episode", {episode});
}

EvalReport evaluate(const Policy& policy, const EnvConfig& env, std::size_t n_episodes,
                    std::uint64_t seed, unsigned parallelism) {
  if (n_episodes == 0) throw InvalidArgument("evaluation needs at least one episode");
  EvalReport report;
  report.episodes.resize(n_episodes);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t e = next++; e < n_episodes; e = next++) {
      EpisodeRecord& rec = report.episodes[e];
      rec.episode = e;
      rec.env_seed = eval_env_seed(seed, e);
      EnvState state = reset(env, rec.env_seed);
      Observation obs = observe(env, state);
      for (int k = 0; k < env.horizon; ++k) {
        StepResult r = step(env, state, policy(state, obs));
        state = std::move(r.state);
        obs = std::move(r.observation);
        rec.steps = k + 1;
        if (success(state, env.lift_height)) {
          rec.success = true;
          break;
        }
      }
      rec.collision = state.collision;
    }
  };
  {
    const unsigned threads = std::max(1u, std::min<unsigned>(parallelism, n_episodes));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  const double n = static_cast<double>(n_episodes);
  const double wins = static_cast<double>(
      std::count_if(report.episodes.begin(), report.episodes.end(), [](const auto& r) { return r.success; }));
  report.success_rate = wins / n;
  const double z = 1.959963984540054;
  const double p = report.success_rate;
  const double denom = 1.0 + z * z / n;
  const double center = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  report.ci_low = std::max(0.0, center - half);
  report.ci_high = std::min(1.0, center + half);
  return report;
}

}  // namespace spartn

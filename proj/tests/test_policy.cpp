#include "spartn/errors.hpp"
#include "spartn/policy.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace spartn;

namespace {

PolicyShape tiny_shape() {
  PolicyShape s;
  s.image_size = 8;
  s.downsample = 2;
  s.encoder_hidden = 16;
  s.embedding = 8;
  s.head_hidden = 8;
  return s;
}

Image random_image(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(n, n);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

std::vector<TrainingSample> random_samples(std::size_t n, const PolicyShape& shape, const ActionBounds& b,
                                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Transform a{from_euler({u(rng) * b.rotation, u(rng) * b.rotation, u(rng) * b.rotation}),
                      Vec3(u(rng), u(rng), u(rng)) * b.translation};
    out.push_back(make_sample(random_image(shape.image_size, rng), a, i % 2 == 0, shape, b));
  }
  return out;
}

Batch batch_of(const std::vector<TrainingSample>& s, const PolicyShape& shape) {
  std::vector<const TrainingSample*> rows;
  for (const auto& x : s) rows.push_back(&x);
  return make_batch(rows, shape);
}

}  // namespace

TEST_CASE("pose parameters round trip") {
  const PoseParams p{0.1, -0.05, 0.15, 0.01, -0.02, 0.005};
  const PoseParams q = to_params(from_params(p));
  for (int i = 0; i < 6; ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));
}

TEST_CASE("zero parameters give the identity action") {
  const PolicyNet net(PolicyShape{}, ActionBounds{});
  std::mt19937_64 rng(1);
  Observation obs;
  obs.image = random_image(64, rng);
  const EnvAction a = forward(net, obs);
  CHECK(max_abs_diff(a.delta, Transform::identity()) == 0.0);
  CHECK(a.gripper == GripperCommand::Open);
}

TEST_CASE("actions stay within bounds and forward is pure") {
  const ActionBounds bounds;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  int trials = 0;
  for (int p = 0; p < 100; ++p) {
    PolicyNet net = PolicyNet::initialized(tiny_shape(), bounds, p);
    for (auto& v : net.parameters()) v *= 1.0 + 4.0 * std::abs(n(rng));
    for (int i = 0; i < 100; ++i) {
      Observation obs;
      obs.image = random_image(8, rng);
      const EnvAction a = forward(net, obs);
      const PoseParams q = to_params(a.delta);
      for (int d = 0; d < 3; ++d) CHECK(std::abs(q[d]) <= bounds.rotation + 1e-12);
      for (int d = 3; d < 6; ++d) CHECK(std::abs(q[d]) <= bounds.translation + 1e-12);
      const EnvAction b = forward(net, obs);
      CHECK(max_abs_diff(a.delta, b.delta) == 0.0);
      CHECK(a.gripper == b.gripper);
      ++trials;
    }
  }
  CHECK(trials == 10000);
}

TEST_CASE("resolution mismatch") {
  const PolicyNet net(PolicyShape{}, ActionBounds{});
  Observation obs;
  obs.image = Image(32, 32);
  CHECK_THROWS_AS(forward(net, obs), ResolutionMismatch);
  CHECK_THROWS_AS(make_sample(Image(32, 32), Transform::identity(), false, PolicyShape{}, ActionBounds{}),
                  ResolutionMismatch);
}

TEST_CASE("out-of-bounds targets are clamped and counted") {
  std::size_t clamped = 0;
  const ActionBounds b;
  const auto s = make_sample(Image(8, 8), Transform::from_translation(Vec3(0.05, 0, 0)), false, tiny_shape(), b,
                             &clamped);
  CHECK(clamped == 1);
  CHECK(s.target[3] == 1.0);
  make_sample(Image(8, 8), Transform::from_translation(Vec3(0.01, 0, 0)), false, tiny_shape(), b, &clamped);
  CHECK(clamped == 1);
}

TEST_CASE("loss is zero when targets equal outputs") {
  const PolicyShape shape = tiny_shape();
  const ActionBounds b;
  std::mt19937_64 rng(3);
  const PolicyNet net = PolicyNet::initialized(shape, b, 4);
  auto samples = random_samples(6, shape, b, rng);
  Batch batch = batch_of(samples, shape);
  const Eigen::MatrixXd raw = net.raw(batch.features);
  batch.targets = raw.topRows(6).array().tanh().matrix();
  CHECK(loss_and_grad(net, batch).pose_mse < 1e-30);
}

TEST_CASE("gradient matches central differences") {
  const PolicyShape shape = tiny_shape();
  const ActionBounds b;
  std::mt19937_64 rng(5);
  PolicyNet net = PolicyNet::initialized(shape, b, 6);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& v : net.parameters()) v += n(rng);  // nonzero biases too
  const Batch batch = batch_of(random_samples(10, shape, b, rng), shape);
  const LossGrad lg = loss_and_grad(net, batch);
  CHECK(lg.loss == doctest::Approx(lg.pose_mse + kGripperLossWeight * lg.gripper_bce).epsilon(1e-14));
  std::uniform_int_distribution<Eigen::Index> pick(0, net.parameters().size() - 1);
  int checked = 0;
  const double h = 1e-6;
  for (int attempt = 0; attempt < 5000 && checked < 32; ++attempt) {
    const Eigen::Index i = pick(rng);
    if (std::abs(lg.gradient(i)) < 1e-6) continue;
    PolicyNet a = net, c = net;
    a.parameters()(i) += h;
    c.parameters()(i) -= h;
    const double fd = (loss_and_grad(a, batch).loss - loss_and_grad(c, batch).loss) / (2 * h);
    CHECK(std::abs(fd - lg.gradient(i)) / std::abs(fd) < 1e-4);
    ++checked;
  }
  CHECK(checked == 32);
}

TEST_CASE("duplicated rows leave the loss unchanged") {
  const PolicyShape shape = tiny_shape();
  const ActionBounds b;
  std::mt19937_64 rng(7);
  const PolicyNet net = PolicyNet::initialized(shape, b, 8);
  auto s = random_samples(5, shape, b, rng);
  const double once = loss_and_grad(net, batch_of(s, shape)).loss;
  auto twice = s;
  twice.insert(twice.end(), s.begin(), s.end());
  CHECK(loss_and_grad(net, batch_of(twice, shape)).loss == doctest::Approx(once).epsilon(1e-14));
}

TEST_CASE("zero training steps return the seeded initialization") {
  const ActionBounds b;
  std::mt19937_64 rng(9);
  const auto s = random_samples(4, tiny_shape(), b, rng);
  TrainConfig cfg;
  cfg.shape = tiny_shape();
  cfg.steps = 0;
  cfg.seed = 10;
  const TrainResult r = train(s, nullptr, cfg, b);
  CHECK(r.net.parameters() == PolicyNet::initialized(cfg.shape, b, 10).parameters());
  CHECK(r.losses.empty());
}

TEST_CASE("overfits a handful of examples") {
  const PolicyShape shape;
  const ActionBounds b;
  std::mt19937_64 rng(11);
  const auto s = random_samples(8, shape, b, rng);
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch = 8;
  cfg.seed = 12;
  const TrainResult r = train(s, nullptr, cfg, b);
  CHECK(loss_and_grad(r.net, batch_of(s, shape)).pose_mse < 1e-4);
}

TEST_CASE("training is deterministic per seed") {
  const ActionBounds b;
  std::mt19937_64 rng(13);
  const auto orig = random_samples(16, tiny_shape(), b, rng);
  const auto aug = random_samples(16, tiny_shape(), b, rng);
  TrainConfig cfg;
  cfg.shape = tiny_shape();
  cfg.steps = 50;
  cfg.batch = 8;
  cfg.seed = 14;
  const TrainResult a = train(orig, &aug, cfg, b), c = train(orig, &aug, cfg, b);
  CHECK(a.net.parameters() == c.net.parameters());
  CHECK(a.losses == c.losses);
  cfg.seed = 15;
  CHECK(train(orig, &aug, cfg, b).net.parameters() != a.net.parameters());
}

TEST_CASE("batch mixing") {
  std::mt19937_64 rng(16);
  std::size_t aug = 0, total = 0;
  for (int i = 0; i < 10000; ++i) {
    for (bool v : sample_sources(64, 0.5, rng)) aug += v;
    total += 64;
  }
  const double frac = static_cast<double>(aug) / total;
  CHECK(frac >= 0.49);
  CHECK(frac <= 0.51);

  const ActionBounds b;
  const auto orig = random_samples(8, tiny_shape(), b, rng);
  TrainConfig cfg;
  cfg.shape = tiny_shape();
  cfg.steps = 20;
  cfg.batch = 16;
  CHECK(train(orig, nullptr, cfg, b).augmented_fraction == 0.0);
  const std::vector<TrainingSample> empty;
  CHECK(train(orig, &empty, cfg, b).augmented_fraction == 0.0);
  const auto more = random_samples(8, tiny_shape(), b, rng);
  const double f = train(orig, &more, cfg, b).augmented_fraction;
  CHECK(f > 0.3);
  CHECK(f < 0.7);
  CHECK_THROWS_AS(train(empty, nullptr, cfg, b), EmptyDataset);
  CHECK_THROWS_AS(loss_and_grad(PolicyNet(tiny_shape(), b), Batch{}), EmptyDataset);
}

TEST_CASE("image jitter changes features but keeps shape") {
  const ActionBounds b;
  std::mt19937_64 rng(17);
  const auto s = random_samples(4, tiny_shape(), b, rng);
  std::vector<const TrainingSample*> rows{&s[0], &s[1]};
  const Batch plain = make_batch(rows, tiny_shape());
  AugmentOptions opt;
  opt.enabled = true;
  const Batch jit = make_batch(rows, tiny_shape(), opt, &rng);
  CHECK(jit.features.rows() == plain.features.rows());
  CHECK(jit.features != plain.features);
  CHECK(jit.targets == plain.targets);
}

TEST_CASE("checkpoint round trip") {
  const ActionBounds b{0.15, 0.01};
  const PolicyNet net = PolicyNet::initialized(tiny_shape(), b, 18);
  const auto path = std::filesystem::temp_directory_path() / "spartn_policy_test.bin";
  net.save(path);
  const PolicyNet back = PolicyNet::load(path);
  std::filesystem::remove(path);
  CHECK(back.shape() == net.shape());
  CHECK(back.bounds().rotation == doctest::Approx(0.15));
  REQUIRE(back.parameter_count() == net.parameter_count());
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
    CHECK(back.parameters()(i) == static_cast<double>(static_cast<float>(net.parameters()(i))));
  }
}

TEST_CASE("closed-loop evaluation") {
  const EnvConfig env;
  const Policy still = [](const EnvState&, const Observation&) { return EnvAction{}; };
  const EvalReport r0 = evaluate(still, env, 20, 1);
  CHECK(r0.success_rate == 0.0);
  CHECK(r0.ci_low == 0.0);

  const EvalReport a = evaluate(expert_policy(env), env, 40, 2);
  const EvalReport c = evaluate(expert_policy(env), env, 40, 2, 3);
  REQUIRE(a.episodes.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(a.episodes[i].success == c.episodes[i].success);
    CHECK(a.episodes[i].steps == c.episodes[i].steps);
    CHECK(a.episodes[i].env_seed == eval_env_seed(2, i));
  }
  // Wilson interval from the hand formula.
  const double n = 40, p = a.success_rate, z = 1.959963984540054;
  const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  CHECK(a.ci_low == doctest::Approx(std::max(0.0, centre - half)).epsilon(1e-12));
  CHECK(a.ci_high == doctest::Approx(std::min(1.0, centre + half)).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(still, env, 0, 1), InvalidArgument);
}

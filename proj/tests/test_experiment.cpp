#include "spartn/dataset.hpp"
#include "spartn/errors.hpp"
#include "spartn/experiment.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

using namespace spartn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spartn_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig small_run(const fs::path& ws) {
  RunConfig c;
  c.workspace = ws;
  c.experiment = "t";
  c.n_demos = 2;
  c.seeds = {0};
  c.field.resolution = 32;
  c.field.iters = 40;
  c.field.rays_per_step = 256;
  c.field.render.samples_per_ray = 16;
  c.augment.n_aug = 2;
  c.augment.render.samples_per_ray = 16;
  c.train.steps = 20;
  c.train.batch = 16;
  c.eval_episodes = 5;
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("config file, overrides and workspace variable") {
  const fs::path dir = scratch("config");
  write_file(dir / "run.ini",
             "[run]\nworkspace = /tmp/a\nmethod = ha\nseeds = 4, 5\n[train]\nsteps = 77\n"
             "[augment]\nwindow_first = 5\nwindow_last = 13\n");
  ::unsetenv(kWorkspaceEnv);
  RunConfig c = load_config(dir / "run.ini", {"train.lr=0.01", "run.method=dart"});
  CHECK(c.workspace == fs::path("/tmp/a"));
  CHECK(c.method == Method::Dart);
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.train.steps == 77);
  CHECK(c.train.lr == 0.01);
  REQUIRE(c.augment.window);
  CHECK(*c.augment.window == StepWindow{5, 14});
  CHECK(c.demos_dir() == fs::path("/tmp/a/desk/demos_dart"));

  ::setenv(kWorkspaceEnv, "/tmp/b", 1);
  CHECK(load_config(dir / "run.ini").workspace == fs::path("/tmp/b"));
  ::unsetenv(kWorkspaceEnv);

  // The dump is itself a complete set of overrides.
  std::vector<std::string> lines;
  std::istringstream in(c.dump());
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  const RunConfig again = load_config(std::nullopt, lines);
  CHECK(again.dump() == c.dump());

  CHECK_THROWS_AS(load_config(std::nullopt, {"train.nope=1"}), InvalidArgument);
  CHECK_THROWS_AS(load_config(std::nullopt, {"train.steps=abc"}), InvalidArgument);
  CHECK_THROWS_AS(load_config(std::nullopt, {"run.method=dagger"}), InvalidArgument);
  CHECK_THROWS_AS(load_config(std::nullopt, {"run.seeds="}), InvalidArgument);
  CHECK_THROWS_AS(load_config(dir / "missing.ini"), InvalidArgument);
  fs::remove_all(dir);
}

TEST_CASE("report aggregation") {
  const auto one = aggregate({{"bc", 0, 0.3}});
  REQUIRE(one.size() == 1);
  CHECK(one[0].mean == 0.3);
  CHECK_FALSE(one[0].se);
  CHECK(report_csv(one) == "method,seeds,mean_success,se\nbc,1,0.3,\n");

  const auto three = aggregate({{"spartn", 0, 0.30}, {"spartn", 1, 0.40}, {"spartn", 2, 0.20}, {"bc", 0, 0.1}});
  REQUIRE(three.size() == 2);
  const ReportRow& s = three[1];
  CHECK(s.method == "spartn");
  CHECK(s.mean == doctest::Approx(0.3));
  // Deviations -0, 0.1, -0.1: sample variance 0.01, std 0.1, se 0.1 / sqrt(3).
  REQUIRE(s.se);
  CHECK(*s.se == doctest::Approx(0.1 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("pipeline commands end to end") {
  ::unsetenv(kWorkspaceEnv);
  const fs::path ws = scratch("pipeline");
  RunConfig c = small_run(ws);

  c.method = Method::Spartn;
  CHECK_THROWS_WITH_AS(augment_demos(c), doctest::Contains("gen-demos"), InvalidArgument);

  c.method = Method::Bc;
  const DemoSetResult d1 = gen_demos(c);
  CHECK(d1.count == 2);
  CHECK(list_subdirs(d1.dir, "demo_").size() == 2);
  const DemoSetResult d2 = gen_demos(c);
  CHECK(d2.content_hash == d1.content_hash);
  CHECK_THROWS_AS(augment_demos(c), InvalidArgument);

  c.method = Method::Dart;
  const DemoSetResult dd = gen_demos(c);
  CHECK(dd.dir.filename() == "demos_dart");
  double deviation = 0.0;
  const Demonstration a = read_demo(d1.dir / demo_dir_name(0));
  const Demonstration b = read_demo(dd.dir / demo_dir_name(0));
  for (std::size_t k = 1; k < std::min(a.size(), b.size()); ++k) {
    deviation += (a.steps[k].w_T_e.translation - b.steps[k].w_T_e.translation).norm();
  }
  CHECK(deviation > 0.0);

  c.method = Method::Spartn;
  const Manifest m = augment_demos(c);
  std::size_t expect = 0;
  for (const auto& dir : list_subdirs(d1.dir, "demo_")) expect += 2 * pre_grasp_segment(read_demo(dir)).size();
  CHECK(m.total == expect);
  CHECK(augment_demos(c).hash() == m.hash());

  c.method = Method::Ha;
  augment_demos(c);
  for (const auto& dir : list_subdirs(c.aug_dir(), "aug_")) {
    const Demonstration demo = read_demo(d1.dir / ("demo_" + dir.filename().string().substr(4)));
    for (const auto& r : read_transitions(dir / "frames")) {
      CHECK((r.pose.translation - demo.steps[r.k].w_T_e.translation).norm() < 1e-12);
    }
  }

  for (Method meth : {Method::Bc, Method::Dart, Method::Ha, Method::Spartn}) {
    c.method = meth;
    CHECK_THROWS_WITH_AS(eval_policies(c), doctest::Contains("train"), InvalidArgument);
    const auto p1 = train_policies(c);
    REQUIRE(p1.size() == 1);
    CHECK(fs::exists(p1[0].path));
    CHECK(train_policies(c)[0].content_hash == p1[0].content_hash);
    const auto e1 = eval_policies(c);
    const auto e2 = eval_policies(c);
    CHECK(e1[0].report.success_rate == e2[0].report.success_rate);
    CHECK(read_eval_csv(e1[0].path).second == 5);
  }
  const auto rows = write_report({c.root()});
  CHECK(rows.size() == 4);
  CHECK(fs::exists(c.root() / "report.csv"));
  CHECK(fs::exists(c.root() / "report.txt"));
  fs::remove_all(ws);
}

TEST_CASE("preset window counts through the command layer") {
  ::unsetenv(kWorkspaceEnv);
  const fs::path ws = scratch("preset");
  RunConfig c = small_run(ws);
  c.n_demos = 1;
  c.method = Method::Bc;
  gen_demos(c);
  c.method = Method::Spartn;
  const AugmentConfig preset = simulation_preset();
  c.augment.n_aug = preset.n_aug;
  c.augment.noise = preset.noise;
  c.augment.window = preset.window;
  c.augment.render.samples_per_ray = 4;
  const Manifest m = augment_demos(c);
  CHECK(m.total == 9 * 100 * c.n_demos);
  fs::remove_all(ws);
}

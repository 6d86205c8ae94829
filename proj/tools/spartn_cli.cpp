// Pipeline driver: gen-demos -> augment -> train -> eval -> report.
#include "spartn/errors.hpp"
#include "spartn/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

namespace {

using namespace spartn;

struct Args {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Args& a, bool many_configs) {
  if (many_configs) {
    cmd->add_option("--config", a.configs, "INI config file (repeatable; one per experiment)");
  } else {
    cmd->add_option("--config", a.configs, "INI config file")->expected(1);
  }
  cmd->add_option("--set", a.sets, "override, section.key=value (repeatable)");
}

RunConfig config_of(const Args& a, std::size_t i = 0) {
  std::optional<std::filesystem::path> path;
  if (i < a.configs.size()) path = a.configs[i];
  return load_config(path, a.sets);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_gen_demos(const Args& a) {
  const RunConfig cfg = config_of(a);
  const auto t0 = std::chrono::steady_clock::now();
  const DemoSetResult r = gen_demos(cfg);
  std::printf("wrote %zu demonstrations (%zu attempts) to %s in %.1fs\ncontent %s\n", r.count, r.attempts,
              r.dir.string().c_str(), seconds_since(t0), r.content_hash.c_str());
  return 0;
}

int run_augment(const Args& a) {
  const RunConfig cfg = config_of(a);
  const auto t0 = std::chrono::steady_clock::now();
  const Manifest m = augment_demos(cfg);
  std::size_t failed = 0;
  for (const auto& d : m.demos) {
    if (!d.ok) {
      ++failed;
      std::fprintf(stderr, "%s: %s\n", d.demo.c_str(), d.error.c_str());
    }
  }
  std::printf("%s: %zu transitions from %zu demos (%zu failed) in %.1fs\ncontent %s\n", m.method.c_str(), m.total,
              m.demos.size(), failed, seconds_since(t0), m.content_hash.c_str());
  return 0;
}

int run_train(const Args& a) {
  const RunConfig cfg = config_of(a);
  const auto policies = train_policies(cfg);
  if (!policies.empty() && policies.front().clamped_targets > 0) {
    std::fprintf(stderr, "warning: %zu training targets clamped to the action bounds\n", policies.front().clamped_targets);
  }
  for (const auto& p : policies) {
    std::printf("%s seed %llu: final loss %.6f -> %s\n", method_name(cfg.method).c_str(),
                static_cast<unsigned long long>(p.seed), p.final_loss, p.path.string().c_str());
  }
  return 0;
}

int run_eval(const Args& a) {
  const RunConfig cfg = config_of(a);
  for (const auto& e : eval_policies(cfg)) {
    std::printf("%s seed %llu: success %.3f [%.3f, %.3f] over %zu episodes -> %s\n",
                method_name(cfg.method).c_str(), static_cast<unsigned long long>(e.seed), e.report.success_rate,
                e.report.ci_low, e.report.ci_high, e.report.episodes.size(), e.path.string().c_str());
  }
  return 0;
}

int run_report(const Args& a) {
  std::vector<std::filesystem::path> roots;
  const std::size_t n = std::max<std::size_t>(1, a.configs.size());
  for (std::size_t i = 0; i < n; ++i) roots.push_back(config_of(a, i).root());
  const auto rows = write_report(roots);
  std::cout << report_text(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPARTN desk-scale pipeline"};
  app.require_subcommand(1);
  Args args;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Args&);
  };
  const Command commands[] = {
      {"gen-demos", "collect scripted demonstrations (DART-noised with run.method=dart)", run_gen_demos},
      {"augment", "build the augmented dataset (run.method=spartn or ha)", run_augment},
      {"train", "train one policy per seed", run_train},
      {"eval", "evaluate trained policies in closed loop", run_eval},
      {"report", "aggregate evaluations into report.csv and report.txt", run_report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, args, std::string(c.name) == "report");
    subs.emplace_back(sub, &c);
  }
  CLI11_PARSE(app, argc, argv);
  try {
    for (const auto& [sub, cmd] : subs) {
      if (sub->parsed()) return cmd->run(args);
    }
  } catch (const spartn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

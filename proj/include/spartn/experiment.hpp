#pragma once

#include "spartn/grasp_sim.hpp"
#include "spartn/pipeline.hpp"
#include "spartn/policy.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spartn {

enum class Method { Bc, Dart, Ha, Spartn };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Everything one run depends on. Loaded from an INI file with sections
// [run] [env] [demos] [field] [augment] [train] [eval].
struct RunConfig {
  std::filesystem::path workspace = "workspace";
  std::string experiment = "desk";
  Method method = Method::Spartn;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t root_seed = 1;
  unsigned parallelism = 1;

  EnvConfig env;
  std::size_t n_demos = 25;
  std::size_t max_demo_attempts = 0;  // 0: 4 * n_demos
  NoiseParams dart_noise{0.1, 0.003};

  FieldTrainConfig field;
  AugmentConfig augment;
  bool use_sfm = false;  // train fields on simulated SfM poses
  SfmSimulation sfm;

  TrainConfig train;
  std::size_t eval_episodes = 100;

  RunConfig();
  void validate() const;

  std::filesystem::path root() const { return workspace / experiment; }
  std::filesystem::path demos_dir() const;  // demos/ or demos_dart/
  std::filesystem::path aug_dir() const;    // aug_spartn/ or aug_ha/
  std::filesystem::path policy_path(std::uint64_t seed) const;
  std::filesystem::path eval_path(std::uint64_t seed) const;

  // Canonical "section.key = value" listing of every setting.
  std::string dump() const;
};

// Applies one "section.key=value" override; throws InvalidArgument on unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& assignment);

// Reads an INI file (if given), then the overrides in order, then the workspace
// environment variable (kWorkspaceEnv) if set.
inline constexpr const char* kWorkspaceEnv = "SPARTN_WORKSPACE";
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides = {});

struct DemoSetResult {
  std::filesystem::path dir;
  std::size_t count = 0;
  std::size_t attempts = 0;
  std::string content_hash;
};

// Writes n_demos success-filtered demonstrations (DART-noised when method = dart).
DemoSetResult gen_demos(const RunConfig& cfg);

// SPARTN or homography augmentation of the demos; refuses bc and dart.
Manifest augment_demos(const RunConfig& cfg);

// Training samples from demo directories and augmented-transition directories.
std::vector<TrainingSample> load_demo_samples(const std::filesystem::path& demos_dir,
                                              const PolicyShape& shape, const ActionBounds& bounds,
                                              std::size_t* clamped = nullptr);
std::vector<TrainingSample> load_augmented_samples(const std::filesystem::path& aug_dir,
                                                   const PolicyShape& shape, const ActionBounds& bounds,
                                                   std::size_t* clamped = nullptr);

struct TrainedPolicy {
  std::uint64_t seed = 0;
  std::filesystem::path path;
  double final_loss = 0.0;
  std::size_t clamped_targets = 0;  // training targets clipped to the action bounds
  std::string content_hash;
};

// One policy per seed in cfg.seeds.
std::vector<TrainedPolicy> train_policies(const RunConfig& cfg);

std::uint64_t policy_seed(const RunConfig& cfg, std::uint64_t seed);
std::uint64_t eval_seed(const RunConfig& cfg, std::uint64_t seed);

struct SeedEval {
  std::uint64_t seed = 0;
  EvalReport report;
  std::filesystem::path path;
};

std::vector<SeedEval> eval_policies(const RunConfig& cfg);

void write_eval_csv(const std::filesystem::path& path, std::uint64_t seed, const EvalReport& r);
// Success rate and episode count from an evaluation file.
std::pair<double, std::size_t> read_eval_csv(const std::filesystem::path& path);

struct MethodRun {
  std::string method;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
};

struct ReportRow {
  std::string method;
  std::size_t seeds = 0;
  double mean = 0.0;
  std::optional<double> se;  // sample std / sqrt(seeds); absent for a single seed
};

std::vector<ReportRow> aggregate(const std::vector<MethodRun>& runs);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_text(const std::vector<ReportRow>& rows);

// Collects every evaluation file under each root's eval/ and writes report.csv
// and report.txt into the first root.
std::vector<ReportRow> write_report(const std::vector<std::filesystem::path>& roots);

}  // namespace spartn

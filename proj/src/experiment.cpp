#include "spartn/experiment.hpp"

#include "spartn/collect.hpp"
#include "spartn/dataset.hpp"
#include "spartn/errors.hpp"
#include "spartn/rng.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace spartn {
namespace fs = std::filesystem;
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidArgument("bad value for " + key + ": '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidArgument("bad boolean for " + key + ": '" + text + "'");
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct Binding {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Binding number(const std::string& key, T& ref) {
  return {key, [&ref, key](const std::string& v) { ref = parse_number<T>(key, v); },
          [&ref] { return format_number(ref); }};
}

Binding flag(const std::string& key, bool& ref) {
  return {key, [&ref, key](const std::string& v) { ref = parse_bool(key, v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

// Inclusive step index; -1 leaves the window at the pre-grasp segment.
Binding window_edge(const std::string& key, RunConfig& c, bool first) {
  return {key,
          [&c, key, first](const std::string& v) {
            const long long k = parse_number<long long>(key, v);
            if (k < 0) {
              c.augment.window.reset();
              return;
            }
            StepWindow w = c.augment.window.value_or(StepWindow{});
            if (first) {
              w.begin = static_cast<std::size_t>(k);
              if (w.end <= w.begin) w.end = w.begin + 1;
            } else {
              w.end = static_cast<std::size_t>(k) + 1;
            }
            c.augment.window = w;
          },
          [&c, first] {
            if (!c.augment.window) return std::string("-1");
            return std::to_string(first ? c.augment.window->begin : c.augment.window->end - 1);
          }};
}

std::vector<Binding> bindings(RunConfig& c) {
  std::vector<Binding> b;
  b.push_back({"run.workspace", [&c](const std::string& v) { c.workspace = trim(v); },
               [&c] { return c.workspace.string(); }});
  b.push_back({"run.experiment", [&c](const std::string& v) { c.experiment = trim(v); },
               [&c] { return c.experiment; }});
  b.push_back({"run.method", [&c](const std::string& v) { c.method = parse_method(trim(v)); },
               [&c] { return method_name(c.method); }});
  b.push_back({"run.seeds",
               [&c](const std::string& v) {
                 c.seeds.clear();
                 std::stringstream ss(v);
                 std::string item;
                 while (std::getline(ss, item, ',')) {
                   if (!trim(item).empty()) c.seeds.push_back(parse_number<std::uint64_t>("run.seeds", item));
                 }
               },
               [&c] {
                 std::string s;
                 for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                 return s;
               }});
  b.push_back(number("run.root_seed", c.root_seed));
  b.push_back(number("run.parallelism", c.parallelism));

  b.push_back(number("env.horizon", c.env.horizon));
  b.push_back(number("env.distractors", c.env.distractors));
  b.push_back(number("env.grasp_radius", c.env.grasp_radius));
  b.push_back(number("env.lift_height", c.env.lift_height));
  b.push_back(number("env.target_region", c.env.target_region));
  b.push_back(number("env.distractor_region", c.env.distractor_region));
  b.push_back(number("env.start_offset_xy", c.env.start_offset_xy));
  b.push_back(number("env.start_height_min", c.env.start_height_min));
  b.push_back(number("env.start_height_max", c.env.start_height_max));
  b.push_back(number("env.start_yaw", c.env.start_yaw));
  b.push_back(number("env.start_tilt", c.env.start_tilt));
  b.push_back(number("env.bound_rotation", c.env.bounds.rotation));
  b.push_back(number("env.bound_translation", c.env.bounds.translation));

  b.push_back(number("demos.count", c.n_demos));
  b.push_back(number("demos.max_attempts", c.max_demo_attempts));
  b.push_back(number("demos.dart_alpha", c.dart_noise.alpha));
  b.push_back(number("demos.dart_beta", c.dart_noise.beta_t));

  b.push_back(number("field.resolution", c.field.resolution));
  b.push_back(number("field.iters", c.field.iters));
  b.push_back(number("field.rays_per_step", c.field.rays_per_step));
  b.push_back(number("field.samples_per_ray", c.field.render.samples_per_ray));
  b.push_back(number("field.lr_density", c.field.lr_density));
  b.push_back(number("field.lr_color", c.field.lr_color));
  b.push_back(number("field.lr_final_fraction", c.field.lr_final_fraction));
  b.push_back(flag("field.sfm", c.use_sfm));
  auto sfm_number = [&c](const std::string& key, double SfmSimulation::*member) {
    return Binding{key, [&c, key, member](const std::string& v) { c.sfm.*member = parse_number<double>(key, v); },
                   [&c, member] { return format_number(c.sfm.*member); }};
  };
  b.push_back(sfm_number("field.sfm_scale", &SfmSimulation::scale_beta));
  b.push_back(sfm_number("field.sfm_translation_sigma", &SfmSimulation::translation_sigma));
  b.push_back(sfm_number("field.sfm_rotation_sigma", &SfmSimulation::rotation_sigma));

  b.push_back(number("augment.n_aug", c.augment.n_aug));
  b.push_back(number("augment.alpha", c.augment.noise.alpha));
  b.push_back(number("augment.beta", c.augment.noise.beta_t));
  b.push_back(window_edge("augment.window_first", c, true));
  b.push_back(window_edge("augment.window_last", c, false));
  b.push_back(number("augment.samples_per_ray", c.augment.render.samples_per_ray));

  b.push_back(number("train.steps", c.train.steps));
  b.push_back(number("train.batch", c.train.batch));
  b.push_back(number("train.lr", c.train.lr));
  b.push_back(number("train.lr_final_fraction", c.train.lr_final_fraction));
  b.push_back(number("train.mix_ratio", c.train.mix_ratio));
  b.push_back(flag("train.image_aug", c.train.image_aug.enabled));

  b.push_back(number("eval.episodes", c.eval_episodes));
  return b;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_dir(const fs::path& dir, const std::string& what, const std::string& command) {
  if (!fs::is_directory(dir)) {
    throw InvalidArgument(what + " not found at " + dir.string() + "; run `" + command + "` first");
  }
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Bc: return "bc";
    case Method::Dart: return "dart";
    case Method::Ha: return "ha";
    case Method::Spartn: return "spartn";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "bc") return Method::Bc;
  if (name == "dart") return Method::Dart;
  if (name == "ha") return Method::Ha;
  if (name == "spartn") return Method::Spartn;
  throw InvalidArgument("unknown method '" + name + "' (expected bc, dart, ha or spartn)");
}

RunConfig::RunConfig() {
  // Desk-scale field: coarser grid and fewer iterations than the library default.
  field.resolution = 64;
  field.iters = 300;
  field.rays_per_step = 1024;
  field.render.samples_per_ray = 48;
  augment.n_aug = 10;
  augment.render.samples_per_ray = 48;
  train.steps = 3000;
}

void RunConfig::validate() const {
  if (seeds.empty()) throw InvalidArgument("run.seeds must not be empty");
  if (experiment.empty()) throw InvalidArgument("run.experiment must not be empty");
  env.validate();
  if (n_demos == 0) throw InvalidArgument("demos.count must be positive");
  dart_noise.validate();
  if (field.resolution < 2 || field.iters < 0 || field.rays_per_step <= 0 ||
      field.render.samples_per_ray <= 0) {
    throw InvalidArgument("bad field config");
  }
  augment.validate();
  if (train.steps < 0 || train.batch <= 0 || !(train.lr > 0.0) || train.mix_ratio < 0.0 ||
      train.mix_ratio > 1.0) {
    throw InvalidArgument("bad train config");
  }
  if (eval_episodes == 0) throw InvalidArgument("eval.episodes must be positive");
  if (use_sfm && !(sfm.scale_beta > 0.0)) throw InvalidScale("field.sfm_scale must be positive");
}

fs::path RunConfig::demos_dir() const { return root() / (method == Method::Dart ? "demos_dart" : "demos"); }

fs::path RunConfig::aug_dir() const { return root() / ("aug_" + method_name(method)); }

fs::path RunConfig::policy_path(std::uint64_t seed) const {
  return root() / "policies" / (method_name(method) + "_seed" + std::to_string(seed) + ".bin");
}

fs::path RunConfig::eval_path(std::uint64_t seed) const {
  return root() / "eval" / (method_name(method) + "_seed" + std::to_string(seed) + ".csv");
}

std::string RunConfig::dump() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& b : bindings(copy)) out += b.key + " = " + b.get() + "\n";
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("override must look like section.key=value: " + assignment);
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = assignment.substr(eq + 1);
  for (auto& b : bindings(cfg)) {
    if (b.key == key) {
      b.set(value);
      return;
    }
  }
  throw InvalidArgument("unknown config key '" + key + "'");
}

RunConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (path) {
    if (!fs::exists(*path)) throw InvalidArgument("config file not found: " + path->string());
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(path->string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw FormatError(std::string("config parse error: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw InvalidArgument("setting outside a section: " + section);
      for (const auto& [key, value] : body) apply_setting(cfg, section + "." + key + "=" + value.data());
    }
  }
  for (const auto& o : overrides) apply_setting(cfg, o);
  if (const char* ws = std::getenv(kWorkspaceEnv); ws && *ws) cfg.workspace = ws;
  cfg.validate();
  return cfg;
}

DemoSetResult gen_demos(const RunConfig& cfg) {
  cfg.validate();
  DemoSetResult res;
  res.dir = cfg.demos_dir();
  fs::path tmp = res.dir;
  tmp += ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  std::optional<DartNoise> dart;
  if (cfg.method == Method::Dart) dart = DartNoise{cfg.dart_noise, std::nullopt};
  const std::size_t cap = cfg.max_demo_attempts ? cfg.max_demo_attempts : 4 * cfg.n_demos;
  while (res.count < cfg.n_demos && res.attempts < cap) {
    const std::uint64_t seed = derive_seed(cfg.root_seed, "demo", {res.attempts});
    ++res.attempts;
    try {
      const Demonstration demo = collect_demo(cfg.env, seed, dart);
      write_demo(tmp / demo_dir_name(res.count), demo);
      ++res.count;
    } catch (const EpisodeFailed&) {
    }
  }
  if (res.count < cfg.n_demos) {
    fs::remove_all(tmp);
    throw EpisodeFailed("only " + std::to_string(res.count) + " of " + std::to_string(cfg.n_demos) +
                        " demonstrations succeeded in " + std::to_string(res.attempts) + " attempts");
  }
  fs::remove_all(res.dir);
  fs::rename(tmp, res.dir);
  res.content_hash = hash_directory(res.dir);
  return res;
}

Manifest augment_demos(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.method == Method::Bc || cfg.method == Method::Dart) {
    throw InvalidArgument("method " + method_name(cfg.method) + " has nothing to augment (use spartn or ha)");
  }
  const fs::path demos = cfg.root() / "demos";
  require_dir(demos, "demonstrations", "gen-demos");
  const auto dirs = list_subdirs(demos, "demo_");
  if (dirs.empty()) throw EmptyDataset("no demonstrations in " + demos.string());
  DatasetJob job;
  job.method = cfg.method == Method::Spartn ? AugmentMethod::Spartn : AugmentMethod::Homography;
  job.augment = cfg.augment;
  job.augment.seed = derive_seed(cfg.root_seed, "augment");
  job.field.train = cfg.field;
  if (cfg.use_sfm) job.sfm = cfg.sfm;
  job.parallelism = cfg.parallelism;
  Manifest m = build_augmented_dataset(dirs, cfg.aug_dir(), job);
  if (std::none_of(m.demos.begin(), m.demos.end(), [](const DemoSummary& s) { return s.ok; })) {
    throw EpisodeFailed("augmentation failed for every demonstration: " + m.demos.front().error);
  }
  return m;
}

std::vector<TrainingSample> load_demo_samples(const fs::path& demos_dir, const PolicyShape& shape,
                                              const ActionBounds& bounds, std::size_t* clamped) {
  std::vector<TrainingSample> out;
  for (const auto& dir : list_subdirs(demos_dir, "demo_")) {
    const Demonstration demo = read_demo(dir);
    for (const auto& s : demo.steps) out.push_back(make_sample(s.image, s.action, s.gripper_closed, shape, bounds, clamped));
  }
  return out;
}

std::vector<TrainingSample> load_augmented_samples(const fs::path& aug_dir, const PolicyShape& shape,
                                                   const ActionBounds& bounds, std::size_t* clamped) {
  std::vector<TrainingSample> out;
  for (const auto& dir : list_subdirs(aug_dir, "aug_")) {
    for (const auto& r : read_transitions(dir / "frames")) {
      out.push_back(make_sample(read_ppm(dir / r.image_file), r.action, r.gripper_closed, shape, bounds, clamped));
    }
  }
  return out;
}

std::uint64_t policy_seed(const RunConfig& cfg, std::uint64_t seed) {
  return derive_seed(cfg.root_seed, "policy", {seed});
}

std::uint64_t eval_seed(const RunConfig& cfg, std::uint64_t seed) {
  return derive_seed(cfg.root_seed, "eval", {seed});
}

std::vector<TrainedPolicy> train_policies(const RunConfig& cfg) {
  cfg.validate();
  const fs::path demos = cfg.demos_dir();
  require_dir(demos, "demonstrations", cfg.method == Method::Dart ? "gen-demos --set run.method=dart" : "gen-demos");
  std::size_t clamped = 0;
  const auto original = load_demo_samples(demos, cfg.train.shape, cfg.env.bounds, &clamped);
  if (original.empty()) throw EmptyDataset("no demonstrations in " + demos.string());
  std::vector<TrainingSample> augmented;
  if (cfg.method == Method::Spartn || cfg.method == Method::Ha) {
    if (!fs::exists(cfg.aug_dir() / "manifest")) {
      throw InvalidArgument("augmented dataset not found at " + cfg.aug_dir().string() +
                            "; run `augment --set run.method=" + method_name(cfg.method) + "` first");
    }
    augmented = load_augmented_samples(cfg.aug_dir(), cfg.train.shape, cfg.env.bounds, &clamped);
  }
  fs::create_directories(cfg.root() / "policies");
  std::vector<TrainedPolicy> out;
  for (const auto s : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = policy_seed(cfg, s);
    const TrainResult r = train(original, augmented.empty() ? nullptr : &augmented, tc, cfg.env.bounds);
    TrainedPolicy p;
    p.seed = s;
    p.path = cfg.policy_path(s);
    fs::path tmp = p.path;
    tmp += ".partial";
    r.net.save(tmp);
    fs::rename(tmp, p.path);
    std::ostringstream curve;
    curve << "step,loss\n" << std::setprecision(9);
    for (std::size_t i = 0; i < r.losses.size(); ++i) curve << i << ',' << r.losses[i] << '\n';
    fs::path loss_file = p.path;
    loss_file.replace_extension(".loss.csv");
    atomic_write_text(loss_file, curve.str());
    p.clamped_targets = clamped;
    p.final_loss = r.losses.empty() ? 0.0 : r.losses.back();
    p.content_hash = sha256_hex(read_text(p.path));
    out.push_back(p);
  }
  return out;
}

void write_eval_csv(const fs::path& path, std::uint64_t seed, const EvalReport& r) {
  std::ostringstream out;
  out << "seed,episode,env_seed,success,steps,collision\n";
  for (const auto& e : r.episodes) {
    out << seed << ',' << e.episode << ',' << e.env_seed << ',' << (e.success ? 1 : 0) << ',' << e.steps << ','
        << (e.collision ? 1 : 0) << '\n';
  }
  fs::create_directories(path.parent_path());
  atomic_write_text(path, out.str());
}

std::pair<double, std::size_t> read_eval_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::size_t n = 0, wins = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 6) throw FormatError("bad evaluation row in " + path.string() + ": " + line);
    ++n;
    wins += parse_number<int>("success", cols[3]) != 0;
  }
  if (n == 0) throw FormatError("no episodes in " + path.string());
  return {static_cast<double>(wins) / static_cast<double>(n), n};
}

std::vector<SeedEval> eval_policies(const RunConfig& cfg) {
  cfg.validate();
  std::vector<SeedEval> out;
  for (const auto s : cfg.seeds) {
    const fs::path ckpt = cfg.policy_path(s);
    if (!fs::exists(ckpt)) {
      throw InvalidArgument("policy checkpoint not found at " + ckpt.string() + "; run `train --set run.method=" +
                            method_name(cfg.method) + "` first");
    }
    const PolicyNet net = PolicyNet::load(ckpt);
    SeedEval e;
    e.seed = s;
    e.report = evaluate(as_policy(net), cfg.env, cfg.eval_episodes, eval_seed(cfg, s), cfg.parallelism);
    e.path = cfg.eval_path(s);
    write_eval_csv(e.path, s, e.report);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ReportRow> aggregate(const std::vector<MethodRun>& runs) {
  std::map<std::string, std::vector<double>> by_method;
  for (const auto& r : runs) by_method[r.method].push_back(r.success_rate);
  std::vector<ReportRow> rows;
  for (const auto& [method, rates] : by_method) {
    ReportRow row;
    row.method = method;
    row.seeds = rates.size();
    double sum = 0.0;
    for (double v : rates) sum += v;
    row.mean = sum / static_cast<double>(rates.size());
    if (rates.size() > 1) {
      double ss = 0.0;
      for (double v : rates) ss += (v - row.mean) * (v - row.mean);
      const double sd = std::sqrt(ss / static_cast<double>(rates.size() - 1));
      row.se = sd / std::sqrt(static_cast<double>(rates.size()));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "method,seeds,mean_success,se\n" << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.method << ',' << r.seeds << ',' << r.mean << ',';
    if (r.se) out << *r.se;
    out << '\n';
  }
  return out.str();
}

std::string report_text(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.method << std::right << std::setw(6) << 100.0 * r.mean << "%";
    if (r.se) out << " +/- " << 100.0 * *r.se;
    out << "  (" << r.seeds << (r.seeds == 1 ? " seed)" : " seeds)") << '\n';
  }
  return out.str();
}

std::vector<ReportRow> write_report(const std::vector<fs::path>& roots) {
  if (roots.empty()) throw InvalidArgument("report needs at least one experiment");
  std::vector<MethodRun> runs;
  for (const auto& root : roots) {
    const fs::path dir = root / "eval";
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const auto pos = stem.rfind("_seed");
      if (pos == std::string::npos) continue;
      MethodRun r;
      r.method = stem.substr(0, pos);
      r.seed = parse_number<std::uint64_t>("seed", stem.substr(pos + 5));
      r.success_rate = read_eval_csv(f).first;
      runs.push_back(r);
    }
  }
  if (runs.empty()) throw InvalidArgument("no evaluation results found; run `eval` first");
  const auto rows = aggregate(runs);
  atomic_write_text(roots.front() / "report.csv", report_csv(rows));
  atomic_write_text(roots.front() / "report.txt", report_text(rows));
  return rows;
}

}  // namespace spartn

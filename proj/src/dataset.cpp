#include "spartn/dataset.hpp"

#include "spartn/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

namespace fs = std::filesystem;

namespace spartn {
namespace {

std::string image_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%03zu.ppm", k);
  return buf;
}

void write_transform(std::ostream& out, const Transform& t) { out << t; }

Transform read_transform(std::istream& in) {
  std::array<double, 12> v{};
  for (double& x : v) {
    if (!(in >> x)) throw FormatError("truncated transform");
  }
  return Transform::from_row_major(v);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr);
  }
  void update(const std::string& s) { EVP_DigestUpdate(ctx_.get(), s.data(), s.size()); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return ss.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

void Demonstration::validate() const {
  bool closed = false;
  for (const auto& s : steps) {
    if (s.image.width() != intrinsics.width || s.image.height() != intrinsics.height) {
      throw DimensionMismatch("demonstration image does not match intrinsics");
    }
    if (closed && !s.gripper_closed) throw InvalidArgument("gripper reopens within demonstration");
    closed = closed || s.gripper_closed;
  }
}

std::string demo_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "demo_%04zu", index);
  return buf;
}

std::string aug_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "aug_%04zu", index);
  return buf;
}

std::vector<fs::path> list_subdirs(const fs::path& root, const std::string& prefix) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind(prefix, 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_demo(const fs::path& dir, const Demonstration& demo) {
  fs::create_directories(dir);
  {
    std::ofstream meta(dir / "meta");
    if (!meta) throw FormatError("cannot write " + (dir / "meta").string());
    const auto& in = demo.intrinsics;
    meta << std::setprecision(17);
    meta << "intrinsics " << in.fx << ' ' << in.fy << ' ' << in.cx << ' ' << in.cy << ' '
         << in.width << ' ' << in.height << '\n';
    meta << "e_T_c " << demo.e_T_c << '\n';
    meta << "scene_seed " << demo.scene_seed << '\n';
    meta << "steps " << demo.steps.size() << '\n';
  }
  write_mask(dir / "mask.pgm", demo.mask);
  std::ofstream frames(dir / "frames");
  frames << std::setprecision(17);
  for (std::size_t k = 0; k < demo.steps.size(); ++k) {
    const auto& s = demo.steps[k];
    const std::string img = image_name(k);
    write_ppm(dir / img, s.image);
    frames << k << "  ";
    write_transform(frames, s.w_T_e);
    frames << "  ";
    write_transform(frames, s.action);
    frames << "  " << (s.gripper_closed ? 1 : 0) << ' ' << img << '\n';
  }
}

Demonstration read_demo(const fs::path& dir) {
  Demonstration demo;
  std::ifstream meta(dir / "meta");
  if (!meta) throw FormatError("missing meta in " + dir.string());
  std::string key;
  std::size_t steps = 0;
  while (meta >> key) {
    if (key == "intrinsics") {
      auto& in = demo.intrinsics;
      meta >> in.fx >> in.fy >> in.cx >> in.cy >> in.width >> in.height;
    } else if (key == "e_T_c") {
      demo.e_T_c = read_transform(meta);
    } else if (key == "scene_seed") {
      meta >> demo.scene_seed;
    } else if (key == "steps") {
      meta >> steps;
    } else {
      throw FormatError("unknown meta key " + key);
    }
  }
  demo.mask = read_mask(dir / "mask.pgm");
  std::ifstream frames(dir / "frames");
  std::string line;
  while (std::getline(frames, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t k = 0;
    row >> k;
    DemoStep s;
    s.w_T_e = read_transform(row);
    s.action = read_transform(row);
    int g = 0;
    std::string img;
    if (!(row >> g >> img)) throw FormatError("bad frame row in " + dir.string());
    s.gripper_closed = g != 0;
    s.image = read_ppm(dir / img);
    demo.steps.push_back(std::move(s));
  }
  if (demo.steps.size() != steps) throw FormatError("frame count disagrees with meta in " + dir.string());
  return demo;
}

void write_transitions(const fs::path& file, const std::vector<TransitionRecord>& rows) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.k << ' ' << r.sample << "  ";
    write_transform(out, r.pose);
    out << "  ";
    write_transform(out, r.action);
    out << "  " << (r.gripper_closed ? 1 : 0) << ' ' << r.image_file << '\n';
  }
  atomic_write_text(file, out.str());
}

std::vector<TransitionRecord> read_transitions(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open " + file.string());
  std::vector<TransitionRecord> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    TransitionRecord r;
    row >> r.k >> r.sample;
    r.pose = read_transform(row);
    r.action = read_transform(row);
    int g = 0;
    if (!(row >> g >> r.image_file)) throw FormatError("bad transition row in " + file.string());
    r.gripper_closed = g != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes);
  return h.hex();
}

std::string hash_directory(const fs::path& root) {
  std::map<std::string, fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.emplace(fs::relative(e.path(), root).generic_string(), e.path());
  }
  Sha256 h;
  for (const auto& [rel, path] : files) {
    h.update(rel);
    h.update(std::string(1, '\0'));
    h.update(read_file(path));
  }
  return h.hex();
}

void atomic_write_text(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

}  // namespace spartn

#include "spartn/image.hpp"

#include "spartn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace spartn {
namespace {

void check_same_size(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DimensionMismatch("image sizes differ: " + std::to_string(a.width()) + "x" +
                            std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                            "x" + std::to_string(b.height()));
  }
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void read_header(std::istream& in, const std::string& magic, int& w, int& h) {
  std::string m;
  int maxval = 0;
  in >> m >> w >> h >> maxval;
  if (m != magic || w <= 0 || h <= 0 || maxval != 255) throw FormatError("bad " + magic + " header");
  in.get();
}

}  // namespace

Image::Image(int width, int height, const Color& fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * 3) {
  if (width <= 0 || height <= 0) throw InvalidArgument("image dimensions must be positive");
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = static_cast<float>(fill.x());
    data_[i + 1] = static_cast<float>(fill.y());
    data_[i + 2] = static_cast<float>(fill.z());
  }
}

std::size_t PixelMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

double mse(const Image& a, const Image& b) {
  check_same_size(a, b);
  const auto da = a.data();
  const auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    sum += d * d;
  }
  return sum / static_cast<double>(da.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double psnr_masked(const Image& a, const Image& b, const std::vector<bool>& valid) {
  check_same_size(a, b);
  if (valid.size() != a.pixel_count()) throw DimensionMismatch("validity mask size mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!valid[static_cast<std::size_t>(y) * a.width() + x]) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a.channel(x, y, c)) - b.channel(x, y, c);
        sum += d * d;
      }
      n += 3;
    }
  }
  if (n == 0) throw InvalidArgument("no valid pixels");
  if (sum == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(n) / sum);
}

Color border_mean(const Image& img) {
  Color sum = Color::Zero();
  std::size_t n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (x != 0 && y != 0 && x != img.width() - 1 && y != img.height() - 1) continue;
      sum += img.at(x, y);
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

Image downsample(const Image& img, int factor) {
  if (factor <= 0 || img.width() % factor != 0 || img.height() % factor != 0) {
    throw DimensionMismatch("downsample factor must divide image size");
  }
  Image out(img.width() / factor, img.height() / factor);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      Color sum = Color::Zero();
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) sum += img.at(x * factor + dx, y * factor + dy);
      }
      out.set(x, y, sum * inv);
    }
  }
  return out;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (float& v : out.data()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<char> bytes(img.data().size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(),
                 [](float v) { return static_cast<char>(to_byte(v)); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  int w = 0;
  int h = 0;
  read_header(in, "P6", w, h);
  Image img(w, h);
  std::vector<unsigned char> bytes(img.data().size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError("truncated image " + path.string());
  std::transform(bytes.begin(), bytes.end(), img.data().begin(),
                 [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
  return img;
}

void write_mask(const std::filesystem::path& path, const PixelMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) out.put(mask.at(x, y) ? char(255) : char(0));
  }
}

PixelMask read_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  int w = 0;
  int h = 0;
  read_header(in, "P5", w, h);
  PixelMask mask(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int b = in.get();
      if (b == EOF) throw FormatError("truncated mask " + path.string());
      mask.set(x, y, b != 0);
    }
  }
  return mask;
}

}  // namespace spartn

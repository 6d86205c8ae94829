#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace spartn {

using Color = Eigen::Vector3d;

// Row-major RGB image with channels in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, const Color& fill = Color::Zero());

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  Color at(int x, int y) const {
    const float* p = &data_[index(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, const Color& c) {
    float* p = &data_[index(x, y)];
    p[0] = static_cast<float>(c.x());
    p[1] = static_cast<float>(c.y());
    p[2] = static_cast<float>(c.z());
  }
  float channel(int x, int y, int c) const { return data_[index(x, y) + c]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Binary mask; 1 marks gripper pixels.
class PixelMask {
 public:
  PixelMask() = default;
  PixelMask(int width, int height) : width_(width), height_(height), bits_(pixel_count(), 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  std::size_t count() const;

  bool operator==(const PixelMask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Identical images yield +infinity.
double psnr(const Image& a, const Image& b);
double mse(const Image& a, const Image& b);

// PSNR restricted to pixels where `valid` is true.
double psnr_masked(const Image& a, const Image& b, const std::vector<bool>& valid);

// Mean of the one-pixel border, used as a background/fill estimate.
Color border_mean(const Image& img);

// Box-filter downsampling by an integer factor.
Image downsample(const Image& img, int factor);

// Round to the nearest 8-bit level, as stored on disk.
Image quantize8(const Image& img);

// Binary PPM (P6), 8-bit RGB.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

// Binary PGM (P5) for masks (0 / 255).
void write_mask(const std::filesystem::path& path, const PixelMask& mask);
PixelMask read_mask(const std::filesystem::path& path);

}  // namespace spartn

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace touchadd {

inline constexpr int kMinImageSide = 16;

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Rounds a value on the 0..255 scale half-up and saturates to a byte.
std::uint8_t to_byte(double v) noexcept;

/// 8-bit RGB image, row-major interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  Rgb at(int x, int y) const noexcept {
    const std::size_t i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    const std::size_t i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  /// Channel value in [0, 1].
  double unit(int x, int y, int c) const noexcept { return pixels_[index(x, y) + c] / 255.0; }

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }
  std::vector<std::uint8_t>& bytes() noexcept { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Single-channel float map (masks, conditioning channels).
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, float fill = 0.0f)
      : width_(width), height_(height), values_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  float at(int x, int y) const noexcept { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) noexcept { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<float>& values() const noexcept { return values_; }
  std::vector<float>& values() noexcept { return values_; }

  double sum() const noexcept;

  bool operator==(const Plane&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
};

/// Bilinear resampling with pixel-center alignment. Identity when sizes match.
Image resize_bilinear(const Image& src, int width, int height);

/// Nearest-neighbour resampling; keeps binary masks binary.
Plane resize_nearest(const Plane& src, int width, int height);

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_png(const Plane& mask);  // 8-bit gray, values scaled by 255
Image decode_png(const std::vector<std::uint8_t>& data);
Plane decode_png_gray(const std::vector<std::uint8_t>& data);

void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Plane& mask);
Image read_png(const std::filesystem::path& path);
Plane read_png_gray(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace touchadd

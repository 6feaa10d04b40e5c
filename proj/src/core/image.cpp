#include "touchadd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

namespace touchadd {

std::uint8_t to_byte(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < kMinImageSide || height < kMinImageSide)
    throw ImageError("image sides must be at least " + std::to_string(kMinImageSide) + " px");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

double Plane::sum() const noexcept {
  return std::accumulate(values_.begin(), values_.end(), 0.0);
}

Image resize_bilinear(const Image& src, int width, int height) {
  if (src.width() == width && src.height() == height) return src;
  Image out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double tx = fx - x0;
      const Rgb a = src.at(x0, y0), b = src.at(x1, y0), c = src.at(x0, y1), d = src.at(x1, y1);
      auto lerp = [&](std::uint8_t pa, std::uint8_t pb, std::uint8_t pc, std::uint8_t pd) {
        const double top = pa + (pb - pa) * tx;
        const double bot = pc + (pd - pc) * tx;
        return to_byte(top + (bot - top) * ty);
      };
      out.set(x, y, {lerp(a.r, b.r, c.r, d.r), lerp(a.g, b.g, c.g, d.g), lerp(a.b, b.b, c.b, d.b)});
    }
  }
  return out;
}

Plane resize_nearest(const Plane& src, int width, int height) {
  if (src.width() == width && src.height() == height) return src;
  Plane out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * src.height() / height), src.height() - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * src.width() / width), src.width() - 1);
      out.at(x, y) = src.at(sx, sy);
    }
  }
  return out;
}

namespace {

struct ReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg ? msg : "png error";
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

void png_write_fn(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void png_flush_fn(png_structp) {}

void png_read_fn(png_structp png, png_bytep data, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->size) png_error(png, "truncated PNG data");
  std::memcpy(data, cur->data + cur->offset, len);
  cur->offset += len;
}

std::vector<std::uint8_t> encode_raw(const std::uint8_t* pixels, int width, int height,
                                     int channels) {
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw ImageError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<png_const_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError("PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, png_write_fn, png_flush_fn);
  png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    rows[y] = pixels + static_cast<std::size_t>(y) * width * channels;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

Decoded decode_raw(const std::vector<std::uint8_t>& data, bool gray) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0)
    throw ImageError("not a PNG stream");
  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw ImageError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{data.data(), data.size(), 0};
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError("PNG decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, png_read_fn);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  if (gray) {
    if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  } else if (!(color & PNG_COLOR_MASK_COLOR)) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.channels = png_get_channels(png, info);
  out.pixels.resize(static_cast<std::size_t>(w) * h * out.channels);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * w * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty()) throw ImageError("cannot encode an empty image");
  return encode_raw(image.bytes().data(), image.width(), image.height(), 3);
}

std::vector<std::uint8_t> encode_png(const Plane& mask) {
  std::vector<std::uint8_t> gray(mask.values().size());
  std::transform(mask.values().begin(), mask.values().end(), gray.begin(),
                 [](float v) { return to_byte(static_cast<double>(v) * 255.0); });
  return encode_raw(gray.data(), mask.width(), mask.height(), 1);
}

Image decode_png(const std::vector<std::uint8_t>& data) {
  Decoded d = decode_raw(data, false);
  if (d.channels != 3) throw ImageError("unexpected PNG channel count");
  Image img(d.width, d.height);
  img.bytes() = std::move(d.pixels);
  return img;
}

Plane decode_png_gray(const std::vector<std::uint8_t>& data) {
  Decoded d = decode_raw(data, true);
  if (d.channels != 1) throw ImageError("unexpected PNG channel count");
  Plane p(d.width, d.height);
  std::transform(d.pixels.begin(), d.pixels.end(), p.values().begin(),
                 [](std::uint8_t v) { return static_cast<float>(v / 255.0); });
  return p;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const Plane& mask) {
  write_file(path, encode_png(mask));
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Plane read_png_gray(const std::filesystem::path& path) { return decode_png_gray(read_file(path)); }

}  // namespace touchadd

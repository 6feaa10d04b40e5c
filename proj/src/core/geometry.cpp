#include "touchadd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace touchadd {

NormalizedBBox NormalizedBBox::make(double x_c, double y_c, double w, double h) {
  NormalizedBBox box{x_c, y_c, w, h};
  if (!box.valid()) throw GeometryError("invalid normalized box " + to_string(box));
  return box;
}

bool NormalizedBBox::valid() const noexcept {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(x_c) || !finite(y_c) || !finite(w) || !finite(h)) return false;
  return x_c >= 0.0 && x_c <= 1.0 && y_c >= 0.0 && y_c <= 1.0 && w > 0.0 && w <= 1.0 &&
         h > 0.0 && h <= 1.0;
}

Corners NormalizedBBox::clamped_corners() const noexcept {
  Corners c = corners();
  c.x0 = std::clamp(c.x0, 0.0, 1.0);
  c.y0 = std::clamp(c.y0, 0.0, 1.0);
  c.x1 = std::clamp(c.x1, 0.0, 1.0);
  c.y1 = std::clamp(c.y1, 0.0, 1.0);
  return c;
}

std::string to_string(const NormalizedBBox& box) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "[%.4f, %.4f, %.4f, %.4f]", box.x_c, box.y_c, box.w, box.h);
  return buf;
}

const char* frame_name(Frame f) noexcept {
  return f == Frame::kPixel ? "pixel" : "normalized";
}

Frame parse_frame(const std::string& name) {
  if (name == "pixel") return Frame::kPixel;
  if (name == "normalized") return Frame::kNormalized;
  throw GeometryError("unknown touch frame '" + name + "'");
}

bool TouchPoint::in_bounds(int width, int height) const noexcept {
  if (!std::isfinite(x) || !std::isfinite(y)) return false;
  if (frame == Frame::kNormalized) return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0;
  return x >= 0.0 && x < width && y >= 0.0 && y < height;
}

TouchPoint TouchPoint::to_normalized(int width, int height) const {
  if (!in_bounds(width, height)) throw GeometryError("touch point outside image bounds");
  if (frame == Frame::kNormalized) return *this;
  return normalized(x / width, y / height);
}

TouchPoint TouchPoint::to_pixel(int width, int height) const {
  if (!in_bounds(width, height)) throw GeometryError("touch point outside image bounds");
  if (frame == Frame::kPixel) return *this;
  return pixel(std::min(x * width, std::nextafter(static_cast<double>(width), 0.0)),
               std::min(y * height, std::nextafter(static_cast<double>(height), 0.0)));
}

std::pair<int, int> TouchPoint::pixel_index(int width, int height) const {
  const TouchPoint p = to_pixel(width, height);
  const int px = std::clamp(static_cast<int>(std::floor(p.x)), 0, width - 1);
  const int py = std::clamp(static_cast<int>(std::floor(p.y)), 0, height - 1);
  return {px, py};
}

double iou(const NormalizedBBox& a, const NormalizedBBox& b) noexcept {
  const Corners ca = a.clamped_corners();
  const Corners cb = b.clamped_corners();
  const Corners inter{std::max(ca.x0, cb.x0), std::max(ca.y0, cb.y0), std::min(ca.x1, cb.x1),
                      std::min(ca.y1, cb.y1)};
  const double i = inter.area();
  const double u = ca.area() + cb.area() - i;
  if (u <= 0.0) return 0.0;
  return std::clamp(i / u, 0.0, 1.0);
}

int quantize_coord(double v, int bins) {
  if (bins <= 0) throw GeometryError("bin count must be positive");
  if (!(v >= 0.0 && v <= 1.0)) throw GeometryError("coordinate outside [0, 1]");
  return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
}

double dequantize_coord(int idx, int bins) {
  if (bins <= 0) throw GeometryError("bin count must be positive");
  if (idx < 0 || idx >= bins) throw GeometryError("coordinate bin out of range");
  return (idx + 0.5) / bins;
}

double sample_centroid_offset(double extent, Rng& rng) {
  const double z = std::clamp(rng.normal(0.0, 1.0 / 3.0), -1.0, 1.0);
  return z * extent / 2.0;
}

namespace {

double clamp_center(double c, double extent) {
  const double lo = std::min(0.5 * extent, 0.5);
  return std::clamp(c, lo, 1.0 - lo);
}

}  // namespace

NormalizedBBox perturb_centroid(const NormalizedBBox& box, Rng& rng) {
  const double dx = sample_centroid_offset(box.w, rng);
  const double dy = sample_centroid_offset(box.h, rng);
  NormalizedBBox out = box;
  out.x_c = clamp_center(box.x_c + dx, box.w);
  out.y_c = clamp_center(box.y_c + dy, box.h);
  return out;
}

NormalizedBBox random_placement(const TouchPoint& touch, const SizeStats& stats, Rng& rng,
                                const RandomPlacementOptions& options) {
  if (touch.frame != Frame::kNormalized || !touch.in_bounds(1, 1))
    throw GeometryError("random placement needs a normalized touch point");

  auto sample_size = [&](double mean, double stddev) {
    double v = rng.normal(mean, stddev);
    for (int i = 0; i < options.max_resamples && v <= 0.0; ++i) v = rng.normal(mean, stddev);
    return std::clamp(v, options.min_size, 1.0);
  };
  const double w = sample_size(stats.mean_w, stats.std_w);
  const double h = sample_size(stats.mean_h, stats.std_h);

  double x = touch.x;
  double y = touch.y;
  if (options.jitter) {
    x += rng.uniform(-0.25 * w, 0.25 * w);
    y += rng.uniform(-0.25 * h, 0.25 * h);
  }
  // Clamping toward [0, 1] only moves the center closer to the touch.
  return NormalizedBBox{std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0), w, h};
}

SizeStats derive_size_stats(std::span<const NormalizedBBox> boxes) {
  if (boxes.empty()) throw GeometryError("cannot derive size statistics from zero boxes");
  const double n = static_cast<double>(boxes.size());
  double sw = 0.0, sh = 0.0;
  for (const auto& b : boxes) {
    sw += b.w;
    sh += b.h;
  }
  SizeStats s;
  s.mean_w = sw / n;
  s.mean_h = sh / n;
  if (boxes.size() > 1) {
    double vw = 0.0, vh = 0.0;
    for (const auto& b : boxes) {
      vw += (b.w - s.mean_w) * (b.w - s.mean_w);
      vh += (b.h - s.mean_h) * (b.h - s.mean_h);
    }
    s.std_w = std::sqrt(vw / (n - 1.0));
    s.std_h = std::sqrt(vh / (n - 1.0));
  }
  return s;
}

NormalizedBBox box_at_touch(const TouchPoint& touch, double w, double h) {
  w = std::clamp(w, 1e-3, 1.0);
  h = std::clamp(h, 1e-3, 1.0);
  return NormalizedBBox{clamp_center(touch.x, w), clamp_center(touch.y, h), w, h};
}

}  // namespace touchadd

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "touchadd/rng.hpp"

namespace touchadd {

/// Coordinate bins per axis used by the placement tokenizer.
inline constexpr int kCoordBins = 100;

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned rectangle in corner form, unit coordinates.
struct Corners {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double area() const { return (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0.0; }
};

/// Center-format box [x_c, y_c, w, h] in unit coordinates.
struct NormalizedBBox {
  double x_c = 0.5;
  double y_c = 0.5;
  double w = 1.0;
  double h = 1.0;

  /// Checked constructor; throws GeometryError if the invariants do not hold.
  static NormalizedBBox make(double x_c, double y_c, double w, double h);

  bool valid() const noexcept;

  Corners corners() const noexcept {
    return {x_c - 0.5 * w, y_c - 0.5 * h, x_c + 0.5 * w, y_c + 0.5 * h};
  }

  /// Corner form intersected with the unit square.
  Corners clamped_corners() const noexcept;

  bool contains(double x, double y) const noexcept {
    const Corners c = corners();
    return x >= c.x0 && x <= c.x1 && y >= c.y0 && y <= c.y1;
  }

  bool operator==(const NormalizedBBox&) const = default;
};

std::string to_string(const NormalizedBBox& box);

enum class Frame { kPixel, kNormalized };

const char* frame_name(Frame f) noexcept;
Frame parse_frame(const std::string& name);

struct TouchPoint {
  double x = 0.5;
  double y = 0.5;
  Frame frame = Frame::kNormalized;

  static TouchPoint normalized(double x, double y) { return {x, y, Frame::kNormalized}; }
  static TouchPoint pixel(double x, double y) { return {x, y, Frame::kPixel}; }

  /// True if the point lies inside an image of the given size. Pixel-frame
  /// points must satisfy 0 <= x < width; normalized points 0 <= x <= 1.
  bool in_bounds(int width, int height) const noexcept;

  TouchPoint to_normalized(int width, int height) const;
  TouchPoint to_pixel(int width, int height) const;

  /// Integer pixel the touch falls on; clamped to the last row/column.
  std::pair<int, int> pixel_index(int width, int height) const;

  bool operator==(const TouchPoint&) const = default;
};

struct SizeStats {
  double mean_w = 0.2;
  double std_w = 0.0;
  double mean_h = 0.2;
  double std_h = 0.0;

  bool operator==(const SizeStats&) const = default;
};

/// Intersection over union of the two boxes after clamping each to the unit
/// square. Two zero-area boxes give 0.
double iou(const NormalizedBBox& a, const NormalizedBBox& b) noexcept;

/// floor(v * bins) clamped to [0, bins - 1]. Throws for v outside [0, 1].
int quantize_coord(double v, int bins = kCoordBins);

/// Center of bin idx: (idx + 0.5) / bins. Throws for idx outside [0, bins).
double dequantize_coord(int idx, int bins = kCoordBins);

/// One draw of Clamp[-1,1](N(0, 1/3)) * extent / 2.
double sample_centroid_offset(double extent, Rng& rng);

/// Moves the center by independent offsets scaled by w and h, keeping the
/// size. The new center is clamped to [w/2, 1 - w/2] x [h/2, 1 - h/2].
NormalizedBBox perturb_centroid(const NormalizedBBox& box, Rng& rng);

struct RandomPlacementOptions {
  bool jitter = true;
  int max_resamples = 8;
  double min_size = 0.01;
};

/// Random Placement baseline: Gaussian sizes from training statistics, center
/// uniformly jittered by at most a quarter of the sampled size around the touch.
NormalizedBBox random_placement(const TouchPoint& touch, const SizeStats& stats, Rng& rng,
                                const RandomPlacementOptions& options = {});

/// Sample mean and (n - 1) standard deviation of widths and heights.
SizeStats derive_size_stats(std::span<const NormalizedBBox> boxes);

/// Box of the given size centered on `touch`, with the center clamped so the
/// box stays inside the unit square.
NormalizedBBox box_at_touch(const TouchPoint& touch, double w, double h);

}  // namespace touchadd

#pragma once

#include <string>
#include <string_view>

#include "touchadd/geometry.hpp"
#include "touchadd/image.hpp"

namespace touchadd {

struct MarkerSpec {
  int size_px = 10;
  double alpha = 0.4;
  Rgb color{255, 0, 0};

  void validate() const;
};

/// Pixel span [begin, end) of a size-wide square around pixel `center`: the
/// center plus ceil(size/2) - 1 pixels before it and floor(size/2) after,
/// clipped to [0, limit).
std::pair<int, int> marker_span(int center, int size, int limit) noexcept;

/// Alpha-blends a square marker onto the image at the touch point. Pixels
/// outside the square are copied unchanged.
Image render_marker(const Image& image, const TouchPoint& touch, const MarkerSpec& spec = {});

/// Binary mask with ones on the size_px square around the touch point.
Plane render_touch_mask(int width, int height, const TouchPoint& touch, int size_px = 12);

inline constexpr std::string_view kPromptPrefix = "Suggest a bounding box to ";
inline constexpr std::string_view kPromptSuffix = " roughly centered at the red dot";

/// Textual query for the placement model; the instruction is inserted verbatim.
std::string build_prompt(std::string_view instruction);

}  // namespace touchadd

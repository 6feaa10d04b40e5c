#include "touchadd/touchprior.hpp"

#include <algorithm>
#include <stdexcept>

namespace touchadd {

void MarkerSpec::validate() const {
  if (size_px < 1) throw std::invalid_argument("marker size must be at least 1 px");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("marker alpha must be in (0, 1]");
}

std::pair<int, int> marker_span(int center, int size, int limit) noexcept {
  const int begin = center - (size + 1) / 2 + 1;
  return {std::max(begin, 0), std::min(begin + size, limit)};
}

Image render_marker(const Image& image, const TouchPoint& touch, const MarkerSpec& spec) {
  spec.validate();
  if (!touch.in_bounds(image.width(), image.height()))
    throw GeometryError("touch point outside image bounds");
  const auto [px, py] = touch.pixel_index(image.width(), image.height());
  const auto [x0, x1] = marker_span(px, spec.size_px, image.width());
  const auto [y0, y1] = marker_span(py, spec.size_px, image.height());

  Image out = image;
  const double a = spec.alpha;
  auto blend = [a](std::uint8_t marker, std::uint8_t in) {
    return to_byte(a * marker + (1.0 - a) * in);
  };
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const Rgb in = image.at(x, y);
      out.set(x, y, {blend(spec.color.r, in.r), blend(spec.color.g, in.g), blend(spec.color.b, in.b)});
    }
  }
  return out;
}

Plane render_touch_mask(int width, int height, const TouchPoint& touch, int size_px) {
  if (size_px < 1) throw std::invalid_argument("touch mask size must be at least 1 px");
  if (!touch.in_bounds(width, height)) throw GeometryError("touch point outside image bounds");
  const auto [px, py] = touch.pixel_index(width, height);
  const auto [x0, x1] = marker_span(px, size_px, width);
  const auto [y0, y1] = marker_span(py, size_px, height);
  Plane mask(width, height, 0.0f);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) mask.at(x, y) = 1.0f;
  return mask;
}

std::string build_prompt(std::string_view instruction) {
  if (instruction.empty()) throw std::invalid_argument("instruction must not be empty");
  std::string prompt;
  prompt.reserve(kPromptPrefix.size() + instruction.size() + kPromptSuffix.size());
  prompt.append(kPromptPrefix).append(instruction).append(kPromptSuffix);
  return prompt;
}

}  // namespace touchadd

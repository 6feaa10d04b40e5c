#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "touchadd/geometry.hpp"
#include "touchadd/image.hpp"
#include "touchadd/placement/model.hpp"

namespace touchadd::placement {

struct PlacementResult {
  std::string reasoning;
  NormalizedBBox bbox;
  bool fallback_used = false;
  std::vector<int> token_ids;
};

/// Marker composite, prompt, greedy decode, parse. Falls back to a box of
/// the training mean size centered at the touch when no coordinate
/// quadruple can be parsed. Throws GeometryError for an out-of-bounds touch.
PlacementResult predict_placement(const ResponseGenerator& model, const Image& image,
                                  std::string_view instruction, const TouchPoint& touch);

/// The marker-composited model input for `image` and `touch`.
Image placement_composite(int model_size, const Image& image, const TouchPoint& touch);

}  // namespace touchadd::placement

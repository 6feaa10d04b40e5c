#pragma once

#include <cstdint>
#include <string_view>

#include "touchadd/editor/model.hpp"
#include "touchadd/editor/schedule.hpp"

namespace touchadd::editor {

struct EditResult {
  Image edited_image;
  Plane instance_mask;
  Image blended_image;
};

/// mask * edited + (1 - mask) * source per channel, rounded half-up.
Image blend(const Image& source, const Image& edited, const Plane& mask);

/// Full ancestral reverse chain from pure noise. The instance mask is the
/// sigmoid of the mask head at the final step. Sources at another size are
/// resized to the model resolution and the outputs stay at that resolution.
EditResult sample_edit(const EditorModel& model, const Image& source, std::string_view instruction,
                       const NormalizedBBox& bbox, const DiffusionSchedule& schedule, std::uint64_t seed);

/// The same chain for a touch-conditioned model.
EditResult sample_edit_touch_ablation(const EditorModel& model, const Image& source,
                                      std::string_view instruction, const TouchPoint& touch,
                                      const DiffusionSchedule& schedule, std::uint64_t seed);

}  // namespace touchadd::editor

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "touchadd/app/config.hpp"
#include "touchadd/datagen.hpp"
#include "touchadd/editor/train.hpp"
#include "touchadd/eval/compare.hpp"
#include "touchadd/placement/train.hpp"

namespace touchadd::app {

datagen::DatasetConfig dataset_config(const Config& cfg);
placement::PlacementTrainConfig placement_train_config(const Config& cfg);
editor::EditorTrainConfig editor_train_config(const Config& cfg);

struct GeneratedData {
  std::filesystem::path dataset_dir;     // train + val
  std::filesystem::path benchmark_file;  // bench split, referencing bench/ images
};

/// Writes <out>/dataset, <out>/bench and <out>/benchmark.json.
GeneratedData generate_data(const Config& cfg, std::uint64_t seed, const std::filesystem::path& out);

eval::Method random_method(const SizeStats& stats);
/// Placement by the model; when `editor` is set the predicted box is also
/// passed to sample_edit.
eval::Method placement_method(std::string name, std::shared_ptr<const placement::PlacementModel> model,
                              std::shared_ptr<const editor::EditorModel> editor = nullptr);
/// Edits conditioned on the touch alone.
eval::Method touch_prior_method(std::string name, std::shared_ptr<const editor::EditorModel> editor);

inline constexpr const char* kRandomMethod = "random-placement";
inline constexpr const char* kPlacementMethod = "touch-placement";
inline constexpr const char* kNoReasoningMethod = "touch-placement-no-reasoning";
inline constexpr const char* kTouchPriorMethod = "unet-touch-prior";

}  // namespace touchadd::app

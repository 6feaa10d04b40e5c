#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "touchadd/datagen.hpp"
#include "touchadd/editor/model.hpp"
#include "touchadd/editor/schedule.hpp"

namespace touchadd::editor {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EditorTrainConfig {
  EditorConfig model;
  int epochs = 10;
  int batch_size = 8;
  double lr = 2e-3;
  double min_lr_ratio = 0.1;
  int warmup_steps = 20;
  double clip_norm = 1.0;
  double dice_weight = 0.5;
};

struct EditorLossRecord {
  int epoch = 0;
  std::string split;
  double mse = 0.0;
  double dice = 0.0;
  double total = 0.0;
};

struct EditorTrainResult {
  EditorModel model;
  std::vector<EditorLossRecord> curve;
};

/// Spatial conditioning for one sample: the box channel, or the touch mask
/// for touch-conditioned models.
nn::Mat conditioning_channel(const EditorConfig& config, const NormalizedBBox& box,
                             const TouchPoint& touch);

struct EditorStepLoss {
  nn::Tensor mse;
  nn::Tensor dice;
  nn::Tensor total;
};

/// Denoising loss at step t for one sample with the given noise.
EditorStepLoss editor_loss(const EditorModel& model, const nn::Mat& target, const nn::Mat& source,
                           const nn::Mat& cond, const nn::Mat& gt_mask, std::span<const int> instruction,
                           const DiffusionSchedule& schedule, int t, const nn::Mat& eps,
                           double dice_weight);

using EditorEpochCallback = std::function<void(const EditorLossRecord&)>;

/// Per visit: t ~ U{1..T}, fresh Gaussian noise, loss = MSE(eps) + lambda *
/// dice(sigmoid(mask logits), gt mask). The val split is scored with fixed
/// per-sample draws so its curve is comparable across epochs.
EditorTrainResult train_editor(const datagen::Dataset& dataset, const EditorTrainConfig& config,
                               std::uint64_t seed, const EditorEpochCallback& on_epoch = {});

void write_editor_loss_csv(const std::filesystem::path& path, std::span<const EditorLossRecord> curve);

}  // namespace touchadd::editor

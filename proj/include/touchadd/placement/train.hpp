#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "touchadd/datagen.hpp"
#include "touchadd/placement/model.hpp"

namespace touchadd::placement {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlacementTrainConfig {
  PlacementConfig model;
  int epochs = 20;
  int batch_size = 16;
  double lr = 2e-3;
  double min_lr_ratio = 0.1;  // cosine floor
  int warmup_steps = 20;
  double clip_norm = 1.0;
  bool augment = true;      // fresh perturb_centroid noise on every visit
  bool reasoning = true;    // false trains on SEP + coordinates + EOS only
};

struct LossRecord {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
};

struct PlacementTrainResult {
  PlacementModel model;
  std::vector<LossRecord> curve;
};

/// One training example with its composite precomputed.
struct PlacementExample {
  nn::Mat patches;
  TokenSequence prompt;
  std::string reasoning;
  NormalizedBBox gt_bbox;
};

PlacementExample make_example(const PlacementModel& model, const datagen::EditSample& sample);

/// Target tokens for one visit of an example.
TokenSequence target_response(const PlacementExample& ex, const NormalizedBBox& box,
                              const Vocabulary& vocab, bool reasoning);

using EpochCallback = std::function<void(const LossRecord&)>;

/// Trains on the train split; the val split (if any) is scored after every
/// epoch without augmentation. Throws TrainingDiverged on a non-finite loss.
PlacementTrainResult train_placement(const datagen::Dataset& dataset,
                                     const PlacementTrainConfig& config, std::uint64_t seed,
                                     const EpochCallback& on_epoch = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> curve);

}  // namespace touchadd::placement

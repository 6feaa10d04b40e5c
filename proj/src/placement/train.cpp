#include "touchadd/placement/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "touchadd/nn/ops.hpp"
#include "touchadd/placement/predict.hpp"

namespace touchadd::placement {

namespace {

double lr_factor(int step, int total, const PlacementTrainConfig& c) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) return (step + 1.0) / c.warmup_steps;
  const double span = std::max(1, total - c.warmup_steps);
  const double progress = std::min(1.0, (step - c.warmup_steps) / span);
  return c.min_lr_ratio + (1.0 - c.min_lr_ratio) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double example_loss(const PlacementModel& model, const PlacementExample& ex,
                    const TokenSequence& response) {
  const nn::Tensor features = model.vision_embed_patches(ex.patches);
  return lm_loss(model, features, ex.prompt, response).item();
}

}  // namespace

PlacementExample make_example(const PlacementModel& model, const datagen::EditSample& sample) {
  PlacementExample ex;
  ex.patches = model.patchify(placement_composite(model.image_size(), sample.source_image, sample.touch));
  ex.prompt = encode_prompt(sample.instruction, model.vocab());
  ex.reasoning = sample.reasoning;
  ex.gt_bbox = sample.gt_bbox;
  return ex;
}

TokenSequence target_response(const PlacementExample& ex, const NormalizedBBox& box,
                              const Vocabulary& vocab, bool reasoning) {
  return encode_response(reasoning ? ex.reasoning : std::string(), box, vocab, true);
}

PlacementTrainResult train_placement(const datagen::Dataset& dataset,
                                     const PlacementTrainConfig& config, std::uint64_t seed,
                                     const EpochCallback& on_epoch) {
  if (config.epochs < 1 || config.batch_size < 1 || !(config.lr >= 0.0))
    throw std::invalid_argument("placement training needs epochs >= 1, batch >= 1 and lr >= 0");
  const auto train = dataset.split(datagen::Split::kTrain);
  const auto val = dataset.split(datagen::Split::kVal);
  if (train.empty()) throw std::invalid_argument("dataset has no training samples");

  PlacementTrainResult out{PlacementModel(config.model, Vocabulary::standard(), child_seed(seed, 0)), {}};
  PlacementModel& m = out.model;
  std::vector<NormalizedBBox> boxes;
  for (const auto* s : train) boxes.push_back(s->gt_bbox);
  m.set_fallback_sizes(derive_size_stats(boxes));

  std::vector<PlacementExample> train_ex, val_ex;
  for (const auto* s : train) train_ex.push_back(make_example(m, *s));
  for (const auto* s : val) val_ex.push_back(make_example(m, *s));

  nn::Adam opt(m.params(), {.lr = config.lr, .clip_norm = config.clip_norm});
  Rng rng(child_seed(seed, 1));
  const int n = static_cast<int>(train_ex.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = steps_per_epoch * config.epochs;
  int step = 0;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    double epoch_loss = 0.0;
    for (int b = 0; b < n; b += config.batch_size) {
      const int end = std::min(n, b + config.batch_size);
      for (int k = b; k < end; ++k) {
        const PlacementExample& ex = train_ex[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        const NormalizedBBox box = config.augment ? perturb_centroid(ex.gt_bbox, rng) : ex.gt_bbox;
        const TokenSequence response = target_response(ex, box, m.vocab(), config.reasoning);
        nn::Tensor loss = lm_loss(m, m.vision_embed_patches(ex.patches), ex.prompt, response);
        const double v = loss.item();
        if (!std::isfinite(v))
          throw TrainingDiverged("placement loss became non-finite at epoch " + std::to_string(epoch));
        epoch_loss += v;
        loss.backward();
      }
      opt.step(lr_factor(step++, total_steps, config), end - b);
    }
    const LossRecord train_rec{epoch, "train", epoch_loss / n};
    out.curve.push_back(train_rec);
    if (on_epoch) on_epoch(train_rec);

    if (!val_ex.empty()) {
      nn::NoGradGuard no_grad;
      double total = 0.0;
      for (const auto& ex : val_ex)
        total += example_loss(m, ex, target_response(ex, ex.gt_bbox, m.vocab(), config.reasoning));
      const LossRecord val_rec{epoch, "val", total / static_cast<double>(val_ex.size())};
      out.curve.push_back(val_rec);
      if (on_epoch) on_epoch(val_rec);
    }
  }
  return out;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,split,loss\n";
  out.precision(10);
  for (const auto& r : curve) out << r.epoch << ',' << r.split << ',' << r.loss << '\n';
}

}  // namespace touchadd::placement

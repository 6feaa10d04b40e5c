#include "touchadd/editor/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "touchadd/nn/ops.hpp"
#include "touchadd/touchprior.hpp"

namespace touchadd::editor {

using nn::Mat;
using nn::Tensor;

namespace {

struct Example {
  Mat source, target, cond, mask;
  std::vector<int> instruction;
};

Example make_example(const EditorModel& model, const datagen::EditSample& s) {
  const int S = model.config().image_size;
  auto fit = [S](const Image& img) {
    return (img.width() == S && img.height() == S) ? img : resize_bilinear(img, S, S);
  };
  const Plane mask = (s.gt_mask.width() == S && s.gt_mask.height() == S) ? s.gt_mask
                                                                          : resize_nearest(s.gt_mask, S, S);
  return {image_to_mat(fit(s.source_image)), image_to_mat(fit(s.target_image)),
          conditioning_channel(model.config(), s.gt_bbox, s.touch.to_normalized(s.source_image.width(),
                                                                               s.source_image.height())),
          plane_to_row(mask), model.instruction_ids(s.instruction)};
}

Mat gaussian(nn::Index rows, nn::Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double lr_factor(int step, int total, const EditorTrainConfig& c) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) return (step + 1.0) / c.warmup_steps;
  const double span = std::max(1, total - c.warmup_steps);
  const double progress = std::min(1.0, (step - c.warmup_steps) / span);
  return c.min_lr_ratio + (1.0 - c.min_lr_ratio) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace

Mat conditioning_channel(const EditorConfig& config, const NormalizedBBox& box, const TouchPoint& touch) {
  const int S = config.image_size;
  if (config.conditioning == Conditioning::kBox) return plane_to_row(box_channel(box, S, S));
  return plane_to_row(render_touch_mask(S, S, touch, config.touch_mask_px));
}

EditorStepLoss editor_loss(const EditorModel& model, const Mat& target, const Mat& source,
                           const Mat& cond, const Mat& gt_mask, std::span<const int> instruction,
                           const DiffusionSchedule& schedule, int t, const Mat& eps, double dice_weight) {
  const EditorOutput out = model.forward(schedule.q_sample(target, t, eps), source, cond, t, instruction);
  EditorStepLoss loss;
  loss.mse = nn::mse(out.noise, Tensor::constant(eps));
  loss.dice = nn::dice_loss(nn::sigmoid(out.mask_logits), gt_mask);
  // With a zero weight the dice term stays out of the graph entirely.
  loss.total = dice_weight == 0.0 ? loss.mse : nn::add(loss.mse, nn::scale(loss.dice, dice_weight));
  return loss;
}

EditorTrainResult train_editor(const datagen::Dataset& dataset, const EditorTrainConfig& config,
                               std::uint64_t seed, const EditorEpochCallback& on_epoch) {
  if (config.epochs < 1 || config.batch_size < 1 || !(config.lr >= 0.0) || !(config.dice_weight >= 0.0))
    throw std::invalid_argument("editor training needs epochs >= 1, batch >= 1, lr >= 0, dice weight >= 0");
  const auto train = dataset.split(datagen::Split::kTrain);
  const auto val = dataset.split(datagen::Split::kVal);
  if (train.empty()) throw std::invalid_argument("dataset has no training samples");

  EditorTrainResult out{EditorModel(config.model, placement::Vocabulary::standard(), child_seed(seed, 0)), {}};
  EditorModel& m = out.model;
  const DiffusionSchedule schedule = DiffusionSchedule::linear(config.model.steps);
  std::vector<Example> train_ex, val_ex;
  for (const auto* s : train) train_ex.push_back(make_example(m, *s));
  for (const auto* s : val) val_ex.push_back(make_example(m, *s));

  nn::Adam opt(m.params(), {.lr = config.lr, .clip_norm = config.clip_norm});
  Rng rng(child_seed(seed, 1));
  const int n = static_cast<int>(train_ex.size());
  const int total_steps = ((n + config.batch_size - 1) / config.batch_size) * config.epochs;
  int step = 0;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    EditorLossRecord rec{epoch, "train", 0, 0, 0};
    for (int b = 0; b < n; b += config.batch_size) {
      const int end = std::min(n, b + config.batch_size);
      for (int k = b; k < end; ++k) {
        const Example& ex = train_ex[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        const int t = rng.uniform_int(1, schedule.steps());
        const Mat eps = gaussian(3, ex.target.cols(), rng);
        EditorStepLoss loss = editor_loss(m, ex.target, ex.source, ex.cond, ex.mask, ex.instruction,
                                          schedule, t, eps, config.dice_weight);
        const double v = loss.total.item();
        if (!std::isfinite(v))
          throw TrainingDiverged("editor loss became non-finite at epoch " + std::to_string(epoch));
        rec.mse += loss.mse.item();
        rec.dice += loss.dice.item();
        rec.total += v;
        loss.total.backward();
      }
      opt.step(lr_factor(step++, total_steps, config), end - b);
    }
    rec.mse /= n, rec.dice /= n, rec.total /= n;
    out.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!val_ex.empty()) {
      nn::NoGradGuard no_grad;
      EditorLossRecord vr{epoch, "val", 0, 0, 0};
      for (std::size_t i = 0; i < val_ex.size(); ++i) {
        const Example& ex = val_ex[i];
        Rng vrng(child_seed(child_seed(seed, 2), i));
        const int t = vrng.uniform_int(1, schedule.steps());
        const Mat eps = gaussian(3, ex.target.cols(), vrng);
        const EditorStepLoss loss = editor_loss(m, ex.target, ex.source, ex.cond, ex.mask, ex.instruction,
                                                schedule, t, eps, config.dice_weight);
        vr.mse += loss.mse.item();
        vr.dice += loss.dice.item();
        vr.total += loss.total.item();
      }
      const double nv = static_cast<double>(val_ex.size());
      vr.mse /= nv, vr.dice /= nv, vr.total /= nv;
      out.curve.push_back(vr);
      if (on_epoch) on_epoch(vr);
    }
  }
  return out;
}

void write_editor_loss_csv(const std::filesystem::path& path, std::span<const EditorLossRecord> curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,split,mse,dice,loss\n";
  out.precision(10);
  for (const auto& r : curve)
    out << r.epoch << ',' << r.split << ',' << r.mse << ',' << r.dice << ',' << r.total << '\n';
}

}  // namespace touchadd::editor

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "touchadd/datagen.hpp"
#include "touchadd/editor/sample.hpp"
#include "touchadd/editor/train.hpp"
#include "touchadd/nn/ops.hpp"
#include "touchadd/touchprior.hpp"

namespace touchadd::editor {
namespace {

namespace fs = std::filesystem;
using nn::Mat;

EditorConfig small_config(Conditioning c = Conditioning::kBox) {
  EditorConfig cfg;
  cfg.image_size = 32;
  cfg.base_channels = 4;
  cfg.embed_dim = 8;
  cfg.steps = 8;
  cfg.conditioning = c;
  return cfg;
}

Mat gaussian(nn::Index rows, nn::Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Image gradient_image(int size) {
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img.set(x, y, {static_cast<std::uint8_t>(4 * x), static_cast<std::uint8_t>(4 * y), 128});
  return img;
}

TEST(Schedule, Monotone) {
  const DiffusionSchedule s = DiffusionSchedule::linear(200);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  for (int t = 1; t <= 200; ++t) {
    ASSERT_GT(s.beta(t), 0.0);
    ASSERT_LT(s.beta(t), 1.0);
    if (t > 1) ASSERT_GT(s.beta(t), s.beta(t - 1));
    ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    ASSERT_GT(s.alpha_bar(t), 0.0);
  }
  EXPECT_NEAR(s.beta(1), 5e-4, 1e-12);
  EXPECT_NEAR(s.beta(200), 0.1, 1e-12);
  EXPECT_LT(s.alpha_bar(200), 1e-3);
  EXPECT_THROW(s.beta(0), std::out_of_range);
  EXPECT_THROW(DiffusionSchedule(10, 0.2, 0.1), std::invalid_argument);
}

TEST(Schedule, NoisingIdentities) {
  const DiffusionSchedule s = DiffusionSchedule::linear(50);
  Rng rng(1);
  const Mat x0 = gaussian(3, 64, rng);
  const Mat eps = gaussian(3, 64, rng);
  EXPECT_EQ(s.q_sample(x0, 0, eps), x0);
  for (int t : {1, 10, 50}) {
    const Mat xt = s.q_sample(x0, t, eps);
    EXPECT_LT((s.predict_x0(xt, t, eps) - x0).cwiseAbs().maxCoeff(), 1e-9);
  }
  // At t = 1 the posterior mean collapses onto x0.
  EXPECT_LT((s.posterior_mean(x0, s.q_sample(x0, 1, eps), 1) - x0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(s.posterior_variance(1), 0.0);
}

TEST(BoxChannel, Examples) {
  EXPECT_DOUBLE_EQ(box_channel({0.5, 0.5, 1.0, 1.0}, 64, 64).sum(), 64.0 * 64.0);
  const Plane p = box_channel({0.5, 0.5, 0.5, 0.5}, 64, 64);
  EXPECT_DOUBLE_EQ(p.sum(), 32.0 * 32.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool inside = x >= 16 && x < 48 && y >= 16 && y < 48;
      ASSERT_EQ(p.at(x, y), inside ? 1.0f : 0.0f);
    }
  // Corners 0.13 * 50 = 6.5 -> 7 and 0.37 * 50 = 18.5 -> 19 (half away from zero).
  EXPECT_DOUBLE_EQ(box_channel({0.25, 0.25, 0.24, 0.24}, 50, 50).sum(), 12.0 * 12.0);
  EXPECT_DOUBLE_EQ(box_channel({0.5, 0.5, 0.001, 0.001}, 64, 64).sum(), 1.0);
}

TEST(Dice, Fixtures) {
  Mat a = Mat::Zero(1, 8), b = Mat::Zero(1, 8), c = Mat::Zero(1, 8);
  a.block(0, 0, 1, 4).setOnes();
  b.block(0, 4, 1, 4).setOnes();
  c.block(0, 2, 1, 4).setOnes();
  EXPECT_NEAR(nn::dice_loss(nn::Tensor::constant(a), a).item(), 0.0, 1e-6);
  EXPECT_NEAR(nn::dice_loss(nn::Tensor::constant(a), b).item(), 1.0, 1e-6);
  EXPECT_NEAR(nn::dice_loss(nn::Tensor::constant(a), c).item(), 0.5, 1e-6);
}

TEST(Blend, Identities) {
  const Image src = gradient_image(16);
  Image edited(16, 16, {250, 5, 9});
  EXPECT_EQ(blend(src, edited, Plane(16, 16, 0.0f)), src);
  EXPECT_EQ(blend(src, edited, Plane(16, 16, 1.0f)), edited);
  Plane half(16, 16, 0.0f);
  half.at(3, 3) = 0.5f;
  const Image out = blend(src, edited, half);
  const Rgb s = src.at(3, 3);
  EXPECT_EQ(out.at(3, 3).r, to_byte(0.5 * 250 + 0.5 * s.r));
  EXPECT_EQ(out.at(4, 3), src.at(4, 3));
  EXPECT_THROW(blend(src, Image(17, 16), half), EditorError);
}

TEST(Conversions, RoundTrip) {
  const Image img = gradient_image(16);
  const Mat m = image_to_mat(img);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_EQ(m.cols(), 256);
  EXPECT_LE(m.maxCoeff(), 1.0);
  EXPECT_GE(m.minCoeff(), -1.0);
  EXPECT_EQ(mat_to_image(m, 16, 16), img);
}

TEST(Model, ShapesAndInstructionIds) {
  const EditorModel model(small_config(), placement::Vocabulary::standard(), 1);
  const auto ids = model.instruction_ids("add a red zebra");
  EXPECT_EQ(ids.size(), 3u);
  const int n = 32 * 32;
  const EditorOutput out = model.forward(Mat::Zero(3, n), Mat::Zero(3, n), Mat::Zero(1, n), 3, ids);
  EXPECT_EQ(out.noise.rows(), 3);
  EXPECT_EQ(out.noise.cols(), n);
  EXPECT_EQ(out.mask_logits.rows(), 1);
  EXPECT_EQ(out.mask_logits.cols(), n);
}

TEST(Model, FreshNoiseMseIsAboutOne) {
  EditorConfig cfg;  // default 64x64 model
  const EditorModel model(cfg, placement::Vocabulary::standard(), 2);
  const DiffusionSchedule sched = DiffusionSchedule::linear(cfg.steps);
  Rng rng(3);
  const int n = cfg.image_size * cfg.image_size;
  const Mat x0 = image_to_mat(gradient_image(64));
  double total = 0.0;
  const int trials = 4;
  for (int i = 0; i < trials; ++i) {
    const Mat eps = gaussian(3, n, rng);
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.steps)));
    const EditorOutput out = model.forward(sched.q_sample(x0, t, eps), x0, Mat::Zero(1, n), t, {});
    total += (out.noise.value() - eps).squaredNorm() / static_cast<double>(eps.size());
  }
  EXPECT_NEAR(total / trials, 1.0, 0.1);
}

TEST(Model, ConfigValidationAndJson) {
  EditorConfig cfg = small_config(Conditioning::kTouch);
  EXPECT_EQ(EditorConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
  cfg.image_size = 30;
  EXPECT_THROW(cfg.validate(), EditorError);
  EXPECT_EQ(parse_conditioning("touch"), Conditioning::kTouch);
  EXPECT_THROW(parse_conditioning("scribble"), std::exception);
}

TEST(Model, CheckpointRoundTrip) {
  const EditorModel model(small_config(), placement::Vocabulary::standard(), 4);
  const fs::path path = fs::temp_directory_path() / "touchadd_test_editor.ckpt";
  model.save(path);
  const EditorModel loaded = EditorModel::load(path);
  EXPECT_EQ(loaded.config().to_json(), model.config().to_json());
  Rng rng(5);
  const Mat x = gaussian(3, 1024, rng);
  const auto ids = model.instruction_ids("add a blue square");
  EXPECT_EQ(loaded.forward(x, x, Mat::Ones(1, 1024), 5, ids).noise.value(),
            model.forward(x, x, Mat::Ones(1, 1024), 5, ids).noise.value());
  fs::remove(path);
}

TEST(Loss, ZeroDiceWeightIsPlainDenoising) {
  EditorModel model(small_config(), placement::Vocabulary::standard(), 6);
  const DiffusionSchedule sched = DiffusionSchedule::linear(8);
  Rng rng(7);
  const Mat x0 = image_to_mat(gradient_image(32));
  const Mat eps = gaussian(3, 1024, rng);
  const Mat cond = plane_to_row(box_channel({0.5, 0.5, 0.5, 0.5}, 32, 32));
  const auto ids = model.instruction_ids("add a red circle");

  EditorStepLoss plain = editor_loss(model, x0, x0, cond, cond, ids, sched, 4, eps, 0.0);
  EXPECT_EQ(plain.total.item(), plain.mse.item());
  model.params().zero_grad();
  plain.total.backward();
  // Mask head receives no gradient without the dice term.
  for (const auto& e : model.params().entries())
    if (e.name.rfind("head.mask.", 0) == 0) EXPECT_EQ(e.tensor.grad().size(), 0) << e.name;

  const EditorStepLoss mixed = editor_loss(model, x0, x0, cond, cond, ids, sched, 4, eps, 0.5);
  EXPECT_NEAR(mixed.total.item(), mixed.mse.item() + 0.5 * mixed.dice.item(), 1e-12);
}

TEST(Conditioning, TouchChannelIsTwelvePixelSquare) {
  const Mat m = conditioning_channel(EditorConfig{}, {0.5, 0.5, 0.3, 0.3}, TouchPoint::normalized(0.5, 0.5));
  // Box corners 0.35 * 64 = 22.4 -> 22 and 0.65 * 64 = 41.6 -> 42.
  EXPECT_DOUBLE_EQ(m.sum(), 20.0 * 20.0);
  EditorConfig touch_cfg;
  touch_cfg.conditioning = Conditioning::kTouch;
  EXPECT_DOUBLE_EQ(conditioning_channel(touch_cfg, {0.5, 0.5, 0.3, 0.3}, TouchPoint::normalized(0.5, 0.5)).sum(),
                   144.0);
}

TEST(Sample, DeterministicWithBlendingIdentity) {
  const EditorModel model(small_config(), placement::Vocabulary::standard(), 8);
  const DiffusionSchedule sched = DiffusionSchedule::linear(8);
  const Image src = gradient_image(32);
  const NormalizedBBox box{0.4, 0.6, 0.3, 0.3};
  const EditResult a = sample_edit(model, src, "add a red circle", box, sched, 11);
  const EditResult b = sample_edit(model, src, "add a red circle", box, sched, 11);
  const EditResult c = sample_edit(model, src, "add a red circle", box, sched, 12);
  EXPECT_EQ(a.edited_image, b.edited_image);
  EXPECT_EQ(a.instance_mask, b.instance_mask);
  EXPECT_EQ(a.blended_image, b.blended_image);
  EXPECT_NE(a.edited_image, c.edited_image);
  EXPECT_EQ(a.blended_image, blend(src, a.edited_image, a.instance_mask));
  for (float v : a.instance_mask.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Sample, ResizesSourceToModelResolution) {
  const EditorModel model(small_config(), placement::Vocabulary::standard(), 8);
  const DiffusionSchedule sched = DiffusionSchedule::linear(8);
  const EditResult r = sample_edit(model, gradient_image(64), "add a red circle", {0.5, 0.5, 0.2, 0.2}, sched, 1);
  EXPECT_EQ(r.blended_image.width(), 32);
  EXPECT_EQ(r.instance_mask.width(), 32);
}

TEST(Sample, ModeChecks) {
  const EditorModel box_model(small_config(), placement::Vocabulary::standard(), 8);
  const EditorModel touch_model(small_config(Conditioning::kTouch), placement::Vocabulary::standard(), 8);
  const DiffusionSchedule sched = DiffusionSchedule::linear(8);
  const Image src = gradient_image(32);
  const TouchPoint t = TouchPoint::normalized(0.3, 0.3);
  EXPECT_THROW(sample_edit(touch_model, src, "add a red circle", {0.5, 0.5, 0.2, 0.2}, sched, 1), EditorError);
  EXPECT_THROW(sample_edit_touch_ablation(box_model, src, "add a red circle", t, sched, 1), EditorError);
  EXPECT_THROW(sample_edit(box_model, src, "add a red circle", {0.5, 0.5, 0.0, 0.2}, sched, 1), GeometryError);
  EXPECT_THROW(sample_edit(box_model, src, "add", {0.5, 0.5, 0.2, 0.2}, DiffusionSchedule::linear(9), 1),
               EditorError);
  EXPECT_THROW(sample_edit_touch_ablation(touch_model, src, "add", TouchPoint::normalized(1.5, 0.2), sched, 1),
               GeometryError);

  const EditResult r = sample_edit_touch_ablation(touch_model, src, "add a red circle", t, sched, 3);
  EXPECT_EQ(r.blended_image, blend(src, r.edited_image, r.instance_mask));
}

TEST(Train, CurvesAndDeterminism) {
  const datagen::Dataset ds = datagen::generate_dataset(10, 3);
  EditorTrainConfig c;
  c.model = small_config();
  c.epochs = 2;
  c.batch_size = 3;
  c.warmup_steps = 1;
  const EditorTrainResult a = train_editor(ds, c, 5);
  const EditorTrainResult b = train_editor(ds, c, 5);
  ASSERT_EQ(a.curve.size(), 4u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].total, b.curve[i].total);
    EXPECT_NEAR(a.curve[i].total, a.curve[i].mse + 0.5 * a.curve[i].dice, 1e-9);
  }
  EXPECT_EQ(a.curve[1].split, "val");

  const fs::path csv = fs::temp_directory_path() / "touchadd_test_editor_loss.csv";
  write_editor_loss_csv(csv, a.curve);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,split,mse,dice,loss");
  fs::remove(csv);
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  const datagen::Dataset ds = datagen::generate_dataset(10, 3);
  EditorTrainConfig c;
  c.model = small_config();
  c.epochs = 1;
  c.lr = 0.0;
  const EditorTrainResult r = train_editor(ds, c, 5);
  const EditorModel fresh(c.model, placement::Vocabulary::standard(), child_seed(5, 0));
  const auto& a = r.model.params().entries();
  const auto& b = fresh.params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor.value(), b[i].tensor.value()) << a[i].name;
}

}  // namespace
}  // namespace touchadd::editor

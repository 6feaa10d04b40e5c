#include "touchadd/app/pipeline.hpp"

#include "touchadd/editor/sample.hpp"
#include "touchadd/placement/predict.hpp"

namespace touchadd::app {

datagen::DatasetConfig dataset_config(const Config& cfg) {
  datagen::DatasetConfig c;
  c.split_ratio = cfg.get_double("data.split_ratio", c.split_ratio);
  c.backend = cfg.get_string("data.backend", c.backend);
  c.max_retries = static_cast<int>(cfg.get_int("data.max_retries", c.max_retries));
  c.scene.width = c.scene.height = static_cast<int>(cfg.get_int("data.image_size", c.scene.width));
  c.scene.min_objects = static_cast<int>(cfg.get_int("data.min_objects", c.scene.min_objects));
  c.scene.max_objects = static_cast<int>(cfg.get_int("data.max_objects", c.scene.max_objects));
  return c;
}

placement::PlacementTrainConfig placement_train_config(const Config& cfg) {
  placement::PlacementTrainConfig c;
  auto& m = c.model;
  m.image_size = static_cast<int>(cfg.get_int("placement.image_size", m.image_size));
  m.patch = static_cast<int>(cfg.get_int("placement.patch", m.patch));
  m.d_model = static_cast<int>(cfg.get_int("placement.d_model", m.d_model));
  m.layers = static_cast<int>(cfg.get_int("placement.layers", m.layers));
  m.heads = static_cast<int>(cfg.get_int("placement.heads", m.heads));
  m.context = static_cast<int>(cfg.get_int("placement.context", m.context));
  m.mlp_mult = static_cast<int>(cfg.get_int("placement.mlp_mult", m.mlp_mult));
  m.max_response = static_cast<int>(cfg.get_int("placement.max_response", m.max_response));
  m.coord_channels = cfg.get_bool("placement.coord_channels", m.coord_channels);
  c.epochs = static_cast<int>(cfg.get_int("placement.epochs", c.epochs));
  c.batch_size = static_cast<int>(cfg.get_int("placement.batch_size", c.batch_size));
  c.lr = cfg.get_double("placement.lr", c.lr);
  c.min_lr_ratio = cfg.get_double("placement.min_lr_ratio", c.min_lr_ratio);
  c.warmup_steps = static_cast<int>(cfg.get_int("placement.warmup_steps", c.warmup_steps));
  c.clip_norm = cfg.get_double("placement.clip_norm", c.clip_norm);
  c.augment = cfg.get_bool("placement.augment", c.augment);
  c.reasoning = cfg.get_bool("placement.reasoning", c.reasoning);
  return c;
}

editor::EditorTrainConfig editor_train_config(const Config& cfg) {
  editor::EditorTrainConfig c;
  auto& m = c.model;
  m.image_size = static_cast<int>(cfg.get_int("editor.image_size", m.image_size));
  m.base_channels = static_cast<int>(cfg.get_int("editor.base_channels", m.base_channels));
  m.embed_dim = static_cast<int>(cfg.get_int("editor.embed_dim", m.embed_dim));
  m.steps = static_cast<int>(cfg.get_int("editor.steps", m.steps));
  m.conditioning = editor::parse_conditioning(cfg.get_string("editor.conditioning", "box"));
  m.touch_mask_px = static_cast<int>(cfg.get_int("editor.touch_mask_px", m.touch_mask_px));
  c.epochs = static_cast<int>(cfg.get_int("editor.epochs", c.epochs));
  c.batch_size = static_cast<int>(cfg.get_int("editor.batch_size", c.batch_size));
  c.lr = cfg.get_double("editor.lr", c.lr);
  c.min_lr_ratio = cfg.get_double("editor.min_lr_ratio", c.min_lr_ratio);
  c.warmup_steps = static_cast<int>(cfg.get_int("editor.warmup_steps", c.warmup_steps));
  c.clip_norm = cfg.get_double("editor.clip_norm", c.clip_norm);
  c.dice_weight = cfg.get_double("editor.dice_weight", c.dice_weight);
  return c;
}

GeneratedData generate_data(const Config& cfg, std::uint64_t seed, const std::filesystem::path& out) {
  const auto dc = dataset_config(cfg);
  const int n = static_cast<int>(cfg.get_int("data.n", 1000));
  const int bench_n = static_cast<int>(cfg.get_int("data.bench", 100));
  GeneratedData g{out / "dataset", out / "benchmark.json"};
  write_dataset(datagen::generate_dataset(n, seed, dc), g.dataset_dir);
  const datagen::Dataset bench = datagen::generate_benchmark(bench_n, child_seed(seed, 1), dc);
  write_dataset(bench, out / "bench");
  eval::save_benchmark(eval::benchmark_from_manifest(bench.manifest, datagen::Split::kBench, out / "bench", out),
                       g.benchmark_file);
  return g;
}

namespace {

// Edits happen at the model resolution; results are scaled back to the
// record's size so they can be compared with its target.
editor::EditResult fit_to(editor::EditResult r, const Image& like) {
  if (r.blended_image.width() == like.width() && r.blended_image.height() == like.height()) return r;
  r.edited_image = resize_bilinear(r.edited_image, like.width(), like.height());
  r.blended_image = resize_bilinear(r.blended_image, like.width(), like.height());
  r.instance_mask = resize_nearest(r.instance_mask, like.width(), like.height());
  return r;
}

}  // namespace

eval::Method random_method(const SizeStats& stats) {
  eval::Method m;
  m.name = kRandomMethod;
  m.place = [stats](const eval::BenchmarkItem& item, std::uint64_t seed) {
    Rng rng(seed);
    return random_placement(item.record.touch.to_normalized(item.image.width(), item.image.height()), stats, rng);
  };
  return m;
}

eval::Method placement_method(std::string name, std::shared_ptr<const placement::PlacementModel> model,
                              std::shared_ptr<const editor::EditorModel> editor) {
  eval::Method m;
  m.name = std::move(name);
  m.place = [model](const eval::BenchmarkItem& item, std::uint64_t) {
    return placement::predict_placement(*model, item.image, item.record.instruction, item.record.touch).bbox;
  };
  if (editor) {
    auto schedule = std::make_shared<editor::DiffusionSchedule>(
        editor::DiffusionSchedule::linear(editor->config().steps));
    m.edit = [editor, schedule](const eval::BenchmarkItem& item, const std::optional<NormalizedBBox>& box,
                                std::uint64_t seed) {
      if (!box) throw eval::EvalError("no placement box to edit with");
      return fit_to(editor::sample_edit(*editor, item.image, item.record.instruction, *box, *schedule, seed),
                    item.image);
    };
  }
  return m;
}

eval::Method touch_prior_method(std::string name, std::shared_ptr<const editor::EditorModel> editor) {
  eval::Method m;
  m.name = std::move(name);
  auto schedule =
      std::make_shared<editor::DiffusionSchedule>(editor::DiffusionSchedule::linear(editor->config().steps));
  m.edit = [editor, schedule](const eval::BenchmarkItem& item, const std::optional<NormalizedBBox>&,
                              std::uint64_t seed) {
    return fit_to(editor::sample_edit_touch_ablation(*editor, item.image, item.record.instruction,
                                                     item.record.touch, *schedule, seed),
                  item.image);
  };
  return m;
}

}  // namespace touchadd::app

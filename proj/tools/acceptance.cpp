// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "touchadd/app/cli.hpp"
#include "touchadd/app/config.hpp"
#include "touchadd/app/pipeline.hpp"
#include "touchadd/editor/sample.hpp"
#include "touchadd/eval/metrics.hpp"
#include "touchadd/nn/ops.hpp"
#include "touchadd/placement/predict.hpp"
#include "touchadd/service/http.hpp"

// After the Eigen users: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace touchadd;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int g_failed = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++g_failed;
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---- geometry -------------------------------------------------------------

void geometry_suite() {
  Rng rng(101);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const NormalizedBBox a{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0)};
    const NormalizedBBox b{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0)};
    const double ab = iou(a, b);
    bad += !(ab == iou(b, a) && ab >= 0.0 && ab <= 1.0 && std::abs(iou(a, a) - 1.0) < 1e-12);
  }
  double worst = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double v = i / 100000.0;
    worst = std::max(worst, std::abs(dequantize_coord(quantize_coord(v)) - v));
  }
  report("geometry suite", bad == 0 && worst <= 0.005 + 1e-12,
         fmt("%d IoU property violations in 10^4 pairs; max quantize round-trip error %.6f (<= 0.005)", bad, worst));
}

void perturbation_law() {
  Rng rng(102);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0, max_abs = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = sample_centroid_offset(0.4, rng);
    sum += d;
    sum2 += d * d;
    max_abs = std::max(max_abs, std::abs(d));
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  const double target = 0.4 / 6.0;
  report("perturbation law", max_abs <= 0.2 && std::abs(sd - target) <= 0.05 * target,
         fmt("max |delta| %.4f (<= 0.2); std %.5f vs %.5f (+-5%%)", max_abs, sd, target));
}

// ---- language-model loss ----------------------------------------------------

double log_prob(const nn::Mat& logits, int row, int target) {
  const double m = logits.row(row).maxCoeff();
  double z = 0.0;
  for (nn::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(row, j) - m);
  return logits(row, target) - m - std::log(z);
}

void lm_loss_oracle() {
  using namespace placement;
  PlacementConfig c;
  c.image_size = 16;
  c.patch = 8;
  c.d_model = 16;
  c.layers = 2;
  c.heads = 2;
  c.context = 32;
  c.mlp_mult = 2;
  c.max_response = 8;
  PlacementModel model(c, Vocabulary::from_words({"add", "a", "bird", "place", "it"}), 7);
  Image img(16, 16, {90, 120, 60});
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 5; ++x) img.set(x, y, {200, 40, static_cast<std::uint8_t>(4 * y)});
  const Vocabulary& v = model.vocab();
  TokenSequence prompt, response;
  prompt.ids = {kBos, v.id("add"), v.id("bird")};
  response.ids = {v.id("place"), v.coord_token(CoordAxis::kX, 42), kEos};

  const nn::Tensor features = model.vision_embed(img);
  const double loss = lm_loss(model, features, prompt, response).item();
  std::vector<int> seq(prompt.ids);
  seq.insert(seq.end(), response.ids.begin(), response.ids.end());
  const nn::Mat logits = model.logits(features, seq).value();
  double nll = 0.0;
  for (std::size_t j = 0; j < response.size(); ++j)
    nll -= log_prob(logits, static_cast<int>(prompt.size() + j) - 1, response.ids[j]);
  nll /= static_cast<double>(response.size());
  const double nll_err = std::abs(loss - nll);

  // Finite differences on 20 random parameter entries.
  auto loss_fn = [&] { return lm_loss(model, model.vision_embed(img), prompt, response); };
  model.params().zero_grad();
  loss_fn().backward();
  Rng rng(21);
  double worst_rel = 0.0;
  auto& entries = model.params().entries();
  for (int k = 0; k < 20; ++k) {
    auto& e = entries[rng.below(entries.size())];
    nn::Mat& val = e.tensor.mutable_value();
    const auto idx = static_cast<nn::Index>(rng.below(static_cast<std::uint64_t>(val.size())));
    const nn::Mat& g = e.tensor.grad();
    const double analytic = g.size() ? g.data()[idx] : 0.0;
    const double saved = val.data()[idx], h = 1e-5;
    val.data()[idx] = saved + h;
    const double up = loss_fn().item();
    val.data()[idx] = saved - h;
    const double down = loss_fn().item();
    val.data()[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst_rel = std::max(worst_rel, std::abs(analytic - numeric) / scale);
  }

  for (const char* name : {"head.w", "head.b"}) {
    nn::Tensor t = model.params().get(name);
    t.mutable_value().setZero();
  }
  const double uniform = lm_loss(model, features, prompt, response).item();
  const double ln_v = std::log(static_cast<double>(v.size()));

  report("lm loss oracle", nll_err <= 1e-6 && std::abs(uniform - ln_v) <= 1e-4 && worst_rel <= 1e-3,
         fmt("|loss - hand NLL| %.2e (<= 1e-6); uniform %.6f vs ln %d = %.6f (1e-4); max FD rel error %.2e (<= 1e-3)",
             nll_err, uniform, v.size(), ln_v, worst_rel));
}

// ---- trained runs ---------------------------------------------------------------

struct Trained {
  std::shared_ptr<const placement::PlacementModel> placement;
  std::shared_ptr<const placement::PlacementModel> no_reasoning;
  std::vector<eval::BenchmarkItem> bench;
  fs::path dir;
};

Trained placement_runs(const app::Config& cfg, std::uint64_t seed, const fs::path& work) {
  Trained t;
  t.dir = work / "placement";
  const auto t0 = Clock::now();
  const app::GeneratedData data = app::generate_data(cfg, seed, t.dir / "data");
  const datagen::Dataset ds = datagen::load_dataset(data.dataset_dir);
  t.bench = eval::load_benchmark_items(data.benchmark_file);

  auto tc = app::placement_train_config(cfg);
  auto run = [&](bool reasoning) {
    tc.reasoning = reasoning;
    auto res = placement::train_placement(ds, tc, seed, [&](const placement::LossRecord& r) {
      if (r.split == "val")
        std::cerr << "  placement" << (reasoning ? "" : " (no reasoning)") << " epoch " << r.epoch << " val loss "
                  << r.loss << " [" << static_cast<int>(seconds_since(t0)) << "s]\n";
    });
    return std::make_shared<const placement::PlacementModel>(std::move(res.model));
  };
  t.placement = run(true);
  const auto methods1 = std::vector<eval::Method>{app::random_method(t.placement->fallback_sizes()),
                                                  app::placement_method(app::kPlacementMethod, t.placement)};
  const eval::ComparisonReport r1 = eval::run_comparison(methods1, t.bench, {seed, cfg.to_json(), {}});
  const double elapsed = seconds_since(t0);
  const double random_iou = *r1.methods[0].mean_iou, model_iou = *r1.methods[1].mean_iou;
  const double rel = (model_iou - random_iou) / random_iou;
  report("placement vs random", model_iou > random_iou && rel >= 0.2 && elapsed < 900.0,
         fmt("%zu train+val / %zu bench; mean IoU %.3f vs random %.3f, relative +%.1f%% (>= 20%%); %.0f s end to end "
             "(< 900 s)",
             ds.samples.size(), t.bench.size(), model_iou, random_iou, 100.0 * rel, elapsed));

  t.no_reasoning = run(false);
  std::vector<eval::Method> methods = methods1;
  methods.push_back(app::placement_method(app::kNoReasoningMethod, t.no_reasoning));
  const eval::ComparisonReport r2 = eval::run_comparison(methods, t.bench, {seed, cfg.to_json(), {}});
  eval::write_report(r2, t.dir / "report");
  std::cout << eval::report_table(r2);
  const double with = *r2.methods[1].mean_iou, without = *r2.methods[2].mean_iou;
  report("reasoning ablation", with >= without,
         fmt("mean IoU with reasoning %.3f >= without %.3f", with, without));
  return t;
}

struct EditorRuns {
  std::shared_ptr<const editor::EditorModel> box;
};

bool decreased(const std::vector<editor::EditorLossRecord>& curve, double editor::EditorLossRecord::*field,
               double* first, double* last) {
  const editor::EditorLossRecord *a = nullptr, *b = nullptr;
  for (const auto& r : curve)
    if (r.split == "train") {
      if (!a) a = &r;
      b = &r;
    }
  if (!a || a == b) return false;
  *first = a->*field;
  *last = b->*field;
  return *last < *first;
}

EditorRuns editor_suite(const app::Config& cfg, std::uint64_t seed, int train_samples, int records) {
  using nn::Mat;
  // Fixtures: identical, disjoint and half-overlapping masks.
  Mat a = Mat::Zero(1, 8), b = Mat::Zero(1, 8), c = Mat::Zero(1, 8);
  a.block(0, 0, 1, 4).setOnes();
  b.block(0, 4, 1, 4).setOnes();
  c.block(0, 2, 1, 4).setOnes();
  const double d0 = nn::dice_loss(nn::Tensor::constant(a), a).item();
  const double d1 = nn::dice_loss(nn::Tensor::constant(a), b).item();
  const double dh = nn::dice_loss(nn::Tensor::constant(a), c).item();
  const bool dice_ok = std::abs(d0) <= 1e-6 && std::abs(d1 - 1.0) <= 1e-6 && std::abs(dh - 0.5) <= 1e-6;

  Image src(32, 32), edited(32, 32, {250, 5, 9});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) src.set(x, y, {static_cast<std::uint8_t>(7 * x), static_cast<std::uint8_t>(5 * y), 90});
  const bool blend_ok = editor::blend(src, edited, Plane(32, 32, 0.0f)) == src &&
                        editor::blend(src, edited, Plane(32, 32, 1.0f)) == edited;

  auto tc = app::editor_train_config(cfg);
  const datagen::Dataset ds = datagen::generate_dataset(train_samples, child_seed(seed, 10));
  const datagen::Dataset bench = datagen::generate_benchmark(records, child_seed(seed, 11));
  const auto t0 = Clock::now();
  auto train = [&](editor::Conditioning cond) {
    tc.model.conditioning = cond;
    return editor::train_editor(ds, tc, seed, [&](const editor::EditorLossRecord& r) {
      if (r.split == "val")
        std::cerr << "  editor (" << editor::conditioning_name(cond) << ") epoch " << r.epoch << " val mse " << r.mse
                  << " dice " << r.dice << " [" << static_cast<int>(seconds_since(t0)) << "s]\n";
    });
  };
  editor::EditorTrainResult full = train(editor::Conditioning::kBox);
  editor::EditorTrainResult touch = train(editor::Conditioning::kTouch);
  double mse0 = 0, mse1 = 0, dice0 = 0, dice1 = 0;
  const bool mse_down = decreased(full.curve, &editor::EditorLossRecord::mse, &mse0, &mse1);
  const bool dice_down = decreased(full.curve, &editor::EditorLossRecord::dice, &dice0, &dice1);

  const int size = tc.model.image_size;
  const auto schedule = editor::DiffusionSchedule::linear(tc.model.steps);
  double l1_full = 0.0, l1_touch = 0.0, inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < bench.samples.size(); ++i) {
    const auto& s = bench.samples[i];
    const std::uint64_t sample_seed = child_seed(child_seed(seed, 12), i);
    const auto f = editor::sample_edit(full.model, s.source_image, s.instruction, s.gt_bbox, schedule, sample_seed);
    const auto t =
        editor::sample_edit_touch_ablation(touch.model, s.source_image, s.instruction, s.touch, schedule, sample_seed);
    const Image target = resize_bilinear(s.target_image, size, size);
    l1_full += eval::pixel_errors(f.blended_image, target).first;
    l1_touch += eval::pixel_errors(t.blended_image, target).first;
    const auto r = datagen::pixel_rect(s.gt_bbox, size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double m = f.instance_mask.at(x, y);
        total += m;
        if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) inside += m;
      }
  }
  l1_full /= records;
  l1_touch /= records;
  const double frac = inside / std::max(total, 1e-12);

  report("editor suite", dice_ok && blend_ok && mse_down && dice_down && l1_full <= l1_touch && frac >= 0.6,
         fmt("dice fixtures %.1e/%.6f/%.6f; blend identity %s; train mse %.4f -> %.4f, dice %.4f -> %.4f; "
             "L1 over %d held-out records: box %.4f <= 12x12 touch %.4f; mask energy inside box %.3f (>= 0.6)",
             d0, d1, dh, blend_ok ? "exact" : "broken", mse0, mse1, dice0, dice1, records, l1_full, l1_touch, frac));
  return {std::make_shared<const editor::EditorModel>(std::move(full.model))};
}

// ---- pipeline determinism ---------------------------------------------------------

constexpr const char* kSmallConfig =
    "[data]\nimage_size = 32\n"
    "[placement]\nimage_size = 32\npatch = 8\nd_model = 16\nlayers = 1\nheads = 2\ncontext = 64\nepochs = 2\n"
    "batch_size = 4\n"
    "[editor]\nimage_size = 16\nbase_channels = 4\nembed_dim = 8\nsteps = 10\nepochs = 2\nbatch_size = 4\n";

std::vector<std::pair<std::string, std::string>> cli_pipeline(const fs::path& root, const fs::path& config,
                                                              bool* ok) {
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.end(), {"--config", config.string(), "--seed", "9"});
    std::ostringstream out, err;
    if (app::run_cli(args, out, err) != 0) {
      *ok = false;
      std::cerr << "  " << args[0] << ": " << err.str();
    }
  };
  const fs::path data = root / "data", ds = data / "dataset", bench = data / "benchmark.json";
  run({"gen-data", "--n", "20", "--bench", "6", "--out", data.string()});
  run({"train-placement", "--data", ds.string(), "--out", (root / "pl").string()});
  run({"train-editor", "--data", ds.string(), "--out", (root / "ed").string()});
  run({"train-editor", "--data", ds.string(), "--conditioning", "touch", "--out", (root / "et").string()});
  const std::string pl = (root / "pl" / "placement.ckpt").string();
  const std::string ed = (root / "ed" / "editor.ckpt").string();
  run({"eval", "--benchmark", bench.string(), "--placement", pl, "--editor", ed, "--out", (root / "ev").string()});
  run({"compare", "--benchmark", bench.string(), "--placement", pl, "--editor", ed, "--editor-touch",
       (root / "et" / "editor.ckpt").string(), "--out", (root / "cmp").string()});

  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext != ".json" && ext != ".csv" && ext != ".txt" && ext != ".ckpt") continue;
    const auto bytes = read_file(entry.path());
    files.emplace_back(fs::relative(entry.path(), root).generic_string(), std::string(bytes.begin(), bytes.end()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

void pipeline_determinism(const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "small.toml") << kSmallConfig;
  bool ok = true;
  const auto a = cli_pipeline(root / "a", root / "small.toml", &ok);
  const auto b = cli_pipeline(root / "b", root / "small.toml", &ok);
  int differing = 0, manifests = 0, csvs = 0, reports = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    differing += a[i] != b[i];
    manifests += a[i].first.find("manifest.json") != std::string::npos;
    csvs += a[i].first.find("_loss.csv") != std::string::npos;
    reports += a[i].first.find("report.json") != std::string::npos;
  }
  ok = ok && a.size() == b.size() && differing == 0 && manifests >= 2 && csvs == 3 && reports == 2;
  report("pipeline determinism", ok,
         fmt("gen-data, train-placement, train-editor x2, eval, compare run twice: %zu artifacts "
             "(%d manifests, %d loss CSVs, %d reports), %d differ",
             a.size(), manifests, csvs, reports, differing));
}

// ---- service --------------------------------------------------------------------

void service_equivalence(std::shared_ptr<const placement::PlacementModel> placement,
                         std::shared_ptr<const editor::EditorModel> editor,
                         const std::vector<eval::BenchmarkItem>& items, int records) {
  service::EditService svc(placement, editor);
  service::HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 200 && !client.Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));

  const auto schedule = editor::DiffusionSchedule::linear(editor->config().steps);
  int compared = 0, mismatches = 0, errors = 0;
  for (int i = 0; i < records && i < static_cast<int>(items.size()); ++i) {
    const auto& it = items[static_cast<std::size_t>(i)];
    const auto png = encode_png(it.image);
    auto created = client.Post("/sessions", std::string(png.begin(), png.end()), "image/png");
    if (!created || created->status != 201) {
      ++errors;
      continue;
    }
    const std::string id = json::parse(created->body).at("id");
    auto placed = client.Post(
        "/sessions/" + id + "/placement",
        json{{"instruction", it.record.instruction}, {"touch", {{"x", it.record.touch.x}, {"y", it.record.touch.y}}}}
            .dump(),
        "application/json");
    if (!placed || placed->status != 200) {
      ++errors;
      continue;
    }
    const json pj = json::parse(placed->body);
    const auto lib = placement::predict_placement(*placement, it.image, it.record.instruction, it.record.touch);
    const auto b = pj.at("bbox").get<std::vector<double>>();
    const NormalizedBBox http_box{b[0], b[1], b[2], b[3]};
    mismatches += !(http_box == lib.bbox && pj.at("tokens").get<std::vector<int>>() == lib.token_ids);

    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
    auto edited = client.Post(
        "/sessions/" + id + "/edits",
        json{{"turn", pj.at("turn")}, {"bbox", {b[0], b[1], b[2], b[3]}}, {"seed", seed}}.dump(), "application/json");
    if (!edited || edited->status != 201) {
      ++errors;
      continue;
    }
    auto image = client.Get(json::parse(edited->body).at("url").get<std::string>() + "?layer=blended");
    const auto result = editor::sample_edit(*editor, it.image, it.record.instruction, lib.bbox, schedule, seed);
    const auto want = encode_png(result.blended_image);
    mismatches += !(image && image->status == 200 && image->body == std::string(want.begin(), want.end()));
    ++compared;
  }
  server.stop();
  th.join();
  report("service equivalence", compared > 0 && mismatches == 0 && errors == 0,
         fmt("%d records through HTTP and library: %d mismatches, %d request errors; no secondary component built",
             compared, mismatches, errors));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for touch-guided object addition", "touchadd_acceptance"};
  std::string config = TOUCHADD_TOY_CONFIG;
  std::string work = (fs::temp_directory_path() / "touchadd_acceptance").string();
  std::uint64_t seed = 2024;
  int editor_samples = 500, editor_records = 40, service_records = 3;
  bool quick = false;
  app.add_option("--config", config, "Toy config")->check(CLI::ExistingFile)->capture_default_str();
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--seed", seed, "Master seed")->capture_default_str();
  app.add_option("--editor-samples", editor_samples, "Editor training set size")->capture_default_str();
  app.add_option("--editor-records", editor_records, "Held-out records for the editor comparison")
      ->capture_default_str();
  app.add_option("--service-records", service_records, "Records sent through HTTP")->capture_default_str();
  app.add_flag("--quick", quick, "Skip the trained runs");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto t0 = Clock::now();
    fs::create_directories(work);
    geometry_suite();
    perturbation_law();
    lm_loss_oracle();
    if (!quick) {
      const app::Config cfg = app::Config::load(config);
      const Trained t = placement_runs(cfg, seed, work);
      const EditorRuns e = editor_suite(cfg, seed, editor_samples, editor_records);
      pipeline_determinism(work);
      service_equivalence(t.placement, e.box, t.bench, service_records);
    } else {
      pipeline_determinism(work);
    }
    std::cout << (g_failed == 0 ? "ALL PASS" : fmt("%d FAILED", g_failed)) << " ("
              << static_cast<int>(seconds_since(t0)) << " s)" << std::endl;
  } catch (const std::exception& ex) {
    std::cout << "FAIL acceptance aborted: " << ex.what() << std::endl;
    return 1;
  }
  return g_failed == 0 ? 0 : 1;
}

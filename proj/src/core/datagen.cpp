#include "touchadd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include <json.hpp>

namespace touchadd::datagen {

using nlohmann::json;

namespace {

struct ShapeTraits {
  Shape shape;
  const char* name;
  double base_w;
  double base_h;
};

// Size depends on the category and on the vertical position (a crude depth
// cue), so a placement model can learn scale that a size prior cannot.
constexpr ShapeTraits kShapeTraits[] = {
    {Shape::kCircle, "circle", 0.20, 0.20},  {Shape::kSquare, "square", 0.22, 0.22},
    {Shape::kTriangle, "triangle", 0.24, 0.20}, {Shape::kBar, "bar", 0.36, 0.12},
    {Shape::kTower, "tower", 0.12, 0.36},    {Shape::kDiamond, "diamond", 0.20, 0.26},
};

bool shape_covers(Shape s, double u, double v) {
  switch (s) {
    case Shape::kCircle:
      return (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
    case Shape::kSquare:
    case Shape::kBar:
    case Shape::kTower:
      return true;
    case Shape::kTriangle:
      return std::abs(u - 0.5) <= 0.5 * v;
    case Shape::kDiamond:
      return std::abs(u - 0.5) + std::abs(v - 0.5) <= 0.5;
  }
  return false;
}

std::uint8_t channel(double v) { return to_byte(v); }

Rgb background_pixel(const Background& bg, int x, int y, int height) {
  const double t = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
  const double wave = bg.stripe_amplitude *
                      std::sin(2.0 * std::numbers::pi * (x + 2.0 * y) / bg.stripe_period);
  auto mix = [&](std::uint8_t a, std::uint8_t b) { return channel(a + (b - a) * t + wave); };
  return {mix(bg.top.r, bg.bottom.r), mix(bg.top.g, bg.bottom.g), mix(bg.top.b, bg.bottom.b)};
}

void draw_object(Image& img, const SceneObject& obj) {
  for (int y = obj.py; y < obj.py + obj.ph; ++y) {
    for (int x = obj.px; x < obj.px + obj.pw; ++x) {
      const double u = (x + 0.5 - obj.px) / obj.pw;
      const double v = (y + 0.5 - obj.py) / obj.ph;
      if (shape_covers(obj.appearance.shape, u, v)) img.set(x, y, obj.appearance.color);
    }
  }
}

bool rects_clear(const SceneObject& a, const SceneObject& b, int gap) {
  return a.px + a.pw + gap <= b.px || b.px + b.pw + gap <= a.px || a.py + a.ph + gap <= b.py ||
         b.py + b.ph + gap <= a.py;
}

std::string sample_id(std::uint64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

const char* shape_name(Shape s) noexcept {
  for (const auto& t : kShapeTraits)
    if (t.shape == s) return t.name;
  return "?";
}

std::vector<PaletteEntry> default_palette() {
  return {{"red", {220, 40, 40}},    {"green", {40, 170, 60}},   {"blue", {40, 70, 220}},
          {"yellow", {235, 210, 40}}, {"purple", {150, 60, 190}}, {"white", {245, 245, 245}}};
}

void SceneConfig::validate() const {
  if (width < kMinImageSide || height < kMinImageSide)
    throw DatagenError("scene resolution must be at least 16x16");
  if (min_objects < 1 || max_objects < min_objects)
    throw DatagenError("invalid object-count range");
  if (palette.empty()) throw DatagenError("palette must not be empty");
}

Image render_scene(const Background& background, std::span<const SceneObject> objects, int width,
                   int height) {
  Image img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) img.set(x, y, background_pixel(background, x, y, height));
  for (const auto& obj : objects) draw_object(img, obj);
  return img;
}

Plane object_mask(const SceneObject& obj, int width, int height) {
  Plane mask(width, height, 0.0f);
  for (int y = std::max(obj.py, 0); y < std::min(obj.py + obj.ph, height); ++y) {
    for (int x = std::max(obj.px, 0); x < std::min(obj.px + obj.pw, width); ++x) {
      const double u = (x + 0.5 - obj.px) / obj.pw;
      const double v = (y + 0.5 - obj.py) / obj.ph;
      if (shape_covers(obj.appearance.shape, u, v)) mask.at(x, y) = 1.0f;
    }
  }
  return mask;
}

Scene generate_scene(Rng& rng, const SceneConfig& config) {
  config.validate();
  Scene scene;
  scene.width = config.width;
  scene.height = config.height;

  Background& bg = scene.background;
  bg.top = {static_cast<std::uint8_t>(rng.uniform_int(110, 170)),
            static_cast<std::uint8_t>(rng.uniform_int(150, 200)),
            static_cast<std::uint8_t>(rng.uniform_int(180, 230))};
  bg.bottom = {static_cast<std::uint8_t>(rng.uniform_int(90, 140)),
               static_cast<std::uint8_t>(rng.uniform_int(110, 160)),
               static_cast<std::uint8_t>(rng.uniform_int(70, 120))};
  bg.stripe_period = rng.uniform_int(8, 16);
  bg.stripe_amplitude = rng.uniform(3.0, 8.0);

  const int W = config.width;
  const int H = config.height;
  const int count = rng.uniform_int(config.min_objects, config.max_objects);
  const int margin = 2;
  for (int k = 0; k < count; ++k) {
    const auto& tr = kShapeTraits[rng.below(std::size(kShapeTraits))];
    const auto& pal = config.palette[rng.below(config.palette.size())];
    const double salience = rng.uniform();
    for (int attempt = 0; attempt < 24; ++attempt) {
      const double y_c = rng.uniform(0.15, 0.85);
      const double scale = (0.75 + 0.5 * y_c) * rng.uniform(0.9, 1.1);
      const int pw = std::clamp(static_cast<int>(std::lround(tr.base_w * scale * W)), 4, W - 2 * margin);
      const int ph = std::clamp(static_cast<int>(std::lround(tr.base_h * scale * H)), 4, H - 2 * margin);
      const int py = std::clamp(static_cast<int>(std::lround(y_c * H - 0.5 * ph)), margin, H - margin - ph);
      const int px = rng.uniform_int(margin, W - margin - pw);

      SceneObject obj;
      obj.appearance = {tr.shape, pal.name, pal.color};
      obj.category = pal.name + " " + tr.name;
      obj.salience_score = salience;
      obj.px = px;
      obj.py = py;
      obj.pw = pw;
      obj.ph = ph;
      obj.bbox = NormalizedBBox::make((px + 0.5 * pw) / W, (py + 0.5 * ph) / H,
                                      static_cast<double>(pw) / W, static_cast<double>(ph) / H);
      const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(),
                                     [&](const SceneObject& o) { return rects_clear(o, obj, 3); });
      if (clear) {
        scene.objects.push_back(std::move(obj));
        break;
      }
    }
  }
  scene.image = render_scene(bg, scene.objects, W, H);
  return scene;
}

std::vector<SceneObject> filter_objects(std::span<const SceneObject> objects,
                                        const FilterThresholds& t) {
  std::vector<SceneObject> kept;
  for (const auto& obj : objects) {
    const Corners c = obj.bbox.corners();
    const bool big_enough = obj.bbox.w * obj.bbox.h >= t.min_area;
    const bool inside = c.x0 >= t.boundary_margin && c.y0 >= t.boundary_margin &&
                        c.x1 <= 1.0 - t.boundary_margin && c.y1 <= 1.0 - t.boundary_margin;
    if (big_enough && inside && obj.salience_score >= t.score_thresh) kept.push_back(obj);
  }
  return kept;
}

Image ResynthesisBackend::remove(const Scene& scene, std::size_t object_index) const {
  if (object_index >= scene.objects.size()) throw DatagenError("object index out of range");
  std::vector<SceneObject> rest;
  rest.reserve(scene.objects.size() - 1);
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    if (i != object_index) rest.push_back(scene.objects[i]);
  return render_scene(scene.background, rest, scene.width, scene.height);
}

BackendRegistry::BackendRegistry() {
  backends_.emplace(std::string(kDefaultBackend), std::make_shared<ResynthesisBackend>());
}

void BackendRegistry::add(std::string id, std::shared_ptr<const InpaintingBackend> backend) {
  if (!backend) throw DatagenError("null backend");
  backends_[std::move(id)] = std::move(backend);
}

const InpaintingBackend& BackendRegistry::get(std::string_view id) const {
  const auto it = backends_.find(id);
  if (it == backends_.end()) throw DatagenError("unknown inpainting backend '" + std::string(id) + "'");
  return *it->second;
}

bool BackendRegistry::contains(std::string_view id) const { return backends_.contains(id); }

Image remove_object(const Scene& scene, std::size_t object_index, std::string_view backend_id,
                    const BackendRegistry& registry) {
  const InpaintingBackend& backend = registry.get(backend_id);
  if (object_index >= scene.objects.size()) throw DatagenError("object not present in scene");
  return backend.remove(scene, object_index);
}

const char* horizontal_third(double x) noexcept {
  return x < 1.0 / 3.0 ? "left" : (x < 2.0 / 3.0 ? "center" : "right");
}

const char* vertical_third(double y) noexcept {
  return y < 1.0 / 3.0 ? "top" : (y < 2.0 / 3.0 ? "middle" : "bottom");
}

Caption caption_object(const SceneObject& obj, std::span<const SceneObject> context, Rng& rng) {
  Caption cap;
  cap.instruction = "add a " + obj.appearance.color_name + " " + shape_name(obj.appearance.shape);

  const std::string where = std::string(vertical_third(obj.bbox.y_c)) + " " +
                            horizontal_third(obj.bbox.x_c);
  const char* verb = rng.uniform() < 0.5 ? "place" : "put";

  const SceneObject* nearest = nullptr;
  double best = 0.0;
  for (const auto& other : context) {
    if (&other == &obj) continue;
    const double dx = other.bbox.x_c - obj.bbox.x_c;
    const double dy = other.bbox.y_c - obj.bbox.y_c;
    const double d = dx * dx + dy * dy;
    if (d == 0.0) continue;
    if (!nearest || d < best) {
      nearest = &other;
      best = d;
    }
  }
  if (!nearest) {
    cap.reasoning = std::string(verb) + " it in the " + where + " of the empty scene";
    return cap;
  }
  const double dx = obj.bbox.x_c - nearest->bbox.x_c;
  const double dy = obj.bbox.y_c - nearest->bbox.y_c;
  const char* relation = std::abs(dx) >= std::abs(dy) ? (dx < 0 ? "left of" : "right of")
                                                      : (dy < 0 ? "above" : "below");
  cap.reasoning = std::string(verb) + " it " + relation + " the " + nearest->category + ", in the " +
                  where;
  return cap;
}

std::vector<std::string> grammar_words(const SceneConfig& config) {
  std::set<std::string> words{"add",  "a",     "place", "put",    "it",     "in",     "the",
                              "of",   "empty", "scene", "left",   "right",  "center", "top",
                              "middle", "bottom", "above", "below", ","};
  for (const auto& t : kShapeTraits) words.insert(t.name);
  for (const auto& p : config.palette) words.insert(p.name);
  return {words.begin(), words.end()};
}

TouchPoint sample_touch(const NormalizedBBox& gt_bbox, Rng& rng) {
  const Corners c = gt_bbox.clamped_corners();
  const double x = gt_bbox.x_c + sample_centroid_offset(gt_bbox.w, rng);
  const double y = gt_bbox.y_c + sample_centroid_offset(gt_bbox.h, rng);
  return TouchPoint::normalized(std::clamp(x, c.x0, c.x1), std::clamp(y, c.y0, c.y1));
}

PixelRect pixel_rect(const NormalizedBBox& box, int width, int height, int dilate) {
  const Corners c = box.corners();
  constexpr double kTol = 1e-9;
  PixelRect r;
  r.x0 = std::max(0, static_cast<int>(std::floor(c.x0 * width + kTol)) - dilate);
  r.y0 = std::max(0, static_cast<int>(std::floor(c.y0 * height + kTol)) - dilate);
  r.x1 = std::min(width, static_cast<int>(std::ceil(c.x1 * width - kTol)) + dilate);
  r.y1 = std::min(height, static_cast<int>(std::ceil(c.y1 * height - kTol)) + dilate);
  return r;
}

std::optional<std::string> check_sample(const EditSample& s) {
  const int W = s.target_image.width();
  const int H = s.target_image.height();
  if (s.source_image.width() != W || s.source_image.height() != H)
    return "source and target sizes differ";
  if (s.gt_mask.width() != W || s.gt_mask.height() != H) return "mask size differs from image";
  if (!s.gt_bbox.valid()) return "invalid ground-truth box";
  if (s.touch.frame != Frame::kNormalized || !s.touch.in_bounds(W, H))
    return "touch is not a normalized in-bounds point";
  if (!s.gt_bbox.contains(s.touch.x, s.touch.y)) return "touch lies outside the ground-truth box";

  const PixelRect region = pixel_rect(s.gt_bbox, W, H, 2);
  bool any_mask = false;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const bool inside = region.contains(x, y);
      if (s.gt_mask.at(x, y) != 0.0f) {
        any_mask = true;
        if (!inside) return "mask extends beyond the dilated box";
      }
      if (!inside && !(s.source_image.at(x, y) == s.target_image.at(x, y)))
        return "source and target differ outside the dilated box";
    }
  }
  if (!any_mask) return "empty instance mask";
  return std::nullopt;
}

const char* split_name(Split s) noexcept {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kBench: return "bench";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "bench") return Split::kBench;
  throw DatagenError("unknown split '" + name + "'");
}

std::vector<const EditSample*> Dataset::split(Split s) const {
  std::vector<const EditSample*> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (manifest.records[i].split == s) out.push_back(&samples[i]);
  return out;
}

EditSample generate_sample(std::uint64_t seed, std::uint64_t index, const DatasetConfig& config,
                           const BackendRegistry& registry) {
  Rng rng(child_seed(seed, index));
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    Scene scene = generate_scene(rng, config.scene);
    std::vector<std::size_t> candidates;
    const auto kept = filter_objects(scene.objects, config.filter);
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
      const bool survived = std::any_of(kept.begin(), kept.end(), [&](const SceneObject& k) {
        return k.px == scene.objects[i].px && k.py == scene.objects[i].py;
      });
      if (survived) candidates.push_back(i);
    }
    if (candidates.empty()) continue;

    const std::size_t pick = candidates[rng.below(candidates.size())];
    const SceneObject& obj = scene.objects[pick];

    EditSample s;
    s.id = sample_id(index);
    s.source_image = remove_object(scene, pick, config.backend, registry);
    s.target_image = scene.image;
    s.gt_bbox = obj.bbox;
    s.gt_mask = object_mask(obj, scene.width, scene.height);

    std::vector<SceneObject> context;
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      if (i != pick) context.push_back(scene.objects[i]);
    const Caption cap = caption_object(obj, context, rng);
    s.instruction = cap.instruction;
    s.reasoning = cap.reasoning;
    s.touch = sample_touch(obj.bbox, rng);

    // Postprocessing: samples that break an invariant are dropped.
    if (check_sample(s)) continue;
    return s;
  }
  throw DatagenError("no usable object after " + std::to_string(config.max_retries) +
                     " attempts for sample " + std::to_string(index));
}

namespace {

Dataset generate_split(int n, std::uint64_t seed, const DatasetConfig& config, bool bench) {
  if (n < 1) throw DatagenError("sample count must be positive");
  if (!(config.split_ratio > 0.0 && config.split_ratio <= 1.0))
    throw DatagenError("split ratio must be in (0, 1]");
  Dataset ds;
  ds.manifest.seed = seed;
  ds.manifest.split_ratio = config.split_ratio;
  const int n_train = bench ? 0 : static_cast<int>(std::floor(n * config.split_ratio + 0.5));
  const BackendRegistry registry;
  for (int i = 0; i < n; ++i) {
    EditSample s = generate_sample(seed, static_cast<std::uint64_t>(i), config, registry);
    ManifestRecord r;
    r.id = s.id;
    r.split = bench ? Split::kBench : (i < n_train ? Split::kTrain : Split::kVal);
    r.source = "images/" + s.id + "_src.png";
    r.target = "images/" + s.id + "_tgt.png";
    r.mask = "masks/" + s.id + ".png";
    r.instruction = s.instruction;
    r.reasoning = s.reasoning;
    r.gt_bbox = s.gt_bbox;
    r.touch = s.touch;
    ds.manifest.counts[split_name(r.split)] += 1;
    ds.manifest.records.push_back(std::move(r));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

Dataset generate_dataset(int n, std::uint64_t seed, const DatasetConfig& config) {
  if (n < 10) throw DatagenError("a dataset needs at least 10 samples");
  return generate_split(n, seed, config, false);
}

Dataset generate_benchmark(int n, std::uint64_t seed, const DatasetConfig& config) {
  return generate_split(n, seed, config, true);
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["schema_version"] = kManifestSchema;
  j["seed"] = m.seed;
  j["split_ratio"] = m.split_ratio;
  j["counts"] = m.counts;
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back({{"id", r.id},
                       {"split", split_name(r.split)},
                       {"source", r.source},
                       {"target", r.target},
                       {"mask", r.mask},
                       {"instruction", r.instruction},
                       {"reasoning", r.reasoning},
                       {"gt_bbox", {r.gt_bbox.x_c, r.gt_bbox.y_c, r.gt_bbox.w, r.gt_bbox.h}},
                       {"touch", {{"x", r.touch.x}, {"y", r.touch.y}, {"frame", frame_name(r.touch.frame)}}}});
  }
  j["records"] = std::move(records);
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    if (j.at("schema_version").get<std::string>() != kManifestSchema)
      throw DatagenError("unsupported manifest schema " + j.at("schema_version").dump());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split_ratio = j.at("split_ratio").get<double>();
    m.counts = j.at("counts").get<std::map<std::string, int>>();
    for (const auto& jr : j.at("records")) {
      ManifestRecord r;
      r.id = jr.at("id").get<std::string>();
      r.split = parse_split(jr.at("split").get<std::string>());
      r.source = jr.at("source").get<std::string>();
      r.target = jr.at("target").get<std::string>();
      r.mask = jr.at("mask").get<std::string>();
      r.instruction = jr.at("instruction").get<std::string>();
      r.reasoning = jr.at("reasoning").get<std::string>();
      const auto b = jr.at("gt_bbox").get<std::vector<double>>();
      if (b.size() != 4) throw DatagenError("gt_bbox must have four entries");
      r.gt_bbox = NormalizedBBox::make(b[0], b[1], b[2], b[3]);
      const auto& t = jr.at("touch");
      r.touch = {t.at("x").get<double>(), t.at("y").get<double>(),
                 parse_frame(t.at("frame").get<std::string>())};
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DatagenError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& r = ds.manifest.records[i];
    const auto& s = ds.samples[i];
    write_png(root / r.source, s.source_image);
    write_png(root / r.target, s.target_image);
    write_png(root / r.mask, s.gt_mask);
  }
  write_file(root / "manifest.json", manifest_to_json(ds.manifest));
}

Dataset load_dataset(const std::filesystem::path& root) {
  const auto bytes = read_file(root / "manifest.json");
  Dataset ds;
  ds.manifest = manifest_from_json(std::string(bytes.begin(), bytes.end()));
  for (const auto& r : ds.manifest.records) {
    EditSample s;
    s.id = r.id;
    s.source_image = read_png(root / r.source);
    s.target_image = read_png(root / r.target);
    s.gt_mask = read_png_gray(root / r.mask);
    s.instruction = r.instruction;
    s.reasoning = r.reasoning;
    s.gt_bbox = r.gt_bbox;
    s.touch = r.touch;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

DatasetManifest build_dataset(int n, std::uint64_t seed, const std::filesystem::path& root,
                              const DatasetConfig& config) {
  Dataset ds = generate_dataset(n, seed, config);
  write_dataset(ds, root);
  return ds.manifest;
}

}  // namespace touchadd::datagen

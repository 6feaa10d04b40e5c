#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "touchadd/geometry.hpp"
#include "touchadd/image.hpp"
#include "touchadd/rng.hpp"

namespace touchadd::datagen {

class DatagenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Shape { kCircle, kSquare, kTriangle, kBar, kTower, kDiamond };

inline constexpr Shape kAllShapes[] = {Shape::kCircle, Shape::kSquare, Shape::kTriangle,
                                       Shape::kBar,    Shape::kTower,  Shape::kDiamond};

const char* shape_name(Shape s) noexcept;

struct PaletteEntry {
  std::string name;
  Rgb color;
};

std::vector<PaletteEntry> default_palette();

struct Appearance {
  Shape shape = Shape::kCircle;
  std::string color_name;
  Rgb color;
};

struct SceneObject {
  std::string category;  // "<color> <shape>"
  NormalizedBBox bbox;
  Appearance appearance;
  double salience_score = 1.0;

  // Pixel rectangle the shape is rasterized into; bbox is derived from it.
  int px = 0, py = 0, pw = 1, ph = 1;
};

struct Background {
  Rgb top{150, 180, 210};
  Rgb bottom{120, 140, 110};
  int stripe_period = 12;
  double stripe_amplitude = 6.0;
};

struct SceneConfig {
  int width = 64;
  int height = 64;
  int min_objects = 1;
  int max_objects = 4;
  std::vector<PaletteEntry> palette = default_palette();

  void validate() const;
};

struct Scene {
  int width = 0;
  int height = 0;
  Background background;
  std::vector<SceneObject> objects;
  Image image;
};

Scene generate_scene(Rng& rng, const SceneConfig& config);

/// Renders the background and the given objects in order.
Image render_scene(const Background& background, std::span<const SceneObject> objects, int width,
                   int height);

/// Exact binary rasterization mask of one object.
Plane object_mask(const SceneObject& obj, int width, int height);

struct FilterThresholds {
  double min_area = 0.002;
  double boundary_margin = 0.01;
  double score_thresh = 0.3;
};

/// Keeps objects that are large enough, away from the image border and
/// salient enough. Order preserved.
std::vector<SceneObject> filter_objects(std::span<const SceneObject> objects,
                                        const FilterThresholds& thresholds);

/// Object-removal backend. External inpainting models plug in here.
class InpaintingBackend {
 public:
  virtual ~InpaintingBackend() = default;
  virtual Image remove(const Scene& scene, std::size_t object_index) const = 0;
};

/// Default backend: re-renders the scene without the object.
class ResynthesisBackend final : public InpaintingBackend {
 public:
  Image remove(const Scene& scene, std::size_t object_index) const override;
};

class BackendRegistry {
 public:
  /// Registry holding the "resynth" backend.
  BackendRegistry();

  void add(std::string id, std::shared_ptr<const InpaintingBackend> backend);
  const InpaintingBackend& get(std::string_view id) const;
  bool contains(std::string_view id) const;

 private:
  std::map<std::string, std::shared_ptr<const InpaintingBackend>, std::less<>> backends_;
};

inline constexpr std::string_view kDefaultBackend = "resynth";

Image remove_object(const Scene& scene, std::size_t object_index,
                    std::string_view backend_id = kDefaultBackend,
                    const BackendRegistry& registry = BackendRegistry{});

struct Caption {
  std::string instruction;
  std::string reasoning;
};

/// Horizontal image third: "left", "center" or "right".
const char* horizontal_third(double x) noexcept;
/// Vertical image third: "top", "middle" or "bottom".
const char* vertical_third(double y) noexcept;

Caption caption_object(const SceneObject& obj, std::span<const SceneObject> context, Rng& rng);

/// Every word the caption and instruction templates can emit.
std::vector<std::string> grammar_words(const SceneConfig& config = {});

/// Simulated user touch: the box centroid moved by the centroid perturbation
/// law, clamped inside the box. Normalized frame.
TouchPoint sample_touch(const NormalizedBBox& gt_bbox, Rng& rng);

struct EditSample {
  std::string id;
  Image source_image;
  Image target_image;
  std::string instruction;
  std::string reasoning;
  NormalizedBBox gt_bbox;
  Plane gt_mask;
  TouchPoint touch;
};

/// Pixel rectangle [x0, x1) x [y0, y1) covering the box, grown by `dilate`
/// pixels and clipped to the image.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const noexcept { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};
PixelRect pixel_rect(const NormalizedBBox& box, int width, int height, int dilate = 0);

/// Empty when the sample satisfies every EditSample invariant; otherwise a
/// description of the first violation.
std::optional<std::string> check_sample(const EditSample& sample);

enum class Split { kTrain, kVal, kBench };
const char* split_name(Split s) noexcept;
Split parse_split(const std::string& name);

struct DatasetConfig {
  SceneConfig scene;
  FilterThresholds filter;
  std::string backend{kDefaultBackend};
  double split_ratio = 0.9;
  int max_retries = 32;
};

struct ManifestRecord {
  std::string id;
  Split split = Split::kTrain;
  std::string source;  // paths relative to the dataset root
  std::string target;
  std::string mask;
  std::string instruction;
  std::string reasoning;
  NormalizedBBox gt_bbox;
  TouchPoint touch;
};

inline constexpr std::string_view kManifestSchema = "touchadd.manifest/1";

struct DatasetManifest {
  std::uint64_t seed = 0;
  double split_ratio = 0.9;
  std::map<std::string, int> counts;
  std::vector<ManifestRecord> records;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<EditSample> samples;  // parallel to manifest.records

  std::vector<const EditSample*> split(Split s) const;
};

/// One sample through generate -> filter -> remove -> caption + touch.
EditSample generate_sample(std::uint64_t seed, std::uint64_t index, const DatasetConfig& config,
                           const BackendRegistry& registry = BackendRegistry{});

/// n samples with a train/val split at `config.split_ratio` (train first).
Dataset generate_dataset(int n, std::uint64_t seed, const DatasetConfig& config = {});

/// n samples all tagged as benchmark records.
Dataset generate_benchmark(int n, std::uint64_t seed, const DatasetConfig& config = {});

void write_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

/// generate_dataset followed by write_dataset.
DatasetManifest build_dataset(int n, std::uint64_t seed, const std::filesystem::path& root,
                              const DatasetConfig& config = {});

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

}  // namespace touchadd::datagen

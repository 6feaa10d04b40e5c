#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "touchadd/datagen.hpp"
#include "touchadd/geometry.hpp"
#include "touchadd/image.hpp"

namespace touchadd::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaVersionError : public EvalError {
 public:
  using EvalError::EvalError;
};

inline constexpr std::string_view kBenchmarkSchema = "touchadd.benchmark/1";

/// One image / instruction / touch triplet. Paths are relative to the
/// benchmark file; the touch is stored in the normalized frame.
struct BenchmarkRecord {
  std::string id;
  std::string image;
  std::string instruction;
  TouchPoint touch;
  std::optional<NormalizedBBox> gt_bbox;
  std::optional<std::string> target;
  std::optional<std::string> mask;

  bool operator==(const BenchmarkRecord&) const = default;
};

std::string benchmark_to_json(std::span<const BenchmarkRecord> records);
/// Throws SchemaVersionError for another schema and EvalError for malformed
/// records, including touches outside the unit square.
std::vector<BenchmarkRecord> benchmark_from_json(const std::string& text);

void save_benchmark(std::span<const BenchmarkRecord> records, const std::filesystem::path& path);
std::vector<BenchmarkRecord> load_benchmark(const std::filesystem::path& path);

/// A record with its images in memory.
struct BenchmarkItem {
  BenchmarkRecord record;
  Image image;
  std::optional<Image> target;
  std::optional<Plane> mask;
};

/// Loads the benchmark file and every referenced image.
std::vector<BenchmarkItem> load_benchmark_items(const std::filesystem::path& path);

/// Records for one split of a dataset written under `dataset_root`, with
/// paths rewritten relative to `benchmark_dir`.
std::vector<BenchmarkRecord> benchmark_from_manifest(const datagen::DatasetManifest& manifest,
                                                     datagen::Split split,
                                                     const std::filesystem::path& dataset_root,
                                                     const std::filesystem::path& benchmark_dir);

/// In-memory items for one split of a generated dataset.
std::vector<BenchmarkItem> items_from_dataset(const datagen::Dataset& dataset, datagen::Split split);

}  // namespace touchadd::eval

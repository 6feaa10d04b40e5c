#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "touchadd/editor/sample.hpp"
#include "touchadd/eval/benchmark.hpp"

namespace touchadd::eval {

/// Image embedding used for CLIP- or DINO-style similarity columns.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;  // report column, e.g. "CLIP"
  virtual std::vector<double> embed(const Image& image) const = 0;
};

/// Columns reported for embedding similarity. Without a registered backend
/// they are marked absent.
inline const std::vector<std::string> kEmbeddingColumns{"CLIP", "DINO"};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct RecordMetrics {
  std::string id;
  std::optional<NormalizedBBox> bbox;
  std::optional<double> iou;
  std::optional<double> l1;
  std::optional<double> l2;
  std::map<std::string, double> embedding;
  std::string error;  // empty on success
};

struct MetricsReport {
  std::string method;
  std::uint64_t seed = 0;
  std::optional<double> mean_iou;
  std::optional<double> iou_gt_0_5_rate;
  std::optional<double> l1;
  std::optional<double> l2;
  std::map<std::string, std::optional<double>> embedding;
  int failures = 0;
  std::vector<RecordMetrics> records;
};

/// Mean absolute and mean squared per-channel error between unit-interval
/// images. Throws EvalError on a size mismatch.
std::pair<double, double> pixel_errors(const Image& result, const Image& target);

using PlacementFn = std::function<NormalizedBBox(const BenchmarkItem&, std::uint64_t seed)>;

/// Runs the predictor on every record with seed child_seed(seed, index).
/// Throws EvalError if a record has no ground-truth box.
MetricsReport evaluate_placement(const PlacementFn& predictor, std::span<const BenchmarkItem> items,
                                 std::uint64_t seed = 0);

/// Fills mean_iou and the strict IoU > 0.5 rate from the per-record IoUs.
void summarize_iou(MetricsReport& report);

/// Pixel errors and embedding similarities of one blended result.
void score_edit(RecordMetrics& rm, const editor::EditResult& result, const BenchmarkItem& item,
                std::span<const std::shared_ptr<const EmbeddingBackend>> backends = {});

/// Fills l1, l2 and the embedding columns from the per-record values.
void summarize_edit(MetricsReport& report);

/// L1 / L2 of each blended image against its target, plus embedding
/// similarity for every registered backend.
MetricsReport evaluate_edit(std::span<const editor::EditResult> results, std::span<const BenchmarkItem> items,
                            std::span<const std::shared_ptr<const EmbeddingBackend>> backends = {});

}  // namespace touchadd::eval

#include "touchadd/eval/metrics.hpp"

#include <cmath>

namespace touchadd::eval {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw EvalError("embedding sizes differ");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::pair<double, double> pixel_errors(const Image& result, const Image& target) {
  if (result.width() != target.width() || result.height() != target.height())
    throw EvalError("result is " + std::to_string(result.width()) + "x" + std::to_string(result.height()) +
                    ", target is " + std::to_string(target.width()) + "x" + std::to_string(target.height()));
  const auto& a = result.bytes();
  const auto& b = target.bytes();
  double l1 = 0, l2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (static_cast<double>(a[i]) - b[i]) / 255.0;
    l1 += std::abs(d);
    l2 += d * d;
  }
  const double n = static_cast<double>(a.size());
  return {l1 / n, l2 / n};
}

void summarize_iou(MetricsReport& report) {
  double sum = 0;
  int n = 0, above = 0;
  for (const auto& r : report.records) {
    if (!r.iou) continue;
    sum += *r.iou;
    above += *r.iou > 0.5 ? 1 : 0;
    ++n;
  }
  if (n == 0) return;
  report.mean_iou = sum / n;
  report.iou_gt_0_5_rate = static_cast<double>(above) / n;
}

MetricsReport evaluate_placement(const PlacementFn& predictor, std::span<const BenchmarkItem> items,
                                 std::uint64_t seed) {
  for (const auto& it : items)
    if (!it.record.gt_bbox) throw EvalError("record " + it.record.id + " has no ground-truth box");
  MetricsReport report;
  report.seed = seed;
  for (std::size_t i = 0; i < items.size(); ++i) {
    RecordMetrics rm;
    rm.id = items[i].record.id;
    const NormalizedBBox b = predictor(items[i], child_seed(seed, i));
    rm.bbox = b;
    rm.iou = iou(b, *items[i].record.gt_bbox);
    report.records.push_back(std::move(rm));
  }
  summarize_iou(report);
  return report;
}

void score_edit(RecordMetrics& rm, const editor::EditResult& result, const BenchmarkItem& item,
                std::span<const std::shared_ptr<const EmbeddingBackend>> backends) {
  if (!item.target) throw EvalError("record " + item.record.id + " has no target image");
  const auto [a, b] = pixel_errors(result.blended_image, *item.target);
  rm.l1 = a;
  rm.l2 = b;
  for (const auto& be : backends)
    rm.embedding[be->name()] = cosine_similarity(be->embed(result.blended_image), be->embed(*item.target));
}

void summarize_edit(MetricsReport& report) {
  double l1 = 0, l2 = 0;
  int n = 0;
  std::map<std::string, std::pair<double, int>> emb;
  for (const auto& r : report.records) {
    for (const auto& [name, v] : r.embedding) emb[name].first += v, emb[name].second += 1;
    if (!r.l1) continue;
    l1 += *r.l1;
    l2 += *r.l2;
    ++n;
  }
  if (n > 0) {
    report.l1 = l1 / n;
    report.l2 = l2 / n;
  }
  for (const auto& col : kEmbeddingColumns) report.embedding.emplace(col, std::nullopt);
  for (const auto& [name, acc] : emb) report.embedding[name] = acc.first / acc.second;
}

MetricsReport evaluate_edit(std::span<const editor::EditResult> results, std::span<const BenchmarkItem> items,
                            std::span<const std::shared_ptr<const EmbeddingBackend>> backends) {
  if (results.size() != items.size()) throw EvalError("one edit result is needed per benchmark record");
  MetricsReport report;
  for (std::size_t i = 0; i < items.size(); ++i) {
    RecordMetrics rm;
    rm.id = items[i].record.id;
    score_edit(rm, results[i], items[i], backends);
    report.records.push_back(std::move(rm));
  }
  summarize_edit(report);
  return report;
}

}  // namespace touchadd::eval

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "touchadd/eval/metrics.hpp"

namespace touchadd::eval {

/// A method under comparison. `place` predicts a box; `edit` produces the
/// edited result, given the box from `place` when there is one. Either may be
/// empty, not both.
struct Method {
  std::string name;
  PlacementFn place;
  std::function<editor::EditResult(const BenchmarkItem&, const std::optional<NormalizedBBox>&, std::uint64_t)>
      edit;
};

struct ComparisonOptions {
  std::uint64_t seed = 0;
  std::string config_json = "{}";  // recorded with its hash in the report
  std::vector<std::shared_ptr<const EmbeddingBackend>> backends;
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  std::string config_json;
  std::vector<MetricsReport> methods;
};

/// Method i runs with seed child_seed(options.seed, i) and record r of it with
/// child_seed(that, r). A method throwing on a record marks that record
/// failed; the other records and methods still run.
ComparisonReport run_comparison(const std::vector<Method>& methods, std::span<const BenchmarkItem> items,
                                const ComparisonOptions& options);

std::string report_to_json(const ComparisonReport& report);
/// Aligned table: Method, mean IoU, IoU>0.5 (%), CLIP, DINO, L1, L2.
std::string report_table(const ComparisonReport& report);
/// One row per (method, record).
std::string report_csv(const ComparisonReport& report);

/// Writes report.json, table.txt and records.csv into `dir`.
void write_report(const ComparisonReport& report, const std::filesystem::path& dir);

}  // namespace touchadd::eval

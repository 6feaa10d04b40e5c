#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "touchadd/datagen.hpp"
#include "touchadd/eval/benchmark.hpp"
#include "touchadd/eval/compare.hpp"
#include "touchadd/eval/metrics.hpp"

namespace touchadd::eval {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("touchadd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<BenchmarkRecord> five_records() {
  std::vector<BenchmarkRecord> out;
  for (int i = 0; i < 5; ++i) {
    BenchmarkRecord r;
    r.id = "r" + std::to_string(i);
    r.image = "images/" + r.id + ".png";
    r.instruction = "add a red circle";
    r.touch = TouchPoint::normalized(0.1 * i, 0.25);
    if (i % 2 == 0) {
      r.gt_bbox = NormalizedBBox{0.1 * i + 0.05, 0.3, 0.2, 0.25};
      r.target = "images/" + r.id + "_tgt.png";
      r.mask = "masks/" + r.id + ".png";
    }
    out.push_back(r);
  }
  return out;
}

std::vector<BenchmarkItem> bench_items(int n, std::uint64_t seed = 1) {
  return items_from_dataset(datagen::generate_benchmark(n, seed), datagen::Split::kBench);
}

TEST(Benchmark, JsonRoundTrip) {
  const auto recs = five_records();
  const std::string text = benchmark_to_json(recs);
  EXPECT_EQ(benchmark_from_json(text), recs);
  EXPECT_EQ(json::parse(text).at("schema_version"), "touchadd.benchmark/1");
}

TEST(Benchmark, FileRoundTrip) {
  const fs::path dir = temp_dir("bench_rt");
  save_benchmark(five_records(), dir / "b.json");
  EXPECT_EQ(load_benchmark(dir / "b.json"), five_records());
  fs::remove_all(dir);
}

TEST(Benchmark, RejectsOtherSchemaVersion) {
  json j = json::parse(benchmark_to_json(five_records()));
  j["schema_version"] = "touchadd.benchmark/2";
  EXPECT_THROW(benchmark_from_json(j.dump()), SchemaVersionError);
}

TEST(Benchmark, RejectsMalformedRecords) {
  json j = json::parse(benchmark_to_json(five_records()));
  json bad_touch = j;
  bad_touch["records"][1]["touch"][0] = 1.2;
  EXPECT_THROW(benchmark_from_json(bad_touch.dump()), EvalError);
  json missing = j;
  missing["records"][0].erase("instruction");
  EXPECT_THROW(benchmark_from_json(missing.dump()), EvalError);
  json bad_box = j;
  bad_box["records"][0]["gt_bbox"] = json::array({0.5, 0.5, 0.0, 0.1});
  EXPECT_THROW(benchmark_from_json(bad_box.dump()), EvalError);
  EXPECT_THROW(benchmark_from_json("not json"), EvalError);
}

TEST(Benchmark, FromManifestLoadsImages) {
  const fs::path root = temp_dir("bench_manifest");
  const datagen::DatasetManifest m = datagen::build_dataset(10, 4, root / "data");
  const auto recs = benchmark_from_manifest(m, datagen::Split::kTrain, root / "data", root / "bench");
  ASSERT_EQ(recs.size(), 9u);
  save_benchmark(recs, root / "bench" / "benchmark.json");
  const auto items = load_benchmark_items(root / "bench" / "benchmark.json");
  const datagen::Dataset ds = datagen::load_dataset(root / "data");
  ASSERT_EQ(items.size(), 9u);
  EXPECT_EQ(items[0].image, ds.samples[0].source_image);
  ASSERT_TRUE(items[0].target);
  EXPECT_EQ(*items[0].target, ds.samples[0].target_image);
  EXPECT_EQ(items[0].record.gt_bbox, ds.samples[0].gt_bbox);
  fs::remove_all(root);
}

TEST(Metrics, OracleAndDisjointPredictors) {
  const auto items = bench_items(6);
  const MetricsReport oracle = evaluate_placement(
      [](const BenchmarkItem& it, std::uint64_t) { return *it.record.gt_bbox; }, items);
  EXPECT_DOUBLE_EQ(*oracle.mean_iou, 1.0);
  EXPECT_DOUBLE_EQ(*oracle.iou_gt_0_5_rate, 1.0);
  EXPECT_EQ(oracle.records.size(), items.size());

  const MetricsReport disjoint = evaluate_placement(
      [](const BenchmarkItem& it, std::uint64_t) {
        const NormalizedBBox g = *it.record.gt_bbox;
        return NormalizedBBox{g.x_c < 0.5 ? 0.995 : 0.005, g.y_c < 0.5 ? 0.995 : 0.005, 0.01, 0.01};
      },
      items);
  EXPECT_DOUBLE_EQ(*disjoint.mean_iou, 0.0);
  EXPECT_DOUBLE_EQ(*disjoint.iou_gt_0_5_rate, 0.0);
}

TEST(Metrics, RateCountsStrictlyAboveHalf) {
  MetricsReport r;
  for (double v : {0.6, 0.4, 0.9}) {
    RecordMetrics rm;
    rm.iou = v;
    r.records.push_back(rm);
  }
  summarize_iou(r);
  EXPECT_NEAR(*r.iou_gt_0_5_rate, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(*r.mean_iou, 1.9 / 3.0, 1e-12);

  MetricsReport edge;
  RecordMetrics half;
  half.iou = 0.5;
  edge.records.push_back(half);
  summarize_iou(edge);
  EXPECT_DOUBLE_EQ(*edge.iou_gt_0_5_rate, 0.0);
}

TEST(Metrics, MissingGroundTruthRejected) {
  auto items = bench_items(2);
  items[1].record.gt_bbox.reset();
  EXPECT_THROW(evaluate_placement([](const BenchmarkItem&, std::uint64_t) { return NormalizedBBox{}; }, items),
               EvalError);
}

TEST(Metrics, PredictorSeedsArePerRecord) {
  const auto items = bench_items(3);
  std::vector<std::uint64_t> seen;
  evaluate_placement(
      [&](const BenchmarkItem& it, std::uint64_t s) {
        seen.push_back(s);
        return *it.record.gt_bbox;
      },
      items, 77);
  EXPECT_EQ(seen, (std::vector<std::uint64_t>{child_seed(77, 0), child_seed(77, 1), child_seed(77, 2)}));
}

TEST(PixelErrors, ClosedForms) {
  const Image a(16, 16, {40, 90, 200});
  EXPECT_EQ(pixel_errors(a, a), std::make_pair(0.0, 0.0));
  const auto [l1, l2] = pixel_errors(Image(16, 16, {0, 0, 0}), Image(16, 16, {255, 255, 255}));
  EXPECT_DOUBLE_EQ(l1, 1.0);
  EXPECT_DOUBLE_EQ(l2, 1.0);

  // 51 / 255 = 0.2 exactly.
  const auto [o1, o2] = pixel_errors(Image(16, 16, {100, 100, 100}), Image(16, 16, {151, 151, 151}));
  EXPECT_NEAR(o1, 0.2, 1e-12);
  EXPECT_NEAR(o2, 0.04, 1e-12);

  // Alternating 25 and 26 byte offsets average to 0.1 on the unit scale.
  Image base(16, 16, {100, 100, 100}), shifted(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const std::uint8_t v = (x + y) % 2 ? 126 : 125;
      shifted.set(x, y, {v, v, v});
    }
  const auto [h1, h2] = pixel_errors(base, shifted);
  EXPECT_NEAR(h1, 0.1, 1e-12);
  EXPECT_NEAR(h2, (25.0 * 25.0 + 26.0 * 26.0) / (2.0 * 255.0 * 255.0), 1e-12);
  EXPECT_NEAR(h2, 0.01, 1e-4);

  EXPECT_THROW(pixel_errors(a, Image(17, 16)), EvalError);
}

class MeanColorBackend final : public EmbeddingBackend {
 public:
  explicit MeanColorBackend(std::string name) : name_(std::move(name)) {}
  std::string name() const override { return name_; }
  std::vector<double> embed(const Image& image) const override {
    std::vector<double> v(3, 0.0);
    for (std::size_t i = 0; i < image.bytes().size(); ++i) v[i % 3] += image.bytes()[i] + 1.0;
    return v;
  }

 private:
  std::string name_;
};

editor::EditResult result_from(const Image& img) {
  return {img, Plane(img.width(), img.height(), 0.0f), img};
}

TEST(Metrics, EvaluateEditWithAndWithoutBackends) {
  const auto items = bench_items(3);
  std::vector<editor::EditResult> exact;
  for (const auto& it : items) exact.push_back(result_from(*it.target));
  const MetricsReport plain = evaluate_edit(exact, items);
  EXPECT_DOUBLE_EQ(*plain.l1, 0.0);
  EXPECT_DOUBLE_EQ(*plain.l2, 0.0);
  for (const auto& col : kEmbeddingColumns) {
    ASSERT_TRUE(plain.embedding.count(col));
    EXPECT_FALSE(plain.embedding.at(col).has_value());
  }

  const std::vector<std::shared_ptr<const EmbeddingBackend>> backends{std::make_shared<MeanColorBackend>("CLIP")};
  const MetricsReport scored = evaluate_edit(exact, items, backends);
  ASSERT_TRUE(scored.embedding.at("CLIP").has_value());
  EXPECT_NEAR(*scored.embedding.at("CLIP"), 1.0, 1e-12);
  EXPECT_FALSE(scored.embedding.at("DINO").has_value());

  std::vector<editor::EditResult> sources;
  for (const auto& it : items) sources.push_back(result_from(it.image));
  EXPECT_GT(*evaluate_edit(sources, items).l1, 0.0);
}

TEST(Cosine, Basics) {
  const std::vector<double> a{1, 0}, b{0, 2}, c{3, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, c), 1.0);
}

Method random_only() {
  return {"random-placement",
          [](const BenchmarkItem& it, std::uint64_t seed) {
            Rng rng(seed);
            return random_placement(it.record.touch, {0.2, 0.05, 0.2, 0.05}, rng);
          },
          {}};
}

TEST(Comparison, SingleRowAndDeterministic) {
  const auto items = bench_items(8);
  const ComparisonReport a = run_comparison({random_only()}, items, {5, "{\"k\":1}", {}});
  const ComparisonReport b = run_comparison({random_only()}, items, {5, "{\"k\":1}", {}});
  ASSERT_EQ(a.methods.size(), 1u);
  EXPECT_EQ(a.methods[0].records.size(), items.size());
  EXPECT_EQ(report_to_json(a), report_to_json(b));
  EXPECT_EQ(a.methods[0].seed, child_seed(5, 0));

  const std::string table = report_table(a);
  std::istringstream lines(table);
  std::string header, row, extra;
  std::getline(lines, header);
  EXPECT_NE(header.find("mean IoU"), std::string::npos);
  EXPECT_NE(header.find("IoU>0.5 (%)"), std::string::npos);
  EXPECT_LT(header.find("CLIP"), header.find("DINO"));
  EXPECT_LT(header.find("DINO"), header.find("L1"));
  int rows = 0;
  std::string random_row;
  while (std::getline(lines, row))
    if (row.find("random-placement") != std::string::npos) ++rows, random_row = row;
  EXPECT_EQ(rows, 1);
  // Placement-only methods leave the edit columns empty.
  EXPECT_NE(random_row.find(" - "), std::string::npos);

  const ComparisonReport other = run_comparison({random_only()}, items, {6, "{}", {}});
  EXPECT_NE(report_to_json(other), report_to_json(a));
}

TEST(Comparison, FailuresAreRecordedPerRecord) {
  const auto items = bench_items(4);
  Method flaky{"flaky",
               [&](const BenchmarkItem& it, std::uint64_t) -> NormalizedBBox {
                 if (it.record.id == items[1].record.id) throw std::runtime_error("boom");
                 return *it.record.gt_bbox;
               },
               {}};
  const ComparisonReport r = run_comparison({random_only(), flaky}, items, {1, "{}", {}});
  ASSERT_EQ(r.methods.size(), 2u);
  const MetricsReport& m = r.methods[1];
  EXPECT_EQ(m.failures, 1);
  EXPECT_EQ(m.records.size(), items.size());
  EXPECT_EQ(m.records[1].error, "boom");
  EXPECT_DOUBLE_EQ(*m.mean_iou, 1.0);  // over the records that ran
  EXPECT_EQ(r.methods[0].failures, 0);
}

TEST(Comparison, EditMethodsAndReportFiles) {
  const auto items = bench_items(3);
  Method copy_target{"oracle-edit", {},
                     [](const BenchmarkItem& it, const std::optional<NormalizedBBox>& box, std::uint64_t) {
                       EXPECT_FALSE(box.has_value());
                       return result_from(*it.target);
                     }};
  const ComparisonReport r = run_comparison({random_only(), copy_target}, items, {2, "{}", {}});
  EXPECT_FALSE(r.methods[1].mean_iou.has_value());
  EXPECT_DOUBLE_EQ(*r.methods[1].l1, 0.0);
  EXPECT_FALSE(r.methods[0].l1.has_value());
  // No embedding backend configured: the edit row marks those columns unavailable.
  EXPECT_NE(report_table(r).find("n/a"), std::string::npos);

  const fs::path dir = temp_dir("report");
  write_report(r, dir);
  for (const char* f : {"report.json", "table.txt", "records.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const json j = json::parse(read_file(dir / "report.json"));
  EXPECT_EQ(j.at("schema_version"), "touchadd.report/1");
  EXPECT_EQ(j.at("methods").size(), 2u);
  EXPECT_EQ(j.at("methods")[0].at("records").size(), items.size());
  const std::string csv = read_file(dir / "records.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 1 + 2 * items.size());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace touchadd::eval

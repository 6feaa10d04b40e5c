#include "touchadd/eval/benchmark.hpp"

#include <json.hpp>

namespace touchadd::eval {

using nlohmann::json;

namespace {

json box_json(const NormalizedBBox& b) { return json::array({b.x_c, b.y_c, b.w, b.h}); }

NormalizedBBox box_from(const json& j, const std::string& id) {
  if (!j.is_array() || j.size() != 4) throw EvalError("record " + id + ": gt_bbox must have four numbers");
  const NormalizedBBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw EvalError("record " + id + ": invalid gt_bbox " + to_string(b));
  return b;
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  return std::filesystem::relative(p, base).generic_string();
}

}  // namespace

std::string benchmark_to_json(std::span<const BenchmarkRecord> records) {
  json arr = json::array();
  for (const auto& r : records) {
    if (r.touch.frame != Frame::kNormalized) throw EvalError("record " + r.id + ": touch must be normalized");
    json j{{"id", r.id}, {"image", r.image}, {"instruction", r.instruction}, {"touch", {r.touch.x, r.touch.y}}};
    if (r.gt_bbox) j["gt_bbox"] = box_json(*r.gt_bbox);
    if (r.target) j["target"] = *r.target;
    if (r.mask) j["mask"] = *r.mask;
    arr.push_back(std::move(j));
  }
  return json{{"schema_version", kBenchmarkSchema}, {"records", arr}}.dump(2) + "\n";
}

std::vector<BenchmarkRecord> benchmark_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw EvalError(std::string("malformed benchmark: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_string())
    throw SchemaVersionError("benchmark has no schema_version");
  const std::string version = j["schema_version"];
  if (version != kBenchmarkSchema)
    throw SchemaVersionError("unsupported benchmark schema '" + version + "', expected '" +
                             std::string(kBenchmarkSchema) + "'");
  if (!j.contains("records") || !j["records"].is_array()) throw EvalError("benchmark has no records array");

  std::vector<BenchmarkRecord> out;
  for (const auto& rj : j["records"]) {
    try {
      BenchmarkRecord r;
      r.id = rj.at("id").get<std::string>();
      r.image = rj.at("image").get<std::string>();
      r.instruction = rj.at("instruction").get<std::string>();
      const auto& t = rj.at("touch");
      if (!t.is_array() || t.size() != 2) throw EvalError("record " + r.id + ": touch must be [x, y]");
      r.touch = TouchPoint::normalized(t[0].get<double>(), t[1].get<double>());
      if (!(r.touch.x >= 0.0 && r.touch.x <= 1.0 && r.touch.y >= 0.0 && r.touch.y <= 1.0))
        throw EvalError("record " + r.id + ": touch outside the image");
      if (rj.contains("gt_bbox")) r.gt_bbox = box_from(rj["gt_bbox"], r.id);
      if (rj.contains("target")) r.target = rj["target"].get<std::string>();
      if (rj.contains("mask")) r.mask = rj["mask"].get<std::string>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw EvalError(std::string("malformed benchmark record: ") + e.what());
    }
  }
  return out;
}

void save_benchmark(std::span<const BenchmarkRecord> records, const std::filesystem::path& path) {
  write_file(path, benchmark_to_json(records));
}

std::vector<BenchmarkRecord> load_benchmark(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return benchmark_from_json(std::string(bytes.begin(), bytes.end()));
}

std::vector<BenchmarkItem> load_benchmark_items(const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  std::vector<BenchmarkItem> items;
  for (auto& r : load_benchmark(path)) {
    BenchmarkItem it;
    it.image = read_png(dir / r.image);
    if (r.target) it.target = read_png(dir / *r.target);
    if (r.mask) it.mask = read_png_gray(dir / *r.mask);
    it.record = std::move(r);
    items.push_back(std::move(it));
  }
  return items;
}

std::vector<BenchmarkRecord> benchmark_from_manifest(const datagen::DatasetManifest& manifest,
                                                     datagen::Split split,
                                                     const std::filesystem::path& dataset_root,
                                                     const std::filesystem::path& benchmark_dir) {
  const auto base = std::filesystem::absolute(benchmark_dir);
  const auto root = std::filesystem::absolute(dataset_root);
  std::vector<BenchmarkRecord> out;
  for (const auto& m : manifest.records) {
    if (m.split != split) continue;
    BenchmarkRecord r;
    r.id = m.id;
    r.image = relative_to(root / m.source, base);
    r.instruction = m.instruction;
    r.touch = m.touch;
    r.gt_bbox = m.gt_bbox;
    r.target = relative_to(root / m.target, base);
    r.mask = relative_to(root / m.mask, base);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BenchmarkItem> items_from_dataset(const datagen::Dataset& dataset, datagen::Split split) {
  std::vector<BenchmarkItem> items;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& m = dataset.manifest.records[i];
    if (m.split != split) continue;
    const auto& s = dataset.samples[i];
    BenchmarkItem it;
    it.record = {m.id, m.source, m.instruction, s.touch, s.gt_bbox, m.target, m.mask};
    it.image = s.source_image;
    it.target = s.target_image;
    it.mask = s.gt_mask;
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace touchadd::eval

#include "touchadd/eval/compare.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "touchadd/nn/params.hpp"

namespace touchadd::eval {

using nlohmann::json;

namespace {

constexpr const char* kReportSchema = "touchadd.report/1";

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

ComparisonReport run_comparison(const std::vector<Method>& methods, std::span<const BenchmarkItem> items,
                                const ComparisonOptions& options) {
  ComparisonReport report;
  report.seed = options.seed;
  report.config_json = options.config_json;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const Method& method = methods[m];
    if (!method.place && !method.edit) throw EvalError("method " + method.name + " has nothing to run");
    MetricsReport row;
    row.method = method.name;
    row.seed = child_seed(options.seed, m);
    for (std::size_t r = 0; r < items.size(); ++r) {
      const BenchmarkItem& item = items[r];
      const std::uint64_t rs = child_seed(row.seed, r);
      RecordMetrics rm;
      rm.id = item.record.id;
      try {
        if (method.place) {
          rm.bbox = method.place(item, child_seed(rs, 0));
          if (item.record.gt_bbox) rm.iou = iou(*rm.bbox, *item.record.gt_bbox);
        }
        if (method.edit) score_edit(rm, method.edit(item, rm.bbox, child_seed(rs, 1)), item, options.backends);
      } catch (const std::exception& e) {
        rm.error = e.what();
        rm.iou.reset();
        rm.l1.reset();
        rm.l2.reset();
        rm.embedding.clear();
        ++row.failures;
      }
      row.records.push_back(std::move(rm));
    }
    if (method.place) summarize_iou(row);
    if (method.edit) summarize_edit(row);
    report.methods.push_back(std::move(row));
  }
  return report;
}

std::string report_to_json(const ComparisonReport& report) {
  json methods = json::array();
  for (const auto& m : report.methods) {
    json records = json::array();
    for (const auto& r : m.records) {
      json rj{{"id", r.id}, {"iou", opt(r.iou)}, {"l1", opt(r.l1)}, {"l2", opt(r.l2)}};
      rj["bbox"] = r.bbox ? json::array({r.bbox->x_c, r.bbox->y_c, r.bbox->w, r.bbox->h}) : json(nullptr);
      rj["embedding"] = r.embedding;
      rj["error"] = r.error.empty() ? json(nullptr) : json(r.error);
      records.push_back(std::move(rj));
    }
    json emb = json::object();
    for (const auto& [k, v] : m.embedding) emb[k] = opt(v);
    methods.push_back({{"method", m.method},
                       {"seed", m.seed},
                       {"mean_iou", opt(m.mean_iou)},
                       {"iou_gt_0_5_rate", opt(m.iou_gt_0_5_rate)},
                       {"l1", opt(m.l1)},
                       {"l2", opt(m.l2)},
                       {"embedding", emb},
                       {"failures", m.failures},
                       {"records", records}});
  }
  return json{{"schema_version", kReportSchema},
              {"seed", report.seed},
              {"config", json::parse(report.config_json)},
              {"config_hash", hex64(nn::fnv1a64(report.config_json))},
              {"methods", methods}}
             .dump(2) +
         "\n";
}

std::string report_table(const ComparisonReport& report) {
  std::vector<std::vector<std::string>> rows{
      {"Method", "mean IoU", "IoU>0.5 (%)", "CLIP", "DINO", "L1", "L2", "Failed"}};
  for (const auto& m : report.methods) {
    auto cell = [](const std::optional<double>& v, int digits, double scale = 1.0) {
      return v ? fixed(*v * scale, digits) : std::string("-");
    };
    std::vector<std::string> row{m.method, cell(m.mean_iou, 3), cell(m.iou_gt_0_5_rate, 1, 100.0)};
    for (const auto& col : kEmbeddingColumns) {
      const auto it = m.embedding.find(col);
      if (it == m.embedding.end()) row.push_back("-");
      else row.push_back(it->second ? fixed(*it->second, 3) : std::string("n/a"));
    }
    row.push_back(cell(m.l1, 4));
    row.push_back(cell(m.l2, 4));
    row.push_back(std::to_string(m.failures));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == 0) out << r[c] << std::string(width[c] - r[c].size(), ' ');
      else out << "  " << std::string(width[c] - r[c].size(), ' ') << r[c];
    }
    out << '\n';
  }
  return out.str();
}

std::string report_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "method,id,x_c,y_c,w,h,iou,l1,l2,error\n";
  auto num = [&out](const std::optional<double>& v) {
    if (v) out << *v;
  };
  for (const auto& m : report.methods)
    for (const auto& r : m.records) {
      out << csv_field(m.method) << ',' << csv_field(r.id);
      for (int k = 0; k < 4; ++k) {
        out << ',';
        if (r.bbox) out << (k == 0 ? r.bbox->x_c : k == 1 ? r.bbox->y_c : k == 2 ? r.bbox->w : r.bbox->h);
      }
      out << ',';
      num(r.iou);
      out << ',';
      num(r.l1);
      out << ',';
      num(r.l2);
      out << ',' << csv_field(r.error) << '\n';
    }
  return out.str();
}

void write_report(const ComparisonReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", report_to_json(report));
  write_file(dir / "table.txt", report_table(report));
  write_file(dir / "records.csv", report_csv(report));
}

}  // namespace touchadd::eval

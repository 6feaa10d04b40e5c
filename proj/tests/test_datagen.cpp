#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "touchadd/datagen.hpp"

namespace touchadd::datagen {
namespace {

namespace fs = std::filesystem;

SceneObject object_with(NormalizedBBox box, double score = 1.0) {
  SceneObject o;
  o.category = "red circle";
  o.bbox = box;
  o.salience_score = score;
  return o;
}

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

TEST(Scene, DeterministicAndValid) {
  SceneConfig cfg;
  Rng a(42), b(42);
  const Scene s1 = generate_scene(a, cfg);
  const Scene s2 = generate_scene(b, cfg);
  EXPECT_EQ(s1.image, s2.image);
  ASSERT_EQ(s1.objects.size(), s2.objects.size());
  EXPECT_GE(s1.objects.size(), 1u);
  EXPECT_LE(s1.objects.size(), 4u);
  for (const auto& o : s1.objects) {
    EXPECT_TRUE(o.bbox.valid());
    EXPECT_GE(o.salience_score, 0.0);
    EXPECT_LE(o.salience_score, 1.0);
  }
}

TEST(Scene, ObjectCountRange) {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 1;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    EXPECT_EQ(generate_scene(rng, cfg).objects.size(), 1u);
  }
}

TEST(Scene, RejectsTinyResolution) {
  SceneConfig cfg;
  cfg.width = 15;
  Rng rng(1);
  EXPECT_THROW(generate_scene(rng, cfg), std::exception);
}

TEST(Scene, MaskMatchesRasterization) {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 1;
  Rng rng(5);
  const Scene s = generate_scene(rng, cfg);
  const Plane m = object_mask(s.objects[0], s.width, s.height);
  const Image bare = render_scene(s.background, {}, s.width, s.height);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (m.at(x, y) == 0.0f) ASSERT_EQ(s.image.at(x, y), bare.at(x, y));
  EXPECT_GT(m.sum(), 0.0);
}

TEST(Filter, VacuousKeepsAll) {
  const std::vector<SceneObject> objs{object_with({0.5, 0.5, 0.02, 0.02}, 0.0),
                                      object_with({0.05, 0.5, 0.1, 0.1}, 0.5)};
  EXPECT_EQ(filter_objects(objs, {0.0, 0.0, 0.0}).size(), 2u);
}

TEST(Filter, AreaMarginScore) {
  // 0.02 * 0.02 = 0.0004 < 0.001
  EXPECT_TRUE(filter_objects(std::vector{object_with({0.5, 0.5, 0.02, 0.02})}, {0.001, 0.0, 0.0}).empty());
  // Left edge at 0.005 < margin 0.01.
  EXPECT_TRUE(filter_objects(std::vector{object_with({0.105, 0.5, 0.2, 0.2})}, {0.0, 0.01, 0.0}).empty());
  EXPECT_TRUE(filter_objects(std::vector{object_with({0.5, 0.5, 0.2, 0.2}, 0.2)}, {0.0, 0.0, 0.3}).empty());
}

TEST(Filter, OrderPreservedAndMonotone) {
  Rng rng(9);
  std::vector<SceneObject> objs;
  for (int i = 0; i < 200; ++i)
    objs.push_back(object_with({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.01, 0.2),
                                rng.uniform(0.01, 0.2)},
                               rng.uniform()));
  const auto kept = filter_objects(objs, {});
  std::size_t j = 0;
  for (const auto& o : objs)
    if (j < kept.size() && o.bbox == kept[j].bbox) ++j;
  EXPECT_EQ(j, kept.size());
  std::size_t prev = objs.size() + 1;
  for (double a : {0.0, 0.002, 0.005, 0.01, 0.02}) {
    const std::size_t n = filter_objects(objs, {a, 0.01, 0.3}).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(Remove, DefaultBackendMatchesRerenderAndIsLocal) {
  SceneConfig cfg;
  cfg.min_objects = cfg.max_objects = 3;
  Rng rng(12);
  const Scene s = generate_scene(rng, cfg);
  const Image removed = remove_object(s, 1);
  const std::vector<SceneObject> rest{s.objects[0], s.objects[2]};
  EXPECT_EQ(removed, render_scene(s.background, rest, s.width, s.height));
  const PixelRect r = pixel_rect(s.objects[1].bbox, s.width, s.height, 2);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (!r.contains(x, y)) ASSERT_EQ(removed.at(x, y), s.image.at(x, y));
}

class EchoBackend final : public InpaintingBackend {
 public:
  Image remove(const Scene& scene, std::size_t) const override { return scene.image; }
};

TEST(Remove, PluggableBackend) {
  BackendRegistry reg;
  reg.add("echo", std::make_shared<EchoBackend>());
  Rng rng(1);
  const Scene s = generate_scene(rng, {});
  EXPECT_EQ(remove_object(s, 0, "echo", reg), s.image);
  EXPECT_THROW(remove_object(s, 0, "lama", reg), std::exception);
  EXPECT_THROW(remove_object(s, 99), DatagenError);
}

TEST(Caption, LoneObject) {
  SceneObject o = object_with({0.2, 0.8, 0.1, 0.1});
  o.appearance.color_name = "red";
  o.appearance.shape = Shape::kCircle;
  Rng rng(3);
  const Caption c = caption_object(o, std::vector{o}, rng);
  EXPECT_EQ(c.instruction, "add a red circle");
  EXPECT_NE(c.reasoning.find("bottom left"), std::string::npos);
}

TEST(Caption, ReasoningMentionsThirdAndIsDeterministic) {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const Scene s = generate_scene(rng, {});
    const auto& o = s.objects[0];
    Rng a(i), b(i);
    const Caption c1 = caption_object(o, s.objects, a);
    const Caption c2 = caption_object(o, s.objects, b);
    EXPECT_EQ(c1.reasoning, c2.reasoning);
    EXPECT_EQ(c1.instruction, c2.instruction);
    const double x = o.bbox.x_c;
    const std::string third = x < 1.0 / 3 ? "left" : x < 2.0 / 3 ? "center" : "right";
    EXPECT_NE(c1.reasoning.find(" " + third), std::string::npos) << c1.reasoning;
  }
}

TEST(Touch, InsideBoxAndSpread) {
  Rng rng(4);
  const NormalizedBBox box{0.5, 0.5, 0.3, 0.6};
  const int n = 20000;
  double sx = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    const TouchPoint t = sample_touch(box, rng);
    ASSERT_TRUE(box.contains(t.x, t.y));
    sx += t.x;
    sxx += t.x * t.x;
  }
  const double sd = std::sqrt(sxx / n - (sx / n) * (sx / n));
  EXPECT_NEAR(sd, 0.3 / 6.0, 0.05 * 0.3 / 6.0);

  const NormalizedBBox tiny{0.4, 0.7, 1e-9, 1e-9};
  const TouchPoint t = sample_touch(tiny, rng);
  EXPECT_NEAR(t.x, 0.4, 1e-9);
  EXPECT_NEAR(t.y, 0.7, 1e-9);
}

TEST(Dataset, SplitAndInvariants) {
  const Dataset ds = generate_dataset(10, 77);
  EXPECT_EQ(ds.split(Split::kTrain).size(), 9u);
  EXPECT_EQ(ds.split(Split::kVal).size(), 1u);
  EXPECT_EQ(ds.manifest.counts.at("train"), 9);
  for (const auto& s : ds.samples) {
    const auto problem = check_sample(s);
    EXPECT_FALSE(problem.has_value()) << *problem;
    const PixelRect r = pixel_rect(s.gt_bbox, s.target_image.width(), s.target_image.height(), 2);
    for (int y = 0; y < s.target_image.height(); ++y)
      for (int x = 0; x < s.target_image.width(); ++x) {
        if (r.contains(x, y)) continue;
        ASSERT_EQ(s.source_image.at(x, y), s.target_image.at(x, y));
        ASSERT_EQ(s.gt_mask.at(x, y), 0.0f);
      }
  }
  EXPECT_THROW(generate_dataset(9, 1), std::exception);
}

TEST(Dataset, CheckSampleCatchesViolations) {
  EditSample s = generate_dataset(10, 3).samples[0];
  ASSERT_FALSE(check_sample(s));
  EditSample moved = s;
  moved.touch = TouchPoint::normalized(s.gt_bbox.x_c > 0.5 ? 0.0 : 1.0, s.gt_bbox.y_c);
  EXPECT_TRUE(check_sample(moved));
  EditSample leaked = s;
  leaked.source_image.set(0, 0, {1, 2, 3});
  leaked.target_image.set(0, 0, {4, 5, 6});
  EXPECT_TRUE(check_sample(leaked));
}

TEST(Dataset, BuildIsDeterministicAndRoundTrips) {
  const fs::path a = temp_dir("ds_a"), b = temp_dir("ds_b");
  build_dataset(12, 5, a);
  build_dataset(12, 5, b);
  EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));

  const Dataset loaded = load_dataset(a);
  const Dataset fresh = generate_dataset(12, 5);
  ASSERT_EQ(loaded.samples.size(), fresh.samples.size());
  for (std::size_t i = 0; i < fresh.samples.size(); ++i) {
    EXPECT_EQ(loaded.samples[i].source_image, fresh.samples[i].source_image);
    EXPECT_EQ(loaded.samples[i].target_image, fresh.samples[i].target_image);
    EXPECT_EQ(loaded.samples[i].gt_mask, fresh.samples[i].gt_mask);
    EXPECT_EQ(loaded.samples[i].reasoning, fresh.samples[i].reasoning);
    EXPECT_EQ(loaded.samples[i].touch, fresh.samples[i].touch);
    EXPECT_EQ(loaded.samples[i].gt_bbox, fresh.samples[i].gt_bbox);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, ManifestJsonRoundTripAndSchema) {
  const Dataset ds = generate_dataset(10, 2);
  const std::string text = manifest_to_json(ds.manifest);
  EXPECT_EQ(manifest_to_json(manifest_from_json(text)), text);
  std::string bad = text;
  bad.replace(bad.find("touchadd.manifest/1"), 19, "touchadd.manifest/9");
  EXPECT_THROW(manifest_from_json(bad), std::exception);
}

TEST(Dataset, GrammarCoversCaptions) {
  const auto words = grammar_words();
  const std::set<std::string> vocab(words.begin(), words.end());
  for (const auto& s : generate_dataset(40, 8).samples) {
    std::istringstream in(s.instruction + " " + s.reasoning);
    std::string w;
    while (in >> w) {
      if (w.back() == ',') {
        w.pop_back();
      }
      EXPECT_TRUE(vocab.count(w)) << w;
    }
  }
}

}  // namespace
}  // namespace touchadd::datagen

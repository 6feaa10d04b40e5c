#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "touchadd/app/cli.hpp"
#include "touchadd/app/config.hpp"
#include "touchadd/app/pipeline.hpp"
#include "touchadd/image.hpp"

namespace touchadd::app {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("touchadd_app_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  const auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Config, ParsesSectionsTypesAndComments) {
  const Config c = Config::parse(
      "top = 1\n"
      "# full-line comment\n"
      "[placement]\n"
      "  lr = 1e-3   # trailing\n"
      "augment = false\n"
      "[editor]\n"
      "conditioning = \"touch # not a comment\"\n");
  EXPECT_EQ(c.get_int("top", 0), 1);
  EXPECT_DOUBLE_EQ(c.get_double("placement.lr", 0.0), 1e-3);
  EXPECT_FALSE(c.get_bool("placement.augment", true));
  EXPECT_EQ(c.get_string("editor.conditioning", ""), "touch # not a comment");
  EXPECT_EQ(c.get_int("placement.layers", 7), 7);
  EXPECT_TRUE(c.unused().empty());
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(Config::parse("[x]\nk = 1\n[x]\nk = 2\n"), ConfigError);
  EXPECT_THROW(Config::parse("[open\n"), ConfigError);
  EXPECT_THROW(Config::parse("just words\n"), ConfigError);
  EXPECT_THROW(Config::parse("k =\n"), ConfigError);
  EXPECT_THROW(Config::parse("k = \"open\n"), ConfigError);
  EXPECT_THROW(Config::parse("bad key = 1\n"), ConfigError);
}

TEST(Config, TypeErrorsNameTheKey) {
  const Config c = Config::parse("[p]\nn = 1.5\nb = yes\nx = abc\n");
  EXPECT_THROW(c.get_int("p.n", 0), ConfigError);
  EXPECT_THROW(c.get_bool("p.b", false), ConfigError);
  try {
    c.get_double("p.x", 0.0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("p.x"), std::string::npos);
  }
}

TEST(Config, TracksUnusedKeysAndCanonicalJson) {
  const Config c = Config::parse("[placement]\nlayers = 2\nlayres = 3\n");
  const auto tc = placement_train_config(c);
  EXPECT_EQ(tc.model.layers, 2);
  EXPECT_EQ(c.unused(), std::set<std::string>{"placement.layres"});
  EXPECT_EQ(Config::parse("[a]\nx=1\n[b]\ny=2\n").to_json(), Config::parse("[b]\ny = 2\n[a]\nx = 1\n").to_json());
}

TEST(Config, LoadReportsPath) {
  try {
    Config::load("/nonexistent/touchadd.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/touchadd.toml"), std::string::npos);
  }
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(cli({}).code, 0);
  EXPECT_NE(cli({"frobnicate"}).code, 0);
  EXPECT_NE(cli({"gen-data"}).code, 0);  // --out missing
  EXPECT_NE(cli({"eval", "--out", "/tmp/x", "--benchmark", "/nonexistent.json", "--placement", "/nonexistent"}).code, 0);
  const CliRun help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("train-placement"), std::string::npos);
}

TEST(Cli, RejectsUnknownConfigKey) {
  const fs::path dir = temp_dir("badkey");
  std::ofstream(dir / "c.toml") << "[data]\nimage_size = 32\nimgae_size = 32\n";
  const CliRun r = cli({"gen-data", "--config", (dir / "c.toml").string(), "--n", "4", "--bench", "2", "--out",
                     (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("data.imgae_size"), std::string::npos);
  fs::remove_all(dir);
}

constexpr const char* kTinyConfig =
    "[data]\n"
    "image_size = 32\n"
    "[placement]\n"
    "image_size = 16\n"
    "patch = 8\n"
    "d_model = 16\n"
    "layers = 1\n"
    "heads = 2\n"
    "context = 64\n"
    "epochs = 1\n"
    "batch_size = 4\n"
    "[editor]\n"
    "image_size = 16\n"
    "base_channels = 4\n"
    "embed_dim = 8\n"
    "steps = 4\n"
    "epochs = 1\n"
    "batch_size = 4\n";

// Runs every verb into `root`; returns the files that must be byte-identical.
std::vector<std::string> run_pipeline(const fs::path& root, const fs::path& config) {
  const std::string cfg = config.string();
  const fs::path data = root / "data", pl = root / "pl", ed = root / "ed", et = root / "et", ev = root / "ev",
                 cmp = root / "cmp";
  EXPECT_EQ(cli({"gen-data", "--config", cfg, "--seed", "4", "--n", "12", "--bench", "4", "--out", data.string()}).code, 0);
  EXPECT_EQ(cli({"train-placement", "--config", cfg, "--seed", "4", "--data", (data / "dataset").string(), "--out",
                 pl.string()})
                .code,
            0);
  EXPECT_EQ(cli({"train-editor", "--config", cfg, "--seed", "4", "--data", (data / "dataset").string(), "--out",
                 ed.string()})
                .code,
            0);
  EXPECT_EQ(cli({"train-editor", "--config", cfg, "--seed", "4", "--data", (data / "dataset").string(),
                 "--conditioning", "touch", "--out", et.string()})
                .code,
            0);
  const std::string bench = (data / "benchmark.json").string();
  EXPECT_EQ(cli({"eval", "--config", cfg, "--seed", "4", "--benchmark", bench, "--placement",
                 (pl / "placement.ckpt").string(), "--editor", (ed / "editor.ckpt").string(), "--out", ev.string()})
                .code,
            0);
  const CliRun c = cli({"compare", "--config", cfg, "--seed", "4", "--benchmark", bench, "--placement",
                     (pl / "placement.ckpt").string(), "--editor", (ed / "editor.ckpt").string(), "--editor-touch",
                     (et / "editor.ckpt").string(), "--out", cmp.string()});
  EXPECT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.out.find("random-placement"), std::string::npos);
  EXPECT_NE(c.out.find("unet-touch-prior"), std::string::npos);

  std::vector<std::string> files;
  for (const fs::path& f : {data / "dataset" / "manifest.json", data / "benchmark.json", pl / "placement_loss.csv",
                            pl / "placement.ckpt", ed / "editor_loss.csv", ed / "editor.ckpt", ev / "report.json",
                            cmp / "report.json", cmp / "table.txt", cmp / "records.csv"})
    files.push_back(fs::exists(f) ? slurp(f) : "missing " + f.string());
  return files;
}

TEST(Pipeline, EveryVerbIsByteDeterministic) {
  const fs::path root = temp_dir("pipeline");
  std::ofstream(root / "tiny.toml") << kTinyConfig;
  const auto a = run_pipeline(root / "a", root / "tiny.toml");
  const auto b = run_pipeline(root / "b", root / "tiny.toml");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].rfind("missing", 0), std::string::npos) << a[i];
    EXPECT_TRUE(a[i] == b[i]) << "artifact " << i << " differs";
  }
  fs::remove_all(root);
}

}  // namespace
}  // namespace touchadd::app

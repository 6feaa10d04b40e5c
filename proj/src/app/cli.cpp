#include "touchadd/app/cli.hpp"

#include <csignal>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "touchadd/app/pipeline.hpp"
#include "touchadd/service/http.hpp"

namespace touchadd::app {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--config", c.config, "TOML-style config file")->check(CLI::ExistingFile);
  auto* o = cmd->add_option("--out", c.out, "Output directory");
  if (needs_out) o->required();
}

Config load_config(const Common& c) { return c.config.empty() ? Config{} : Config::load(c.config); }

void reject_unused(const Config& cfg, const std::string& verb) {
  for (const auto& k : cfg.unused()) {
    const auto section = k.substr(0, k.find('.'));
    // Sections for other verbs may share one file; only the verb's own are checked.
    if ((verb == "gen-data" && section == "data") || (verb == "train-placement" && section == "placement") ||
        (verb == "train-editor" && section == "editor"))
      throw ConfigError("unknown config key " + k);
  }
}

service::HttpServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Touch-guided object addition: data, training, evaluation and serving", "touchadd"};
  app.require_subcommand(1);

  Common gen, trp, tre, ev, cmp, srv;
  std::string data_dir, bench_file, placement_ckpt, placement_ablation_ckpt, editor_ckpt, editor_touch_ckpt;
  std::string conditioning, host = "127.0.0.1";
  int port = 8080;
  std::optional<int> n_override, bench_override;

  auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic dataset and benchmark");
  add_common(c_gen, gen);
  c_gen->add_option("--n", n_override, "Dataset size (train + val)");
  c_gen->add_option("--bench", bench_override, "Benchmark size");

  auto* c_trp = app.add_subcommand("train-placement", "Train the placement model");
  add_common(c_trp, trp);
  c_trp->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);

  auto* c_tre = app.add_subcommand("train-editor", "Train the diffusion editor");
  add_common(c_tre, tre);
  c_tre->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_tre->add_option("--conditioning", conditioning, "box or touch (overrides the config)");

  auto* c_ev = app.add_subcommand("eval", "Evaluate a placement model and optional editor");
  add_common(c_ev, ev);
  c_ev->add_option("--benchmark", bench_file, "Benchmark JSON")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--placement", placement_ckpt, "Placement checkpoint")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--editor", editor_ckpt, "Box-conditioned editor checkpoint")->check(CLI::ExistingFile);

  auto* c_cmp = app.add_subcommand("compare", "Compare methods against the random baseline");
  add_common(c_cmp, cmp);
  c_cmp->add_option("--benchmark", bench_file, "Benchmark JSON")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--placement", placement_ckpt, "Placement checkpoint")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--placement-no-reasoning", placement_ablation_ckpt, "Placement checkpoint trained without reasoning")
      ->check(CLI::ExistingFile);
  c_cmp->add_option("--editor", editor_ckpt, "Box-conditioned editor checkpoint")->check(CLI::ExistingFile);
  c_cmp->add_option("--editor-touch", editor_touch_ckpt, "Touch-conditioned editor checkpoint")
      ->check(CLI::ExistingFile);

  auto* c_srv = app.add_subcommand("serve", "Run the HTTP edit service");
  add_common(c_srv, srv, false);
  c_srv->add_option("--placement", placement_ckpt, "Placement checkpoint")->check(CLI::ExistingFile);
  c_srv->add_option("--editor", editor_ckpt, "Box-conditioned editor checkpoint")->check(CLI::ExistingFile);
  c_srv->add_option("--host", host, "Bind address")->capture_default_str();
  c_srv->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();

  std::vector<std::string> argv_store{"touchadd"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*c_gen) {
      Config cfg = load_config(gen);
      if (n_override) cfg.set("data.n", std::to_string(*n_override));
      if (bench_override) cfg.set("data.bench", std::to_string(*bench_override));
      // Resolve every data key up front so typos fail before any work.
      dataset_config(cfg);
      cfg.get_int("data.n", 0);
      cfg.get_int("data.bench", 0);
      reject_unused(cfg, "gen-data");
      const GeneratedData g = generate_data(cfg, gen.seed, gen.out);
      out << "dataset: " << g.dataset_dir.string() << "\nbenchmark: " << g.benchmark_file.string() << "\n";
    } else if (*c_trp) {
      const Config cfg = load_config(trp);
      const auto tc = placement_train_config(cfg);
      reject_unused(cfg, "train-placement");
      const datagen::Dataset ds = datagen::load_dataset(data_dir);
      const auto result = placement::train_placement(ds, tc, trp.seed, [&out](const placement::LossRecord& r) {
        out << "epoch " << r.epoch << " " << r.split << " loss " << r.loss << "\n" << std::flush;
      });
      result.model.save(fs::path(trp.out) / "placement.ckpt");
      placement::write_loss_csv(fs::path(trp.out) / "placement_loss.csv", result.curve);
    } else if (*c_tre) {
      Config cfg = load_config(tre);
      if (!conditioning.empty()) cfg.set("editor.conditioning", "\"" + conditioning + "\"");
      const auto tc = editor_train_config(cfg);
      reject_unused(cfg, "train-editor");
      const datagen::Dataset ds = datagen::load_dataset(data_dir);
      const auto result = editor::train_editor(ds, tc, tre.seed, [&out](const editor::EditorLossRecord& r) {
        out << "epoch " << r.epoch << " " << r.split << " mse " << r.mse << " dice " << r.dice << "\n" << std::flush;
      });
      result.model.save(fs::path(tre.out) / "editor.ckpt");
      editor::write_editor_loss_csv(fs::path(tre.out) / "editor_loss.csv", result.curve);
    } else if (*c_ev || *c_cmp) {
      const Common& c = *c_ev ? ev : cmp;
      const Config cfg = load_config(c);
      const auto items = eval::load_benchmark_items(bench_file);
      auto model = std::make_shared<const placement::PlacementModel>(placement::PlacementModel::load(placement_ckpt));
      std::shared_ptr<const editor::EditorModel> ed;
      if (!editor_ckpt.empty()) ed = std::make_shared<const editor::EditorModel>(editor::EditorModel::load(editor_ckpt));
      std::vector<eval::Method> methods;
      if (*c_cmp) methods.push_back(random_method(model->fallback_sizes()));
      methods.push_back(placement_method(kPlacementMethod, model, ed));
      if (*c_cmp && !placement_ablation_ckpt.empty())
        methods.push_back(placement_method(kNoReasoningMethod,
                                           std::make_shared<const placement::PlacementModel>(
                                               placement::PlacementModel::load(placement_ablation_ckpt))));
      if (*c_cmp && !editor_touch_ckpt.empty())
        methods.push_back(touch_prior_method(
            kTouchPriorMethod, std::make_shared<const editor::EditorModel>(editor::EditorModel::load(editor_touch_ckpt))));
      const auto report = eval::run_comparison(methods, items, {c.seed, cfg.to_json(), {}});
      eval::write_report(report, c.out);
      out << eval::report_table(report);
    } else if (*c_srv) {
      std::shared_ptr<const placement::PlacementModel> model;
      std::shared_ptr<const editor::EditorModel> ed;
      if (!placement_ckpt.empty())
        model = std::make_shared<const placement::PlacementModel>(placement::PlacementModel::load(placement_ckpt));
      if (!editor_ckpt.empty()) ed = std::make_shared<const editor::EditorModel>(editor::EditorModel::load(editor_ckpt));
      service::EditService svc(model, ed);
      service::HttpServer server(svc);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        err << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
      out << "listening on " << host << ":" << bound << "\n" << std::flush;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace touchadd::app

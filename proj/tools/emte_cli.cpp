#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "emte/checkpoint.hpp"
#include "emte/dataset.hpp"
#include "emte/error.hpp"
#include "emte/eval.hpp"
#include "emte/harness.hpp"
#include "emte/kvconfig.hpp"
#include "emte/models.hpp"

namespace fs = std::filesystem;
using namespace emte;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<fs::path> config;
};

fs::path manifest_path(const fs::path& dataset) {
  return fs::is_directory(dataset) ? dataset / gridgen::kManifestFile : dataset;
}

std::string dataset_fingerprint(const fs::path& dataset) {
  const auto p = manifest_path(dataset);
  if (!fs::exists(p)) throw DataError("no dataset manifest at " + p.string());
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of_file(p));
  return buf;
}

KeyValueConfig require_config(const Globals& g, const char* command) {
  if (!g.config) throw UsageError(std::string(command) + " needs --config");
  return KeyValueConfig::load(*g.config);
}

int cmd_generate(const Globals& g) {
  const auto cfg_kv = require_config(g, "generate");
  auto cfg = gridgen::generator_config_from(cfg_kv);
  cfg.output_dir = harness::resolve_output_root(g.out, cfg.output_dir);
  const auto manifest = gridgen::build_dataset(cfg, g.seed.value_or(1));
  std::cout << (cfg.output_dir / gridgen::kManifestFile).string() << "\n";
  std::cerr << manifest.records.size() << " records written\n";
  return 0;
}

struct TrainArgs {
  fs::path dataset;
  std::string model = "cnn";
  std::string input_case = "2dw";
  std::string preset = "synthetic";
  std::vector<std::string> sensors;
};

// Optional hyperparameter overrides for `train`.
void apply_overrides(const KeyValueConfig& kv, models::TrainConfig& t, models::CnnConfig* cnn) {
  kv.check_known({"epochs", "batch_size", "learning_rate", "momentum", "filter_count",
                  "filter_height", "filter_width", "pool_width"});
  t.epochs = static_cast<std::size_t>(kv.get_int("epochs", static_cast<long long>(t.epochs)));
  t.batch_size =
      static_cast<std::size_t>(kv.get_int("batch_size", static_cast<long long>(t.batch_size)));
  t.learning_rate = kv.get_double("learning_rate", t.learning_rate);
  t.momentum = kv.get_double("momentum", t.momentum);
  if (cnn) {
    auto get = [&kv](const char* key, std::size_t fallback) {
      const auto v = kv.get_int(key, static_cast<long long>(fallback));
      if (v <= 0) throw UsageError(kv.source() + ": " + key + " must be positive");
      return static_cast<std::size_t>(v);
    };
    cnn->filter_count = get("filter_count", cnn->filter_count);
    cnn->filter_height = get("filter_height", cnn->filter_height);
    cnn->filter_width = get("filter_width", cnn->filter_width);
    cnn->pool_width = get("pool_width", cnn->pool_width);
  }
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto kind = models::kind_from_key(a.model);
  if (!kind) throw UsageError("unknown model '" + a.model + "' (cnn, tmlp, pca_svm, autoencoder)");
  const auto ic = preprocess::case_from_key(a.input_case);
  if (!ic) throw UsageError("unknown case '" + a.input_case + "' (2d, 2dw, 3d, 3dw)");
  const std::uint64_t seed = g.seed.value_or(1);
  std::optional<KeyValueConfig> overrides;
  if (g.config) overrides = KeyValueConfig::load(*g.config);

  const auto ds = gridgen::load_dataset(a.dataset);
  const auto images = harness::build_images(harness::restrict_sensors(ds, a.sensors), *ic);
  const double fraction = ds.manifest.split_fraction;
  const auto split = models::stratified_split(images.labels, images.class_count, fraction, seed);
  harness::check_split(split, images.labels, images.class_count, fraction);
  const auto train = images.subset(split.train);

  models::TrainedModel model;
  switch (*kind) {
    case models::ModelKind::CNN: {
      auto cfg = harness::cnn_preset(a.preset);
      harness::fit_filter_height(cfg, train);
      cfg.train.seed = seed;
      if (overrides) apply_overrides(*overrides, cfg.train, &cfg);
      model = models::train_cnn(train, cfg);
      break;
    }
    case models::ModelKind::PCA_SVM: {
      auto cfg = harness::svm_config();
      cfg.train.seed = seed;
      if (overrides) apply_overrides(*overrides, cfg.train, nullptr);
      model = models::train_pca_svm(train, cfg);
      break;
    }
    default: {
      auto cfg = harness::baseline_train_config(*kind);
      cfg.seed = seed;
      if (overrides) apply_overrides(*overrides, cfg, nullptr);
      model = *kind == models::ModelKind::TMLP ? models::train_tmlp(train, cfg)
                                               : models::train_autoencoder(train, cfg);
      break;
    }
  }

  const fs::path dir = harness::resolve_output_root(g.out, "model");
  fs::create_directories(dir);
  const nlohmann::json extra = {{"dataset_manifest_crc32", dataset_fingerprint(a.dataset)},
                                {"split_seed", seed},
                                {"split_fraction", fraction},
                                {"sensors", a.sensors},
                                {"preset", a.preset}};
  models::save_model(model, dir / "model.json", extra);
  models::write_log_csv(model.log, dir / "train_log.csv");
  std::cout << (dir / "model.json").string() << "\n";
  std::cerr << "training accuracy " << eval::percent(models::accuracy(model, train)) << "\n";
  return 0;
}

int cmd_evaluate(const Globals& g, const fs::path& model_path, const fs::path& dataset) {
  nlohmann::json extra;
  const auto model = models::load_model(model_path, &extra);
  if (!extra.is_object() || !extra.contains("dataset_manifest_crc32")) {
    throw DataError("checkpoint lacks the dataset reference written by train");
  }
  if (extra.at("dataset_manifest_crc32").get<std::string>() != dataset_fingerprint(dataset)) {
    throw DataError("checkpoint was trained on a different dataset");
  }
  const auto ds = gridgen::load_dataset(dataset);
  const auto sensors = extra.at("sensors").get<std::vector<std::string>>();
  const auto images =
      harness::build_images(harness::restrict_sensors(ds, sensors), model.input_case);
  const auto seed = extra.at("split_seed").get<std::uint64_t>();
  const auto fraction = extra.at("split_fraction").get<double>();
  const auto split = models::stratified_split(images.labels, images.class_count, fraction, seed);
  harness::check_split(split, images.labels, images.class_count, fraction);
  const auto test = images.subset(split.test);
  if (test.size() == 0) throw DataError("dataset too small: the split leaves no held-out events");

  std::vector<std::size_t> preds;
  for (const auto& img : test.images) {
    try {
      preds.push_back(models::predict(model, img).label);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("checkpoint does not match dataset: ") + e.what());
    }
  }
  const auto cm = eval::confusion(preds, test.labels, images.class_count);
  const auto rendered = eval::render_report(cm, eval::metrics(cm));
  const fs::path dir = harness::resolve_output_root(g.out, model_path.parent_path() / "eval");
  harness::write_text_file(dir / "report.txt", rendered.text);
  harness::write_text_file(dir / "report.csv", rendered.csv);
  std::cout << rendered.text;
  return 0;
}

harness::ExperimentConfig experiment(const Globals& g, const char* command) {
  auto cfg = harness::experiment_config_from(require_config(g, command));
  if (g.seed) cfg.seeds = {*g.seed};
  cfg.out = harness::resolve_output_root(g.out, cfg.out);
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Transient event cause identification: data generation, training, experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (generate) or run seed");
  app.add_option("--out", g.out, "Output directory (overrides $EMTE_OUTPUT_ROOT)");
  app.add_option("--config", g.config, "Key-value configuration file");

  auto* gen = app.add_subcommand("generate", "Build a synthetic dataset");
  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one model on a dataset split");
  train->add_option("--dataset", ta.dataset, "Dataset directory or manifest")->required();
  train->add_option("--model", ta.model, "cnn, tmlp, pca_svm or autoencoder");
  train->add_option("--case", ta.input_case, "Input case: 2d, 2dw, 3d or 3dw");
  train->add_option("--preset", ta.preset, "CNN preset: rtds, emtp or synthetic");
  train->add_option("--sensors", ta.sensors, "Restrict to these sensor ids")->delimiter(',');

  fs::path eval_model, eval_dataset;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on its held-out split");
  evaluate->add_option("--model", eval_model, "Checkpoint written by train")->required();
  evaluate->add_option("--dataset", eval_dataset, "Dataset directory or manifest")->required();

  auto* ci = app.add_subcommand("compare-inputs", "Accuracy of every input case");
  auto* cm = app.add_subcommand("compare-methods", "CNN against the baselines");
  auto* ss = app.add_subcommand("sweep-sensors", "Accuracy against recorder count");
  auto* sp = app.add_subcommand("sweep-placement", "Accuracy for each placement set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen->parsed()) return cmd_generate(g);
  if (train->parsed()) return cmd_train(g, ta);
  if (evaluate->parsed()) return cmd_evaluate(g, eval_model, eval_dataset);
  if (ci->parsed()) {
    const auto cfg = experiment(g, "compare-inputs");
    std::cout << harness::inputs_text(harness::compare_inputs(cfg));
  } else if (cm->parsed()) {
    const auto cfg = experiment(g, "compare-methods");
    std::cout << harness::methods_text(harness::compare_methods(cfg));
  } else if (ss->parsed()) {
    const auto cfg = experiment(g, "sweep-sensors");
    std::cout << harness::sweep_text(harness::sweep_sensors(cfg));
  } else if (sp->parsed()) {
    const auto cfg = experiment(g, "sweep-placement");
    std::cout << harness::sweep_text(harness::sweep_placement(cfg));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}

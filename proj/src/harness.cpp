#include "emte/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "emte/error.hpp"

namespace emte::harness {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kLayoutBuses = {"6", "10", "4", "28", "8",
                                               "22", "21", "9", "12", "3"};

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string fmt2(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

gridgen::Dataset load_for(const ExperimentConfig& config) {
  if (config.dataset.empty()) throw UsageError("experiment config needs a 'dataset' entry");
  return gridgen::load_dataset(config.dataset);
}

fs::path section_dir(const ExperimentConfig& config, const char* name) {
  const fs::path dir = config.out / name;
  fs::create_directories(dir);
  return dir;
}

RunSpec spec_for(const ExperimentConfig& config, ModelKind kind, std::uint64_t seed,
                 std::size_t monitor_every = 0) {
  return {kind, seed, config.preset, config.split_fraction, monitor_every};
}

std::string runs_header(bool metrics) {
  return metrics ? "seed,ACC,PRE,REC,F1,FPR" : "seed,accuracy";
}

std::array<double, 5> metric_row(const eval::MetricsReport& r) {
  const auto& m = r.macro;
  return {100.0 * r.accuracy, 100.0 * m.precision, 100.0 * m.recall, 100.0 * m.f1, 100.0 * m.fpr};
}

SweepTable run_sweep(const ExperimentConfig& config, const gridgen::Dataset& ds,
                     const std::string& key, const std::vector<SweepRow>& subsets,
                     const fs::path& dir) {
  SweepTable t;
  t.key = key;
  t.seeds = config.seeds;
  std::ostringstream runs;
  runs << key << ",sensors," << runs_header(false) << "\n";
  for (const auto& subset : subsets) {
    const auto images = build_images(restrict_sensors(ds, subset.sensors), config.primary_case);
    std::vector<double> acc;
    for (std::uint64_t seed : config.seeds) {
      const auto r = run_once(images, spec_for(config, config.sweep_model, seed));
      acc.push_back(100.0 * r.accuracy);
      runs << subset.label << "," << join(subset.sensors, " ") << "," << seed << ","
           << fmt2(acc.back()) << "\n";
      std::cerr << key << " " << subset.label << " seed " << seed << ": "
                << fmt2(acc.back()) << "%\n";
    }
    SweepRow row = subset;
    row.accuracy = summarize(acc);
    t.rows.push_back(std::move(row));
  }
  write_text_file(dir / "runs.csv", runs.str());
  return t;
}

}  // namespace

std::vector<PlacementSet> default_placements() {
  const std::vector<std::pair<std::string, std::vector<std::string>>> sets = {
      {"A", {"6", "10", "4", "28", "8", "22", "21", "9", "12", "3"}},
      {"B", {"19", "3", "10", "7", "30", "26", "5", "9", "14", "6"}},
      {"C", {"8", "27", "9", "24", "17", "18", "4", "5", "28", "30"}},
      {"D", {"2", "18", "30", "28", "14", "6", "7", "13", "19", "9"}},
      {"E", {"13", "23", "28", "4", "30", "14", "19", "11", "27", "6"}}};
  std::vector<PlacementSet> out;
  for (const auto& [name, buses] : sets) {
    PlacementSet p{name, {}, buses};
    for (const auto& b : buses) {
      if (std::find(kLayoutBuses.begin(), kLayoutBuses.end(), b) != kLayoutBuses.end()) {
        p.buses.push_back(b);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw UsageError("seed list must not be empty");
  if (cases.empty()) throw UsageError("case list must not be empty");
  if (models.empty()) throw UsageError("model list must not be empty");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw UsageError("split_fraction must lie in (0,1)");
  }
  for (std::size_t n : sensor_counts) {
    if (n == 0) throw UsageError("sensor counts must be positive");
  }
  for (const auto& p : placements) {
    if (p.buses.empty()) throw UsageError("placement set " + p.name + " has no sensors");
  }
  cnn_preset(preset);
}

ExperimentConfig experiment_config_from(const KeyValueConfig& kv) {
  kv.check_known({"dataset", "cases", "models", "seeds", "sensors", "sensor_counts",
                  "placement.", "primary_case", "sweep_model", "preset", "split_fraction",
                  "monitor_every", "out"});
  ExperimentConfig c;
  if (auto v = kv.get("dataset")) {
    fs::path p = *v;
    // Relative dataset paths are taken from the config file's directory.
    const fs::path src = kv.source();
    if (p.is_relative() && src.has_parent_path() && fs::exists(src)) p = src.parent_path() / p;
    c.dataset = p;
  }
  if (kv.has("cases")) {
    c.cases.clear();
    for (const auto& k : kv.get_strings("cases", {})) {
      auto ic = preprocess::case_from_key(k);
      if (!ic) throw UsageError(kv.source() + ": unknown input case '" + k + "'");
      c.cases.push_back(*ic);
    }
  }
  if (kv.has("models")) {
    c.models.clear();
    for (const auto& k : kv.get_strings("models", {})) {
      auto mk = models::kind_from_key(k);
      if (!mk) throw UsageError(kv.source() + ": unknown model '" + k + "'");
      c.models.push_back(*mk);
    }
  }
  auto int_list = [&kv](const std::string& key) {
    std::vector<std::uint64_t> out;
    for (const auto& s : kv.get_strings(key, {})) {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty() || s[0] == '-') {
        throw UsageError(kv.source() + ": '" + key + "' expects non-negative integers");
      }
      out.push_back(v);
    }
    return out;
  };
  if (kv.has("seeds")) c.seeds = int_list("seeds");
  if (kv.has("sensor_counts")) {
    c.sensor_counts.clear();
    for (auto v : int_list("sensor_counts")) c.sensor_counts.push_back(static_cast<std::size_t>(v));
  }
  c.sensors = kv.get_strings("sensors", {});
  const auto placement_keys = kv.keys_with_prefix("placement.");
  if (!placement_keys.empty()) {
    c.placements.clear();
    for (const auto& key : placement_keys) {
      auto buses = kv.get_strings(key, {});
      c.placements.push_back({key.substr(10), buses, buses});
    }
  }
  if (auto v = kv.get("primary_case")) {
    auto ic = preprocess::case_from_key(*v);
    if (!ic) throw UsageError(kv.source() + ": unknown input case '" + *v + "'");
    c.primary_case = *ic;
  }
  if (auto v = kv.get("sweep_model")) {
    auto mk = models::kind_from_key(*v);
    if (!mk) throw UsageError(kv.source() + ": unknown model '" + *v + "'");
    c.sweep_model = *mk;
  }
  c.preset = kv.get_string("preset", c.preset);
  c.split_fraction = kv.get_double("split_fraction", c.split_fraction);
  c.monitor_every = static_cast<std::size_t>(kv.get_int("monitor_every", 10));
  c.out = kv.get_string("out", c.out.string());
  c.validate();
  return c;
}

fs::path resolve_output_root(const std::optional<fs::path>& flag, const fs::path& configured) {
  if (flag) return *flag;
  if (const char* env = std::getenv("EMTE_OUTPUT_ROOT"); env && *env) return env;
  return configured;
}

models::CnnConfig cnn_preset(std::string_view name) {
  if (name == "rtds") return models::CnnConfig::rtds();
  if (name == "emtp") return models::CnnConfig::emtp();
  if (name == "synthetic") return models::CnnConfig::synthetic();
  throw UsageError("unknown preset '" + std::string(name) + "' (rtds, emtp, synthetic)");
}

void fit_filter_height(models::CnnConfig& cfg, const models::ImageSet& images) {
  if (!images.images.empty()) cfg.filter_height = std::min(cfg.filter_height, images.images.front().height);
}

models::TrainConfig baseline_train_config(ModelKind kind) {
  switch (kind) {
    case ModelKind::TMLP: return {40, 32, 0.03, 0.9, 1};
    case ModelKind::Autoencoder: return {40, 32, 0.1, 0.9, 1};
    default: return models::CnnConfig::synthetic().train;
  }
}

models::PcaSvmConfig svm_config() { return {}; }

std::vector<gridgen::EventRecord> restrict_sensors(const gridgen::Dataset& ds,
                                                   const std::vector<std::string>& ids) {
  if (ids.empty()) return ds.records;
  std::vector<std::size_t> idx;
  std::set<std::string> seen;
  for (const auto& id : ids) {
    auto i = ds.layout->index_of(id);
    if (!i) throw UsageError("unknown bus id '" + id + "' (not in the dataset layout)");
    if (!seen.insert(id).second) throw UsageError("bus id '" + id + "' listed twice");
    idx.push_back(*i);
  }
  auto sub = std::make_shared<const gridgen::SensorLayout>(ds.layout->subset(idx));
  std::vector<gridgen::EventRecord> out;
  out.reserve(ds.records.size());
  for (const auto& r : ds.records) out.push_back(gridgen::select_sensors(r, idx, sub));
  return out;
}

models::ImageSet build_images(const std::vector<gridgen::EventRecord>& records, InputCase c) {
  models::ImageSet set;
  set.class_count = gridgen::kClassCount;
  set.images.reserve(records.size());
  for (const auto& r : records) {
    set.images.push_back(preprocess::build_input(r, c));
    set.labels.push_back(gridgen::class_index(r.label));
  }
  return set;
}

void check_split(const models::Split& split, const std::vector<std::size_t>& labels,
                 std::size_t classes, double fraction) {
  std::vector<int> hits(labels.size(), 0);
  for (auto i : split.train) ++hits.at(i);
  for (auto i : split.test) ++hits.at(i);
  for (int h : hits) {
    if (h != 1) throw std::logic_error("split is not a partition of the dataset");
  }
  std::vector<std::size_t> total(classes, 0), train(classes, 0);
  for (auto l : labels) ++total.at(l);
  for (auto i : split.train) ++train[labels[i]];
  for (std::size_t c = 0; c < classes; ++c) {
    const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total[c])));
    if (train[c] != want) throw std::logic_error("split is not stratified");
  }
}

models::TrainedModel train_kind(const models::ImageSet& train, const RunSpec& spec,
                                const models::TrainMonitor& monitor) {
  switch (spec.kind) {
    case ModelKind::CNN: {
      auto cfg = cnn_preset(spec.preset);
      fit_filter_height(cfg, train);
      cfg.train.seed = spec.seed;
      return models::train_cnn(train, cfg, monitor);
    }
    case ModelKind::TMLP: {
      auto cfg = baseline_train_config(spec.kind);
      cfg.seed = spec.seed;
      return models::train_tmlp(train, cfg, monitor);
    }
    case ModelKind::PCA_SVM: {
      auto cfg = svm_config();
      cfg.train.seed = spec.seed;
      return models::train_pca_svm(train, cfg, monitor);
    }
    case ModelKind::Autoencoder: {
      auto cfg = baseline_train_config(spec.kind);
      cfg.seed = spec.seed;
      return models::train_autoencoder(train, cfg, monitor);
    }
  }
  throw std::logic_error("unhandled model kind");
}

RunResult run_once(const models::ImageSet& images, const RunSpec& spec) {
  RunResult r;
  r.split = models::stratified_split(images.labels, images.class_count, spec.split_fraction,
                                     spec.seed);
  check_split(r.split, images.labels, images.class_count, spec.split_fraction);
  if (r.split.test.empty()) throw DataError("dataset too small: the split leaves no held-out events");
  const auto train = images.subset(r.split.train);
  const auto test = images.subset(r.split.test);
  models::TrainMonitor monitor;
  if (spec.monitor_every > 0) monitor = {&test, spec.monitor_every};
  r.model = train_kind(train, spec, monitor);
  std::vector<std::size_t> preds;
  preds.reserve(test.size());
  for (const auto& img : test.images) preds.push_back(models::predict(r.model, img).label);
  r.confusion = eval::confusion(preds, test.labels, images.class_count);
  r.metrics = eval::metrics(r.confusion);
  r.accuracy = r.metrics.accuracy;
  return r;
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summary of an empty list");
  Summary s;
  s.values = values;
  s.median = median_of(values);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.spread = 0.5 * (*hi - *lo);
  return s;
}

void write_text_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

InputsTable compare_inputs(const ExperimentConfig& config) {
  config.validate();
  const auto ds = load_for(config);
  const auto records = restrict_sensors(ds, config.sensors);
  const fs::path dir = section_dir(config, "compare_inputs");
  InputsTable t;
  t.models = config.models;
  t.seeds = config.seeds;
  std::ostringstream runs;
  runs << "input,model," << runs_header(false) << "\n";
  for (InputCase c : config.cases) {
    const auto images = build_images(records, c);
    InputRow row{c, {}};
    for (ModelKind kind : config.models) {
      std::vector<double> acc;
      std::vector<std::vector<models::MonitorPoint>> curves;
      for (std::uint64_t seed : config.seeds) {
        const auto r = run_once(images, spec_for(config, kind, seed, config.monitor_every));
        acc.push_back(100.0 * r.accuracy);
        curves.push_back(r.model.log.monitor);
        runs << preprocess::case_label(c) << "," << models::kind_label(kind) << "," << seed
             << "," << fmt2(acc.back()) << "\n";
        std::cerr << "compare-inputs " << preprocess::case_label(c) << " "
                  << models::kind_label(kind) << " seed " << seed << ": " << fmt2(acc.back())
                  << "%\n";
      }
      row.per_model.push_back(summarize(acc));
      if (config.monitor_every > 0) {
        std::ostringstream curve;
        curve << "iteration";
        for (auto seed : config.seeds) curve << ",seed_" << seed;
        curve << "\n";
        std::size_t points = curves.front().size();
        for (const auto& cv : curves) points = std::min(points, cv.size());
        for (std::size_t i = 0; i < points; ++i) {
          curve << curves.front()[i].iteration;
          for (const auto& cv : curves) curve << "," << fmt2(100.0 * cv[i].accuracy);
          curve << "\n";
        }
        write_text_file(dir / ("curve_" + std::string(models::kind_key(kind)) + "_" +
                               std::string(preprocess::case_key(c)) + ".csv"),
                        curve.str());
      }
    }
    t.rows.push_back(std::move(row));
  }
  write_text_file(dir / "runs.csv", runs.str());
  write_text_file(dir / "table2.csv", inputs_csv(t));
  write_text_file(dir / "table2.txt", inputs_text(t));
  return t;
}

MethodsTable compare_methods(const ExperimentConfig& config) {
  config.validate();
  const auto ds = load_for(config);
  const auto images = build_images(restrict_sensors(ds, config.sensors), config.primary_case);
  const fs::path dir = section_dir(config, "compare_methods");
  MethodsTable t;
  t.seeds = config.seeds;
  std::ostringstream runs;
  runs << "method," << runs_header(true) << "\n";
  for (ModelKind kind : config.models) {
    MethodRow row{kind, {}, {}};
    std::array<std::vector<double>, 5> per_metric;
    for (std::uint64_t seed : config.seeds) {
      const auto r = run_once(images, spec_for(config, kind, seed));
      const auto m = metric_row(r.metrics);
      for (std::size_t i = 0; i < 5; ++i) per_metric[i].push_back(m[i]);
      row.accuracy_per_seed.push_back(m[0]);
      runs << models::kind_label(kind) << "," << seed;
      for (double v : m) runs << "," << fmt2(v);
      runs << "\n";
      const auto rendered = eval::render_report(r.confusion, r.metrics);
      const std::string stem =
          "reports/" + std::string(models::kind_key(kind)) + "_seed" + std::to_string(seed);
      write_text_file(dir / (stem + ".txt"), rendered.text);
      write_text_file(dir / (stem + ".csv"), rendered.csv);
      std::cerr << "compare-methods " << models::kind_label(kind) << " seed " << seed << ": "
                << fmt2(m[0]) << "%\n";
    }
    for (std::size_t i = 0; i < 5; ++i) row.metrics[i] = median_of(per_metric[i]);
    t.rows.push_back(std::move(row));
  }
  write_text_file(dir / "runs.csv", runs.str());
  write_text_file(dir / "table4.csv", methods_csv(t));
  write_text_file(dir / "table4.txt", methods_text(t));
  return t;
}

SweepTable sweep_sensors(const ExperimentConfig& config) {
  config.validate();
  const auto ds = load_for(config);
  const auto& ids = ds.layout->sensor_ids;
  std::vector<SweepRow> subsets;
  for (std::size_t n : config.sensor_counts) {
    if (n > ids.size()) {
      throw UsageError("sensor count " + std::to_string(n) + " exceeds the " +
                       std::to_string(ids.size()) + " sensors of the dataset layout");
    }
    subsets.push_back({std::to_string(n), {ids.begin(), ids.begin() + static_cast<long>(n)}, {}});
  }
  const fs::path dir = section_dir(config, "sweep_sensors");
  auto t = run_sweep(config, ds, "sensors", subsets, dir);
  write_text_file(dir / "sensor_sweep.csv", sweep_csv(t));
  write_text_file(dir / "sensor_sweep.txt", sweep_text(t));
  return t;
}

SweepTable sweep_placement(const ExperimentConfig& config) {
  config.validate();
  const auto ds = load_for(config);
  std::vector<SweepRow> subsets;
  std::ostringstream mapping;
  mapping << "set,source_buses,sensors\n";
  for (const auto& p : config.placements) {
    for (const auto& b : p.buses) {
      if (!ds.layout->index_of(b)) throw UsageError("placement " + p.name + ": unknown bus id '" + b + "'");
    }
    subsets.push_back({p.name, p.buses, {}});
    mapping << p.name << "," << join(p.origin, " ") << "," << join(p.buses, " ") << "\n";
  }
  const fs::path dir = section_dir(config, "sweep_placement");
  write_text_file(dir / "placement_mapping.csv", mapping.str());
  auto t = run_sweep(config, ds, "set", subsets, dir);
  write_text_file(dir / "placement.csv", sweep_csv(t));
  write_text_file(dir / "placement.txt", sweep_text(t));
  return t;
}

std::string inputs_csv(const InputsTable& t) {
  std::ostringstream s;
  s << "input";
  for (auto k : t.models) s << "," << models::kind_label(k) << "," << models::kind_label(k) << "_spread";
  s << "\n";
  for (const auto& row : t.rows) {
    s << preprocess::case_label(row.input_case);
    for (const auto& m : row.per_model) s << "," << fmt2(m.median) << "," << fmt2(m.spread);
    s << "\n";
  }
  return s.str();
}

std::string inputs_text(const InputsTable& t) {
  std::ostringstream s;
  s << "Held-out accuracy (%), median +/- half-range over " << t.seeds.size() << " seed(s)\n";
  s << pad_right("input", 8);
  for (auto k : t.models) s << pad(std::string(models::kind_label(k)), 18);
  s << "\n";
  for (const auto& row : t.rows) {
    s << pad_right(std::string(preprocess::case_label(row.input_case)), 8);
    for (const auto& m : row.per_model) s << pad(fmt2(m.median) + " +/- " + fmt2(m.spread), 18);
    s << "\n";
  }
  return s.str();
}

std::string methods_csv(const MethodsTable& t) {
  std::ostringstream s;
  s << "method,ACC,PRE,REC,F1,FPR\n";
  for (const auto& row : t.rows) {
    s << models::kind_label(row.kind);
    for (double v : row.metrics) s << "," << fmt2(v);
    s << "\n";
  }
  return s.str();
}

std::string methods_text(const MethodsTable& t) {
  std::ostringstream s;
  s << "Macro metrics (%), median over " << t.seeds.size() << " seed(s); an undefined class precision counts as 0\n";
  s << pad_right("method", 12);
  for (const char* h : {"ACC", "PRE", "REC", "F1", "FPR"}) s << pad(h, 9);
  s << "\n";
  for (const auto& row : t.rows) {
    s << pad_right(std::string(models::kind_label(row.kind)), 12);
    for (double v : row.metrics) s << pad(fmt2(v), 9);
    s << "\n";
  }
  return s.str();
}

std::string sweep_csv(const SweepTable& t) {
  std::ostringstream s;
  s << t.key << ",sensors,median,spread";
  for (auto seed : t.seeds) s << ",seed_" << seed;
  s << "\n";
  for (const auto& row : t.rows) {
    s << row.label << "," << join(row.sensors, " ") << "," << fmt2(row.accuracy.median) << ","
      << fmt2(row.accuracy.spread);
    for (double v : row.accuracy.values) s << "," << fmt2(v);
    s << "\n";
  }
  return s.str();
}

std::string sweep_text(const SweepTable& t) {
  std::ostringstream s;
  s << "Held-out accuracy (%) by " << t.key << ", median +/- half-range over " << t.seeds.size()
    << " seed(s)\n";
  for (const auto& row : t.rows) {
    s << pad_right(row.label, 4) << pad(fmt2(row.accuracy.median) + " +/- " + fmt2(row.accuracy.spread), 16)
      << "  [" << join(row.sensors, " ") << "]\n";
  }
  return s.str();
}

}  // namespace emte::harness

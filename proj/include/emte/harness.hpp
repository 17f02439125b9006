#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emte/dataset.hpp"
#include "emte/eval.hpp"
#include "emte/kvconfig.hpp"
#include "emte/models.hpp"

namespace emte::harness {

using models::InputCase;
using models::ModelKind;

struct PlacementSet {
  std::string name;
  std::vector<std::string> buses;   // sensor ids used
  std::vector<std::string> origin;  // full bus list the set was derived from
};

/// Placement sets A-E of the 30-bus study restricted to the ten recorders of
/// the default layout, keeping each set's own order.
std::vector<PlacementSet> default_placements();

struct ExperimentConfig {
  std::filesystem::path dataset;
  std::vector<InputCase> cases{preprocess::kAllCases.begin(), preprocess::kAllCases.end()};
  std::vector<ModelKind> models{models::kAllKinds.begin(), models::kAllKinds.end()};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> sensors;  // restriction for compare-*; empty = all
  std::vector<std::size_t> sensor_counts{2, 5, 10};
  std::vector<PlacementSet> placements = default_placements();
  InputCase primary_case = InputCase::Case2_2DW;  // compare-methods and sweeps
  ModelKind sweep_model = ModelKind::CNN;
  std::string preset = "synthetic";
  double split_fraction = 0.8;
  std::size_t monitor_every = 10;
  std::filesystem::path out = "results";

  void validate() const;
};

/// Keys: dataset, cases, models, seeds, sensors, sensor_counts,
/// placement.<name>, primary_case, sweep_model, preset, split_fraction,
/// monitor_every, out. Lists are comma-separated.
ExperimentConfig experiment_config_from(const KeyValueConfig& kv);

/// Output root precedence: explicit flag, then $EMTE_OUTPUT_ROOT, then the
/// config value.
std::filesystem::path resolve_output_root(const std::optional<std::filesystem::path>& flag,
                                          const std::filesystem::path& configured);

models::CnnConfig cnn_preset(std::string_view name);
/// Caps the preset filter height at the image height (layouts with fewer
/// sensors than filter rows).
void fit_filter_height(models::CnnConfig& cfg, const models::ImageSet& images);
/// Optimizer settings used for t-MLP and autoencoder runs.
models::TrainConfig baseline_train_config(ModelKind kind);
models::PcaSvmConfig svm_config();

/// Records restricted to the named sensors (all when empty), in that order.
std::vector<gridgen::EventRecord> restrict_sensors(const gridgen::Dataset& ds,
                                                   const std::vector<std::string>& ids);

models::ImageSet build_images(const std::vector<gridgen::EventRecord>& records, InputCase c);

/// Throws std::logic_error unless train and test are disjoint, cover
/// every index once, and each class keeps its stratified share.
void check_split(const models::Split& split, const std::vector<std::size_t>& labels,
                 std::size_t classes, double fraction);

struct RunSpec {
  ModelKind kind = ModelKind::CNN;
  std::uint64_t seed = 1;
  std::string preset = "synthetic";
  double split_fraction = 0.8;
  std::size_t monitor_every = 0;  // 0 disables held-out monitoring
};

struct RunResult {
  models::TrainedModel model;
  models::Split split;
  eval::ConfusionMatrix confusion;
  eval::MetricsReport metrics;
  double accuracy = 0.0;
};

RunResult run_once(const models::ImageSet& images, const RunSpec& spec);

models::TrainedModel train_kind(const models::ImageSet& train, const RunSpec& spec,
                                const models::TrainMonitor& monitor = {});

struct Summary {
  std::vector<double> values;  // one per seed, in seed order
  double median = 0.0;
  double spread = 0.0;  // (max - min) / 2
};

Summary summarize(std::vector<double> values);

struct InputRow {
  InputCase input_case;
  std::vector<Summary> per_model;  // ExperimentConfig::models order, accuracy in percent
};

struct InputsTable {
  std::vector<ModelKind> models;
  std::vector<std::uint64_t> seeds;
  std::vector<InputRow> rows;
};

struct MethodRow {
  ModelKind kind;
  // ACC, PRE, REC, F1, FPR medians in percent.
  std::array<double, 5> metrics{};
  std::vector<double> accuracy_per_seed;
};

struct MethodsTable {
  std::vector<std::uint64_t> seeds;
  std::vector<MethodRow> rows;
};

struct SweepRow {
  std::string label;
  std::vector<std::string> sensors;
  Summary accuracy;
};

struct SweepTable {
  std::string key;  // first column header
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> rows;
};

/// Every case x model over the seeds; writes table2.csv/.txt and one
/// held-out accuracy curve per case and model.
InputsTable compare_inputs(const ExperimentConfig& config);
/// Every model on the primary case; writes table4.csv/.txt and a confusion
/// report per model and seed.
MethodsTable compare_methods(const ExperimentConfig& config);
/// The first n layout sensors for each count; writes sensor_sweep.csv/.txt.
SweepTable sweep_sensors(const ExperimentConfig& config);
/// Each placement set intersected with the layout; writes placement.csv/.txt.
SweepTable sweep_placement(const ExperimentConfig& config);

std::string inputs_csv(const InputsTable& t);
std::string inputs_text(const InputsTable& t);
std::string methods_csv(const MethodsTable& t);
std::string methods_text(const MethodsTable& t);
std::string sweep_csv(const SweepTable& t);
std::string sweep_text(const SweepTable& t);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace emte::harness

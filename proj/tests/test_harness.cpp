#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "emte/error.hpp"
#include "emte/harness.hpp"

using namespace emte;
using namespace emte::harness;
namespace fs = std::filesystem;

namespace {

fs::path tiny_dataset(const std::string& name, std::size_t sensors, std::size_t per_class = 5) {
  static std::set<std::string> built;
  const auto dir = fs::temp_directory_path() / ("emte_harness_" + name);
  if (!built.insert(name).second) return dir;
  fs::remove_all(dir);
  gridgen::GeneratorConfig cfg;
  cfg.counts.fill(per_class);
  cfg.layout = gridgen::default_layout(sensors);
  cfg.output_dir = dir;
  gridgen::build_dataset(cfg, 3);
  return dir;
}

ExperimentConfig tiny_config(const fs::path& dataset, const std::string& out) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.seeds = {1};
  c.models = {ModelKind::CNN};
  c.monitor_every = 5;
  c.out = fs::temp_directory_path() / ("emte_harness_out_" + out);
  fs::remove_all(c.out);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::vector<std::string> csv_cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("placement sets map onto the ten recorders") {
  const auto sets = default_placements();
  REQUIRE(sets.size() == 5);
  CHECK(sets[0].name == "A");
  CHECK(sets[0].buses == gridgen::default_layout(10).sensor_ids);
  CHECK(sets[1].buses == std::vector<std::string>{"3", "10", "9", "6"});
  CHECK(sets[2].buses == std::vector<std::string>{"8", "9", "4", "28"});
  CHECK(sets[3].buses == std::vector<std::string>{"28", "6", "9"});
  CHECK(sets[4].buses == std::vector<std::string>{"28", "4", "6"});
  for (const auto& s : sets) CHECK(s.origin.size() == 10);
}

TEST_CASE("experiment config parsing") {
  const auto kv = KeyValueConfig::parse(
      "dataset = /data/x\ncases = 2dw, 3d\nmodels = cnn,tmlp\nseeds = 4,5\n"
      "sensor_counts = 1,3\nplacement.P = 6,10\nplacement.Q = 4\nprimary_case = 3dw\n"
      "preset = rtds\nmonitor_every = 0\nout = res\n");
  const auto c = experiment_config_from(kv);
  CHECK(c.dataset == "/data/x");
  CHECK(c.cases == std::vector<InputCase>{InputCase::Case2_2DW, InputCase::Case3_3D});
  CHECK(c.models == std::vector<ModelKind>{ModelKind::CNN, ModelKind::TMLP});
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.sensor_counts == std::vector<std::size_t>{1, 3});
  REQUIRE(c.placements.size() == 2);
  CHECK(c.placements[0].name == "P");
  CHECK(c.placements[1].buses == std::vector<std::string>{"4"});
  CHECK(c.primary_case == InputCase::Case4_3DW);
  CHECK(c.preset == "rtds");
  CHECK(c.monitor_every == 0);
  CHECK(c.out == "res");

  const auto d = experiment_config_from(KeyValueConfig::parse("dataset = d\n"));
  CHECK(d.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(d.sensor_counts == std::vector<std::size_t>{2, 5, 10});
  CHECK(d.cases.size() == 4);
  CHECK(d.placements.size() == 5);

  CHECK_THROWS_AS(experiment_config_from(KeyValueConfig::parse("seedz = 1\n")), UsageError);
  CHECK_THROWS_AS(experiment_config_from(KeyValueConfig::parse("cases = 4d\n")), UsageError);
  CHECK_THROWS_AS(experiment_config_from(KeyValueConfig::parse("seeds = \n")), UsageError);
  CHECK_THROWS_AS(experiment_config_from(KeyValueConfig::parse("seeds = -1\n")), UsageError);
  CHECK_THROWS_AS(experiment_config_from(KeyValueConfig::parse("preset = big\n")), UsageError);
  CHECK_THROWS_AS(experiment_config_from(KeyValueConfig::parse("split_fraction = 1\n")), UsageError);
}

TEST_CASE("output root precedence") {
  ::unsetenv("EMTE_OUTPUT_ROOT");
  CHECK(resolve_output_root(std::nullopt, "cfg") == "cfg");
  ::setenv("EMTE_OUTPUT_ROOT", "/env/root", 1);
  CHECK(resolve_output_root(std::nullopt, "cfg") == "/env/root");
  CHECK(resolve_output_root(fs::path("flag"), "cfg") == "flag");
  ::unsetenv("EMTE_OUTPUT_ROOT");
}

TEST_CASE("summaries use the median and half-range") {
  const auto s = summarize({90.0, 96.0, 93.0});
  CHECK(s.median == 93.0);
  CHECK(s.spread == 3.0);
  CHECK(s.values == std::vector<double>{90.0, 96.0, 93.0});
  CHECK(summarize({1.0, 2.0}).median == 1.5);
  CHECK_THROWS_AS(summarize({}), std::invalid_argument);
}

TEST_CASE("split hygiene assertion") {
  const std::vector<std::size_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const auto good = models::stratified_split(labels, 2, 0.8, 1);
  CHECK_NOTHROW(check_split(good, labels, 2, 0.8));
  auto leak = good;
  leak.test.push_back(leak.train.front());
  CHECK_THROWS_AS(check_split(leak, labels, 2, 0.8), std::logic_error);
  models::Split skewed{{0, 1, 2, 3, 4, 5, 6, 7}, {8, 9}};
  CHECK_THROWS_AS(check_split(skewed, labels, 2, 0.8), std::logic_error);
}

TEST_CASE("sensor restriction") {
  const auto ds = gridgen::load_dataset(tiny_dataset("five", 5, 5));
  const auto sub = restrict_sensors(ds, {"4", "6"});
  REQUIRE(sub.size() == ds.records.size());
  CHECK(sub[0].sensors == 2);
  CHECK(sub[0].layout->sensor_ids == std::vector<std::string>{"4", "6"});
  CHECK(sub[0].at(1, 2, 100) == ds.records[0].at(0, 2, 100));
  CHECK(restrict_sensors(ds, {}).front().voltages == ds.records.front().voltages);
  CHECK_THROWS_AS(restrict_sensors(ds, {"99"}), UsageError);
  CHECK_THROWS_AS(restrict_sensors(ds, {"4", "4"}), UsageError);
}

TEST_CASE("compare_inputs: one seed, CNN only gives a four-row table") {
  auto c = tiny_config(tiny_dataset("five", 5, 5), "inputs");
  const auto t = compare_inputs(c);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].input_case == InputCase::Case1_2D);
  CHECK(t.rows[3].input_case == InputCase::Case4_3DW);
  const auto csv = slurp(c.out / "compare_inputs/table2.csv");
  CHECK(line_count(csv) == 5);
  CHECK(csv.rfind("input,CNN,CNN_spread\n", 0) == 0);
  const auto text = slurp(c.out / "compare_inputs/table2.txt");
  // Every accuracy in the CSV also appears in the text summary.
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  while (std::getline(ss, line)) {
    const auto cells = csv_cells(line);
    CHECK(text.find(cells[0]) != std::string::npos);
    CHECK(text.find(cells[1]) != std::string::npos);
    const double v = std::stod(cells[1]);
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
  }
  const auto curve = slurp(c.out / "compare_inputs/curve_cnn_2dw.csv");
  CHECK(curve.rfind("iteration,seed_1\n5,", 0) == 0);
}

TEST_CASE("compare_inputs on a one-sensor layout still trains 2D images") {
  auto c = tiny_config(tiny_dataset("one", 1, 3), "one");
  c.cases = {InputCase::Case1_2D};
  c.monitor_every = 0;
  const auto t = compare_inputs(c);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].per_model[0].values.size() == 1);
}

TEST_CASE("compare_methods: four methods by five metrics") {
  auto c = tiny_config(tiny_dataset("five", 5, 5), "methods");
  c.models = {models::kAllKinds.begin(), models::kAllKinds.end()};
  const auto t = compare_methods(c);
  REQUIRE(t.rows.size() == 4);
  const auto csv = slurp(c.out / "compare_methods/table4.csv");
  CHECK(csv.rfind("method,ACC,PRE,REC,F1,FPR\n", 0) == 0);
  CHECK(line_count(csv) == 5);
  for (const auto& row : t.rows)
    for (double v : row.metrics)
      if (!std::isnan(v)) {
        CHECK(v >= 0.0);
        CHECK(v <= 100.0);
      }
  CHECK(fs::exists(c.out / "compare_methods/reports/pca_svm_seed1.csv"));
  CHECK(fs::exists(c.out / "compare_methods/reports/cnn_seed1.txt"));
}

TEST_CASE("sweep_sensors: three counts, full count equals a plain run") {
  const auto data = tiny_dataset("ten", 10, 5);
  auto c = tiny_config(data, "sweep");
  const auto t = sweep_sensors(c);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].sensors == std::vector<std::string>{"6", "10"});
  CHECK(t.rows[2].sensors.size() == 10);
  const auto ds = gridgen::load_dataset(data);
  const auto plain = run_once(build_images(ds.records, InputCase::Case2_2DW), {});
  CHECK(t.rows[2].accuracy.median == doctest::Approx(100.0 * plain.accuracy));
  CHECK(line_count(slurp(c.out / "sweep_sensors/sensor_sweep.csv")) == 4);

  c.sensor_counts = {11};
  CHECK_THROWS_AS(sweep_sensors(c), UsageError);
}

TEST_CASE("sweep_placement: five sets, identical sets agree, unknown bus rejected") {
  auto c = tiny_config(tiny_dataset("ten", 10, 5), "placement");
  const auto t = sweep_placement(c);
  REQUIRE(t.rows.size() == 5);
  CHECK(line_count(slurp(c.out / "sweep_placement/placement.csv")) == 6);
  CHECK(slurp(c.out / "sweep_placement/placement_mapping.csv").find("B,19 3 10 7") !=
        std::string::npos);

  c.placements = {{"X", {"6", "4"}, {"6", "4"}}, {"Y", {"6", "4"}, {"6", "4"}}};
  const auto same = sweep_placement(c);
  CHECK(same.rows[0].accuracy.values == same.rows[1].accuracy.values);

  c.placements = {{"Z", {"6", "77"}, {"6", "77"}}};
  CHECK_THROWS_AS(sweep_placement(c), UsageError);
}

TEST_CASE("a split without held-out events is a data error") {
  auto c = tiny_config(tiny_dataset("two", 5, 2), "two");
  c.cases = {InputCase::Case1_2D};
  CHECK_THROWS_AS(compare_inputs(c), DataError);
}

TEST_CASE("missing dataset is a data error") {
  auto c = tiny_config(fs::temp_directory_path() / "emte_no_such_dataset", "missing");
  CHECK_THROWS_AS(compare_inputs(c), DataError);
  c.dataset.clear();
  CHECK_THROWS_AS(compare_methods(c), UsageError);
}

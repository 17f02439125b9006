#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "emte/checkpoint.hpp"
#include "emte/error.hpp"
#include "emte/models.hpp"

using namespace emte;
using namespace emte::models;

namespace {

// Three classes told apart by where a bump sits along the time axis.
ImageSet toy_set(std::size_t per_class, std::uint64_t seed, std::size_t classes = 3,
                 std::size_t height = 2, std::size_t width = 24) {
  ImageSet set;
  set.class_count = classes;
  Rng rng(seed);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      FeatureImage img;
      img.input_case = InputCase::Case2_2DW;
      img.channels = 1;
      img.height = height;
      img.width = width;
      img.pixels.resize(height * width);
      for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) {
          const double centre = 3.0 + 7.0 * static_cast<double>(k) + static_cast<double>(r);
          const double d = static_cast<double>(c) - centre;
          img.pixels[r * width + c] = std::exp(-d * d / 2.0) + 0.05 * rng.uniform();
        }
      set.images.push_back(std::move(img));
      set.labels.push_back(k);
    }
  }
  return set;
}

CnnConfig toy_cnn() {
  CnnConfig c;
  c.filter_count = 4;
  c.filter_height = 1;
  c.filter_width = 5;
  c.train = {30, 8, 0.05, 0.9, 3};
  return c;
}

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("emte_models_" + name);
}

}  // namespace

TEST_CASE("model kind keys") {
  for (ModelKind k : kAllKinds) CHECK(kind_from_key(kind_key(k)) == k);
  CHECK(kind_label(ModelKind::PCA_SVM) == "PCA+SVM");
  CHECK_FALSE(kind_from_key("rnn").has_value());
}

TEST_CASE("stratified split is disjoint, stratified and seeded") {
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < 5; ++k) labels.insert(labels.end(), 200, k);
  const auto s = stratified_split(labels, 5, 0.8, 1);
  CHECK(s.train.size() == 800);
  CHECK(s.test.size() == 200);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(1000);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  std::array<std::size_t, 5> per{};
  for (std::size_t i : s.test) ++per[labels[i]];
  CHECK(per == std::array<std::size_t, 5>{40, 40, 40, 40, 40});
  CHECK(std::is_sorted(s.train.begin(), s.train.end()));
  CHECK(stratified_split(labels, 5, 0.8, 1).test == s.test);
  CHECK(stratified_split(labels, 5, 0.8, 2).test != s.test);
  CHECK_THROWS_AS(stratified_split(labels, 5, 1.0, 1), std::invalid_argument);
}

TEST_CASE("presets follow the published configurations") {
  const auto r = CnnConfig::rtds();
  CHECK(r.filter_count == 10);
  CHECK(r.filter_height == 2);
  CHECK(r.filter_width == 20);
  CHECK(r.train.epochs == 40);
  CHECK(r.train.batch_size == 128);
  CHECK(r.train.learning_rate == 1e-4);
  CHECK(r.train.momentum == 0.9);
  const auto e = CnnConfig::emtp();
  CHECK(e.filter_height == 5);
  CHECK(e.filter_width == 100);
  CHECK(e.train.epochs == 4);
}

TEST_CASE("size arithmetic") {
  CHECK(cnn_dense_inputs(CnnConfig::rtds(), {1, 3, 333}) == 3140);
  CHECK(tmlp_layer_sizes(999) == std::vector<std::size_t>{250, 63});
  CHECK(autoencoder_hidden_size(999) == 125);
  CHECK_THROWS_AS(cnn_dense_inputs(CnnConfig::emtp(), {1, 3, 333}), std::invalid_argument);
}

TEST_CASE("training guards") {
  auto one = toy_set(4, 1, 1);
  CHECK_THROWS_AS(train_tmlp(one, {1, 4, 0.01, 0.9, 1}), std::invalid_argument);
  auto missing = toy_set(4, 1, 3);
  auto only_two = missing.subset({0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(train_cnn(only_two, toy_cnn()), std::invalid_argument);
  auto mixed = toy_set(2, 1);
  mixed.images[0].width = 20;
  mixed.images[0].pixels.resize(40);
  CHECK_THROWS_AS(train_tmlp(mixed, {1, 4, 0.01, 0.9, 1}), std::invalid_argument);
}

TEST_CASE("zero-weight CNN predicts uniformly and breaks ties to class 0") {
  const auto set = toy_set(2, 4);
  CnnConfig c = toy_cnn();
  c.train.epochs = 1;
  auto model = train_cnn(set, c);
  for (auto& t : model.params) t.fill(0.0);
  const auto p = predict(model, set.images[5]);
  CHECK(p.label == 0);
  for (double q : p.probabilities) CHECK(q == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("toy CNN learns three separated classes") {
  const auto set = toy_set(20, 7);
  const auto model = train_cnn(set, toy_cnn());
  CHECK(accuracy(model, set) >= 0.95);
  CHECK(model.log.iterations.size() == 30 * 8);
  CHECK(model.log.epoch_accuracy.size() == 30);
  CHECK(model.params[0].shape() == std::vector<std::size_t>{4, 1, 1, 5});

  // Equal shifts of all logits leave the decision alone.
  auto logits = cnn_logits(model, set.images[0]);
  const auto base = std::max_element(logits.begin(), logits.end()) - logits.begin();
  for (double& z : logits) z += 17.0;
  CHECK(std::max_element(logits.begin(), logits.end()) - logits.begin() == base);

  auto wrong = set.images[0];
  wrong.width = 23;
  wrong.pixels.resize(46);
  CHECK_THROWS_AS(predict(model, wrong), std::invalid_argument);
  auto wrong_case = set.images[0];
  wrong_case.input_case = InputCase::Case1_2D;
  CHECK_THROWS_AS(predict(model, wrong_case), std::invalid_argument);
}

TEST_CASE("training is deterministic and checkpoints roundtrip") {
  const auto set = toy_set(6, 9);
  CnnConfig c = toy_cnn();
  c.train.epochs = 3;
  const TrainMonitor mon{&set, 2};
  const auto a = train_cnn(set, c, mon);
  const auto b = train_cnn(set, c, mon);
  CHECK(a.params == b.params);
  CHECK(a.log.monitor.size() == b.log.monitor.size());
  CHECK(a.log.monitor.front().iteration == 2);

  const auto pa = tmp("a.json");
  save_model(a, pa, {{"note", "x"}});
  const auto meta_crc = crc32_of_file(pa);
  const auto blob_crc = crc32_of_file(pa.string() + ".bin");
  save_model(b, pa, {{"note", "x"}});
  CHECK(crc32_of_file(pa) == meta_crc);
  CHECK(crc32_of_file(pa.string() + ".bin") == blob_crc);
  nlohmann::json extra;
  const auto back = load_model(pa, &extra);
  CHECK(back.params == a.params);
  CHECK(back.kind == ModelKind::CNN);
  CHECK(back.input_shape == a.input_shape);
  CHECK(extra.at("note") == "x");
  for (std::size_t i = 0; i < set.size(); ++i)
    CHECK(predict(back, set.images[i]).label == predict(a, set.images[i]).label);

  c.train.seed = 4;
  CHECK(train_cnn(set, c).params != a.params);
  CHECK_THROWS_AS(load_model(tmp("missing.json")), DataError);
  std::filesystem::remove(pa);
  std::filesystem::remove(pa.string() + ".bin");
}

TEST_CASE("t-MLP learns the toy set") {
  const auto set = toy_set(20, 11, 3, 4, 64);
  const auto model = train_tmlp(set, {40, 8, 0.05, 0.9, 2});
  CHECK(accuracy(model, set) >= 0.95);
  CHECK(model.params.size() == 6);
  CHECK(model.params[0].shape() == std::vector<std::size_t>{256, 64});
  CHECK(model.params[2].shape() == std::vector<std::size_t>{64, 16});
}

TEST_CASE("PCA of already-orthogonal data is a rotation") {
  // Points on the axes of a 3-d space with distinct spreads.
  std::vector<double> rows;
  const double spread[3] = {3.0, 2.0, 1.0};
  for (std::size_t axis = 0; axis < 3; ++axis)
    for (double s : {-1.0, 1.0}) {
      std::array<double, 3> x{};
      x[axis] = s * spread[axis];
      rows.insert(rows.end(), x.begin(), x.end());
    }
  const auto pca = fit_pca(rows, 6, 3, 3, 1);
  REQUIRE(pca.components == 3);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto x = std::span<const double>(rows).subspan(i * 3, 3);
    const auto back = pca.reconstruct(pca.project(x));
    for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(back[d] - x[d]) < 1e-10);
  }
  CHECK(pca.eigenvalues[0] > pca.eigenvalues[1]);
  CHECK(pca.eigenvalues[1] > pca.eigenvalues[2]);
  CHECK(std::abs(std::abs(pca.basis[0]) - 1.0) < 1e-10);
  const auto z = pca.project(pca.mean);
  for (double v : z) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("PCA on random data finds orthonormal leading directions") {
  Rng rng(5);
  const std::size_t n = 200, d = 30;
  std::vector<double> rows(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(0, 5), b = rng.normal(0, 2);
    for (std::size_t j = 0; j < d; ++j)
      rows[i * d + j] = a * std::sin(0.3 * j) + b * std::cos(0.7 * j) + 0.01 * rng.normal() + 4.0;
  }
  const auto pca = fit_pca(rows, n, d, 4, 2);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t q = 0; q < 4; ++q) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += pca.basis[p * d + j] * pca.basis[q * d + j];
      CHECK(std::abs(dot - (p == q ? 1.0 : 0.0)) < 1e-9);
    }
  CHECK((pca.eigenvalues[0] + pca.eigenvalues[1]) / pca.total_variance > 0.999);
  const auto again = fit_pca(rows, n, d, 4, 2);
  CHECK(again.basis == pca.basis);
}

TEST_CASE("PCA+SVM separates linearly separable clouds") {
  ImageSet set;
  set.class_count = 2;
  Rng rng(6);
  for (std::size_t k = 0; k < 2; ++k)
    for (int i = 0; i < 30; ++i) {
      FeatureImage img;
      img.channels = 1;
      img.height = 1;
      img.width = 6;
      for (std::size_t j = 0; j < 6; ++j)
        img.pixels.push_back((k == 0 ? 0.2 : 0.8) + 0.05 * rng.normal());
      set.images.push_back(img);
      set.labels.push_back(k);
    }
  PcaSvmConfig cfg;
  cfg.components = 3;
  const auto model = train_pca_svm(set, cfg);
  CHECK(accuracy(model, set) == 1.0);
  CHECK(model.log.iterations.back().loss < 0.05);
  CHECK(model.log.iterations.back().loss < model.log.iterations.front().loss);
}

TEST_CASE("autoencoder reconstructs low-rank data and its head learns") {
  // Rank-one images: hidden size ceil(8/8) = 1 can represent them.
  ImageSet set;
  set.class_count = 2;
  Rng rng(13);
  const std::array<double, 8> dir = {0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.6, 0.4};
  for (std::size_t k = 0; k < 2; ++k)
    for (int i = 0; i < 40; ++i) {
      FeatureImage img;
      img.channels = 1;
      img.height = 1;
      img.width = 8;
      const double a = (k == 0 ? 0.2 : 0.8) + 0.1 * rng.uniform();
      for (double v : dir) img.pixels.push_back(a * v);
      set.images.push_back(img);
      set.labels.push_back(k);
    }
  double mean = 0.0, var = 0.0;
  for (const auto& img : set.images) for (double v : img.pixels) mean += v;
  mean /= 640.0;
  for (const auto& img : set.images) for (double v : img.pixels) var += (v - mean) * (v - mean);
  var /= 640.0;
  const auto model = train_autoencoder(set, {150, 8, 0.5, 0.9, 1});
  REQUIRE(!model.log.pretrain.empty());
  CHECK(model.log.pretrain.back().loss < var);
  CHECK(model.log.pretrain.back().loss < model.log.pretrain.front().loss);
  CHECK(accuracy(model, set) >= 0.95);
  CHECK(model.params[0].shape() == std::vector<std::size_t>{8, 1});
}

TEST_CASE("log csv") {
  TrainLog log;
  log.iterations = {{1, 1, 0.5, 0.25}, {2, 1, 0.25, 0.5}};
  const auto path = tmp("log.csv");
  write_log_csv(log, path);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "iteration,epoch,loss,train_acc");
  std::filesystem::remove(path);
}

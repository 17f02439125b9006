#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emte/nn.hpp"
#include "emte/preprocess.hpp"
#include "emte/tensor.hpp"

namespace emte::models {

using preprocess::FeatureImage;
using preprocess::InputCase;

enum class ModelKind { CNN, TMLP, PCA_SVM, Autoencoder };

inline constexpr std::array<ModelKind, 4> kAllKinds = {ModelKind::CNN, ModelKind::TMLP,
                                                    ModelKind::PCA_SVM, ModelKind::Autoencoder};

/// "cnn", "tmlp", "pca_svm", "autoencoder"
std::string_view kind_key(ModelKind k);
/// "CNN", "t-MLP", "PCA+SVM", "Autoencoder"
std::string_view kind_label(ModelKind k);
std::optional<ModelKind> kind_from_key(std::string_view key);

/// Labeled images sharing one case tag and shape. Labels are zero-based.
struct ImageSet {
  std::vector<FeatureImage> images;
  std::vector<std::size_t> labels;
  std::size_t class_count = 5;

  std::size_t size() const { return images.size(); }
  ImageSet subset(const std::vector<std::size_t>& indices) const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class: shuffle that class's indices with a seeded generator and put
/// the first round(fraction * n_class) into train. Both lists are returned
/// in ascending index order.
Split stratified_split(const std::vector<std::size_t>& labels, std::size_t class_count,
                       double train_fraction, std::uint64_t seed);

// Mini-batch SGD with classical momentum.
struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct CnnConfig {
  std::size_t filter_count = 10;
  std::size_t filter_height = 2;
  std::size_t filter_width = 20;
  std::size_t pool_width = 2;  // 1 disables pooling
  bool relu = true;
  TrainConfig train;

  /// Ten 2x20 filters, 40 epochs (9-bus recorder study).
  static CnnConfig rtds();
  /// Ten 5x100 filters, 4 epochs (30-bus study).
  static CnnConfig emtp();
  /// 2x20 filters tuned for the desk-scale synthetic dataset.
  static CnnConfig synthetic();
};

struct PcaSvmConfig {
  std::size_t components = 32;
  double lambda = 1e-4;  // L2 weight of each one-vs-rest hinge objective
  TrainConfig train{200, 64, 0.05, 0.0, 1};
};

struct LogEntry {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;  // on the mini-batch
};

struct MonitorPoint {
  std::size_t iteration = 0;
  double accuracy = 0.0;
};

struct TrainLog {
  std::vector<LogEntry> iterations;
  std::vector<double> epoch_accuracy;
  std::vector<MonitorPoint> monitor;  // held-out accuracy, when requested
  std::vector<LogEntry> pretrain;     // autoencoder reconstruction stage
};

/// Optional held-out set evaluated every `every` iterations during training.
struct TrainMonitor {
  const ImageSet* images = nullptr;
  std::size_t every = 10;
};

struct TrainedModel {
  ModelKind kind = ModelKind::CNN;
  InputCase input_case = InputCase::Case2_2DW;
  std::array<std::size_t, 3> input_shape{};
  std::size_t class_count = 0;
  nlohmann::json arch;    // architecture description
  nlohmann::json hyper;   // training hyperparameters
  std::vector<Tensor> params;
  TrainLog log;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// CNN input size after conv (valid), ReLU and pooling, flattened.
std::size_t cnn_dense_inputs(const CnnConfig& config, std::array<std::size_t, 3> image_shape);

TrainedModel train_cnn(const ImageSet& train, const CnnConfig& config,
                       const TrainMonitor& monitor = {});
/// Two tapered ReLU layers of ceil(in/4) and ceil(in/16) units, then softmax.
TrainedModel train_tmlp(const ImageSet& train, const TrainConfig& config,
                        const TrainMonitor& monitor = {});
TrainedModel train_pca_svm(const ImageSet& train, const PcaSvmConfig& config,
                           const TrainMonitor& monitor = {});
/// Sigmoid encoder of ceil(in/8) units trained on reconstruction MSE, then a
/// softmax head on the frozen code. Both stages use `config`.
TrainedModel train_autoencoder(const ImageSet& train, const TrainConfig& config,
                               const TrainMonitor& monitor = {});

std::vector<std::size_t> tmlp_layer_sizes(std::size_t inputs);
std::size_t autoencoder_hidden_size(std::size_t inputs);

/// Throws std::invalid_argument if the image's case or shape differs from
/// the model's. Ties in the score resolve to the lowest class index.
Prediction predict(const TrainedModel& model, const FeatureImage& image);

double accuracy(const TrainedModel& model, const ImageSet& set);

/// Logits of a CNN for one image (before softmax).
std::vector<double> cnn_logits(const TrainedModel& model, const FeatureImage& image);

// Principal components of the rows of a data matrix.
struct Pca {
  std::size_t dims = 0;
  std::size_t components = 0;
  std::vector<double> mean;           // [dims]
  std::vector<double> basis;          // [components x dims], orthonormal rows
  std::vector<double> eigenvalues;    // descending
  double total_variance = 0.0;

  std::vector<double> project(std::span<const double> x) const;
  std::vector<double> reconstruct(std::span<const double> z) const;
};

/// Covariance eigenvectors by block subspace iteration on the implicit
/// operator X_c^T X_c / (n - 1). `components` is clamped to the dimension.
Pca fit_pca(std::span<const double> rows, std::size_t n, std::size_t dims,
            std::size_t components, std::uint64_t seed);

/// Parameters as a checkpoint (metadata + tensor blob).
void save_model(const TrainedModel& model, const std::filesystem::path& path,
                const nlohmann::json& extra = {});
TrainedModel load_model(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

/// CSV: iteration,epoch,loss,train_acc
void write_log_csv(const TrainLog& log, const std::filesystem::path& path);

}  // namespace emte::models

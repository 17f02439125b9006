#include "emte/models.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <stdexcept>

#include "emte/checkpoint.hpp"
#include "emte/error.hpp"

namespace emte::models {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kOrderStream = 0x4f524452;
constexpr std::uint64_t kSplitStream = 0x53504c54;
constexpr std::uint64_t kPcaStream = 0x50434130;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_training_set(const ImageSet& train, const TrainConfig& cfg) {
  if (cfg.epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  if (train.images.empty()) throw std::invalid_argument("training set is empty");
  if (train.labels.size() != train.images.size()) {
    throw std::invalid_argument("training set has mismatched image and label counts");
  }
  if (train.class_count < 2) throw std::invalid_argument("need at least two classes");
  std::vector<std::size_t> seen(train.class_count, 0);
  for (std::size_t label : train.labels) {
    if (label >= train.class_count) throw std::invalid_argument("label out of range");
    ++seen[label];
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (seen[c] == 0) {
      throw std::invalid_argument("class " + std::to_string(c + 1) + " absent from training split");
    }
  }
  const auto& first = train.images.front();
  for (const auto& img : train.images) {
    if (img.shape() != first.shape() || img.input_case != first.input_case) {
      throw std::invalid_argument("training images do not share one case and shape");
    }
  }
}

TrainedModel new_model(ModelKind kind, const ImageSet& train) {
  TrainedModel m;
  m.kind = kind;
  m.input_case = train.images.front().input_case;
  m.input_shape = train.images.front().shape();
  m.class_count = train.class_count;
  return m;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"seed", c.seed}};
}

TrainConfig train_config_from(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

// Per-sample step: accumulates parameter gradients and returns the sample
// loss and predicted label.
using SampleStep =
    std::function<std::pair<double, std::size_t>(const FeatureImage&, std::size_t,
                                                 std::vector<Tensor>&)>;

// Mini-batch SGD over the tensors model.params[trainable...]. Gradients are
// summed in batch order and divided by the batch size.
void run_sgd(TrainedModel& model, const std::vector<std::size_t>& trainable,
             const ImageSet& train, const TrainConfig& cfg, const SampleStep& step,
             std::vector<LogEntry>& log, std::vector<double>* epoch_accuracy,
             const TrainMonitor& monitor, std::uint64_t order_stream) {
  Rng order_rng(mix_seed(cfg.seed, order_stream));
  std::vector<Tensor> grads;
  for (const Tensor& p : model.params) grads.emplace_back(p.shape());
  nn::OptimizerState opt{cfg.learning_rate, cfg.momentum, {}};
  std::vector<std::size_t> order(train.size());
  std::size_t iteration = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(std::span<std::size_t>(order));
    std::size_t epoch_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t t : trainable) grads[t].fill(0.0);
      double loss = 0.0;
      std::size_t correct = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const auto [sample_loss, predicted] = step(train.images[idx], train.labels[idx], grads);
        loss += sample_loss;
        if (predicted == train.labels[idx]) ++correct;
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::vector<Tensor> params, batch_grads;
      for (std::size_t t : trainable) {
        for (double& g : grads[t].data()) g *= scale;
        params.push_back(std::move(model.params[t]));
        batch_grads.push_back(std::move(grads[t]));
      }
      nn::sgd_momentum_step(params, batch_grads, opt);
      for (std::size_t k = 0; k < trainable.size(); ++k) {
        model.params[trainable[k]] = std::move(params[k]);
        grads[trainable[k]] = std::move(batch_grads[k]);
      }
      ++iteration;
      epoch_correct += correct;
      log.push_back({iteration, epoch, loss * scale, static_cast<double>(correct) * scale});
      if (monitor.images && monitor.every > 0 && iteration % monitor.every == 0) {
        model.log.monitor.push_back({iteration, accuracy(model, *monitor.images)});
      }
    }
    if (epoch_accuracy) {
      epoch_accuracy->push_back(static_cast<double>(epoch_correct) /
                                static_cast<double>(order.size()));
    }
  }
}

void check_image(const TrainedModel& model, const FeatureImage& image) {
  if (image.input_case != model.input_case || image.shape() != model.input_shape) {
    throw std::invalid_argument(
        "image (case " + std::string(preprocess::case_key(image.input_case)) + ", shape " +
        shape_string(image.shape()) + ") does not match model (case " +
        std::string(preprocess::case_key(model.input_case)) + ", shape " +
        shape_string(model.input_shape) + ")");
  }
}

// ---- CNN -------------------------------------------------------------------

struct CnnTrace {
  Tensor input;
  Tensor activation;  // conv output after the optional ReLU
  nn::PoolResult pooled;
  std::vector<double> logits;
};

CnnTrace cnn_forward(const TrainedModel& m, const FeatureImage& image) {
  const std::size_t pool_width = m.arch.at("pool_width").get<std::size_t>();
  const bool relu = m.arch.at("relu").get<bool>();
  CnnTrace tr;
  tr.input = Tensor({image.channels, image.height, image.width}, image.pixels);
  tr.activation = nn::conv2d_forward(tr.input, m.params[0], m.params[1]);
  if (relu) nn::relu_inplace(tr.activation.data());
  if (pool_width > 1) {
    tr.pooled = nn::maxpool_forward(tr.activation, pool_width);
  } else {
    tr.pooled.output = tr.activation;
  }
  tr.logits = nn::dense_forward(tr.pooled.output.data(), m.params[2], m.params[3]);
  return tr;
}

// ---- fully connected stacks ---------------------------------------------

// Forward through dense layers (weights, bias pairs starting at `first`)
// with ReLU between them; returns every layer's output, last = logits.
std::vector<std::vector<double>> mlp_forward(const TrainedModel& m, std::span<const double> x,
                                             std::size_t first, std::size_t layers) {
  std::vector<std::vector<double>> outs;
  std::span<const double> in = x;
  for (std::size_t l = 0; l < layers; ++l) {
    outs.push_back(nn::dense_forward(in, m.params[first + 2 * l], m.params[first + 2 * l + 1]));
    if (l + 1 < layers) nn::relu_inplace(outs.back());
    in = outs.back();
  }
  return outs;
}

std::vector<double> encode(const TrainedModel& m, std::span<const double> x) {
  auto h = nn::dense_forward(x, m.params[0], m.params[1]);
  nn::sigmoid_inplace(h);
  return h;
}

}  // namespace

// ---- public helpers -------------------------------------------------------

std::string_view kind_key(ModelKind k) {
  switch (k) {
    case ModelKind::CNN: return "cnn";
    case ModelKind::TMLP: return "tmlp";
    case ModelKind::PCA_SVM: return "pca_svm";
    case ModelKind::Autoencoder: return "autoencoder";
  }
  return "?";
}

std::string_view kind_label(ModelKind k) {
  switch (k) {
    case ModelKind::CNN: return "CNN";
    case ModelKind::TMLP: return "t-MLP";
    case ModelKind::PCA_SVM: return "PCA+SVM";
    case ModelKind::Autoencoder: return "Autoencoder";
  }
  return "?";
}

std::optional<ModelKind> kind_from_key(std::string_view key) {
  for (ModelKind k : kAllKinds) {
    if (kind_key(k) == key) return k;
  }
  return std::nullopt;
}

ImageSet ImageSet::subset(const std::vector<std::size_t>& indices) const {
  ImageSet out;
  out.class_count = class_count;
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Split stratified_split(const std::vector<std::size_t>& labels, std::size_t class_count,
                       double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must lie in (0,1)");
  }
  Rng rng(mix_seed(seed, kSplitStream));
  Split split;
  for (std::size_t c = 0; c < class_count; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(members.size())));
    split.train.insert(split.train.end(), members.begin(),
                       members.begin() + static_cast<long>(n_train));
    split.test.insert(split.test.end(), members.begin() + static_cast<long>(n_train),
                      members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

CnnConfig CnnConfig::rtds() {
  CnnConfig c;
  c.filter_height = 2;
  c.filter_width = 20;
  c.train.epochs = 40;
  return c;
}

CnnConfig CnnConfig::emtp() {
  CnnConfig c;
  c.filter_height = 5;
  c.filter_width = 100;
  c.train.epochs = 4;
  return c;
}

CnnConfig CnnConfig::synthetic() {
  CnnConfig c = rtds();
  c.train.batch_size = 32;
  c.train.learning_rate = 0.03;
  return c;
}

std::size_t cnn_dense_inputs(const CnnConfig& config, std::array<std::size_t, 3> shape) {
  const auto [channels, h, w] = shape;
  (void)channels;
  if (config.filter_height > h || config.filter_width > w) {
    throw std::invalid_argument("filter " + std::to_string(config.filter_height) + "x" +
                                std::to_string(config.filter_width) + " larger than image " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = h - config.filter_height + 1;
  const std::size_t ow = w - config.filter_width + 1;
  const std::size_t pooled_w = config.pool_width > 1 ? ow / config.pool_width : ow;
  if (pooled_w == 0) throw std::invalid_argument("pool width exceeds conv output width");
  return config.filter_count * oh * pooled_w;
}

TrainedModel train_cnn(const ImageSet& train, const CnnConfig& config,
                       const TrainMonitor& monitor) {
  check_training_set(train, config.train);
  if (config.filter_count == 0 || config.pool_width == 0) {
    throw std::invalid_argument("filter count and pool width must be positive");
  }
  TrainedModel m = new_model(ModelKind::CNN, train);
  const std::size_t dense_in = cnn_dense_inputs(config, m.input_shape);
  m.arch = {{"filter_count", config.filter_count}, {"filter_height", config.filter_height},
            {"filter_width", config.filter_width}, {"pool_width", config.pool_width},
            {"relu", config.relu},                 {"dense_inputs", dense_in}};
  m.hyper = to_json(config.train);

  const std::vector<nn::ParamSpec> specs = {
      {"conv.filters",
       {config.filter_count, m.input_shape[0], config.filter_height, config.filter_width}},
      {"conv.biases", {config.filter_count}, true},
      {"dense.weights", {dense_in, m.class_count}},
      {"dense.biases", {m.class_count}, true}};
  Rng init_rng(mix_seed(config.train.seed, kInitStream));
  m.params = nn::init_params(specs, init_rng);

  const SampleStep step = [&m, &config](const FeatureImage& img, std::size_t label,
                                         std::vector<Tensor>& grads) {
    CnnTrace tr = cnn_forward(m, img);
    const auto sm = nn::softmax_xent(tr.logits, label);
    const auto grad_pooled = nn::dense_backward(tr.pooled.output.data(), m.params[2],
                                                sm.grad_logits, grads[2], grads[3]);
    Tensor grad_act;
    if (config.pool_width > 1) {
      grad_act = nn::maxpool_backward(tr.pooled.argmax,
                                      Tensor(tr.pooled.output.shape(), grad_pooled),
                                      tr.activation.shape());
    } else {
      grad_act = Tensor(tr.activation.shape(), grad_pooled);
    }
    if (config.relu) nn::relu_backward_inplace(tr.activation.data(), grad_act.data());
    const auto cg = nn::conv2d_backward(tr.input, m.params[0], grad_act, false);
    for (std::size_t i = 0; i < cg.filters.size(); ++i) grads[0][i] += cg.filters[i];
    for (std::size_t i = 0; i < cg.biases.size(); ++i) grads[1][i] += cg.biases[i];
    return std::pair{sm.loss, argmax(sm.probabilities)};
  };
  run_sgd(m, {0, 1, 2, 3}, train, config.train, step, m.log.iterations, &m.log.epoch_accuracy,
          monitor, kOrderStream);
  return m;
}

std::vector<std::size_t> tmlp_layer_sizes(std::size_t inputs) {
  return {ceil_div(inputs, 4), ceil_div(inputs, 16)};
}

std::size_t autoencoder_hidden_size(std::size_t inputs) { return ceil_div(inputs, 8); }

TrainedModel train_tmlp(const ImageSet& train, const TrainConfig& config,
                        const TrainMonitor& monitor) {
  check_training_set(train, config);
  TrainedModel m = new_model(ModelKind::TMLP, train);
  const std::size_t in = train.images.front().pixels.size();
  const auto hidden = tmlp_layer_sizes(in);
  m.arch = {{"inputs", in}, {"hidden", hidden}};
  m.hyper = to_json(config);
  const std::vector<nn::ParamSpec> specs = {{"fc1.weights", {in, hidden[0]}},
                                            {"fc1.biases", {hidden[0]}, true},
                                            {"fc2.weights", {hidden[0], hidden[1]}},
                                            {"fc2.biases", {hidden[1]}, true},
                                            {"fc3.weights", {hidden[1], m.class_count}},
                                            {"fc3.biases", {m.class_count}, true}};
  Rng init_rng(mix_seed(config.seed, kInitStream));
  m.params = nn::init_params(specs, init_rng);

  const SampleStep step = [&m](const FeatureImage& img, std::size_t label,
                               std::vector<Tensor>& grads) {
    const auto outs = mlp_forward(m, img.pixels, 0, 3);
    const auto sm = nn::softmax_xent(outs[2], label);
    auto g2 = nn::dense_backward(outs[1], m.params[4], sm.grad_logits, grads[4], grads[5]);
    nn::relu_backward_inplace(outs[1], g2);
    auto g1 = nn::dense_backward(outs[0], m.params[2], g2, grads[2], grads[3]);
    nn::relu_backward_inplace(outs[0], g1);
    nn::dense_backward(img.pixels, m.params[0], g1, grads[0], grads[1], false);
    return std::pair{sm.loss, argmax(sm.probabilities)};
  };
  run_sgd(m, {0, 1, 2, 3, 4, 5}, train, config, step, m.log.iterations, &m.log.epoch_accuracy,
          monitor, kOrderStream);
  return m;
}

TrainedModel train_autoencoder(const ImageSet& train, const TrainConfig& config,
                               const TrainMonitor& monitor) {
  check_training_set(train, config);
  TrainedModel m = new_model(ModelKind::Autoencoder, train);
  const std::size_t in = train.images.front().pixels.size();
  const std::size_t hidden = autoencoder_hidden_size(in);
  m.arch = {{"inputs", in}, {"hidden", hidden}};
  m.hyper = to_json(config);
  const std::vector<nn::ParamSpec> specs = {{"encoder.weights", {in, hidden}},
                                            {"encoder.biases", {hidden}, true},
                                            {"decoder.weights", {hidden, in}},
                                            {"decoder.biases", {in}, true},
                                            {"head.weights", {hidden, m.class_count}},
                                            {"head.biases", {m.class_count}, true}};
  Rng init_rng(mix_seed(config.seed, kInitStream));
  m.params = nn::init_params(specs, init_rng);

  const double inv_in = 1.0 / static_cast<double>(in);
  const SampleStep reconstruct = [&m, inv_in](const FeatureImage& img, std::size_t,
                                              std::vector<Tensor>& grads) {
    const auto h = encode(m, img.pixels);
    const auto out = nn::dense_forward(h, m.params[2], m.params[3]);
    double loss = 0.0;
    std::vector<double> g(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double e = out[i] - img.pixels[i];
      loss += e * e * inv_in;
      g[i] = 2.0 * e * inv_in;
    }
    auto gh = nn::dense_backward(h, m.params[2], g, grads[2], grads[3]);
    for (std::size_t j = 0; j < gh.size(); ++j) gh[j] *= h[j] * (1.0 - h[j]);
    nn::dense_backward(img.pixels, m.params[0], gh, grads[0], grads[1], false);
    // Reconstruction has no class prediction; report an impossible label.
    return std::pair{loss, std::size_t(-1)};
  };
  run_sgd(m, {0, 1, 2, 3}, train, config, reconstruct, m.log.pretrain, nullptr, {},
          kOrderStream + 1);
  for (auto& e : m.log.pretrain) e.train_accuracy = 0.0;

  const SampleStep classify = [&m](const FeatureImage& img, std::size_t label,
                                   std::vector<Tensor>& grads) {
    const auto h = encode(m, img.pixels);
    const auto logits = nn::dense_forward(h, m.params[4], m.params[5]);
    const auto sm = nn::softmax_xent(logits, label);
    nn::dense_backward(h, m.params[4], sm.grad_logits, grads[4], grads[5], false);
    return std::pair{sm.loss, argmax(sm.probabilities)};
  };
  run_sgd(m, {4, 5}, train, config, classify, m.log.iterations, &m.log.epoch_accuracy, monitor,
          kOrderStream);
  return m;
}

// ---- PCA + linear SVM -------------------------------------------------------

std::vector<double> Pca::project(std::span<const double> x) const {
  if (x.size() != dims) throw std::invalid_argument("PCA input has the wrong dimension");
  std::vector<double> z(components, 0.0);
  for (std::size_t c = 0; c < components; ++c) {
    const double* b = basis.data() + c * dims;
    double acc = 0.0;
    for (std::size_t d = 0; d < dims; ++d) acc += b[d] * (x[d] - mean[d]);
    z[c] = acc;
  }
  return z;
}

std::vector<double> Pca::reconstruct(std::span<const double> z) const {
  if (z.size() != components) throw std::invalid_argument("PCA code has the wrong dimension");
  std::vector<double> x = mean;
  for (std::size_t c = 0; c < components; ++c) {
    const double* b = basis.data() + c * dims;
    for (std::size_t d = 0; d < dims; ++d) x[d] += z[c] * b[d];
  }
  return x;
}

Pca fit_pca(std::span<const double> rows, std::size_t n, std::size_t dims,
            std::size_t components, std::uint64_t seed) {
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (n < 2) throw std::invalid_argument("PCA needs at least two samples");
  if (rows.size() != n * dims) throw std::invalid_argument("PCA data has the wrong size");
  if (components == 0) throw std::invalid_argument("PCA needs at least one component");
  if (components > dims) {
    std::cerr << "warning: PCA components " << components << " exceed dimension " << dims
              << "; clamping\n";
    components = dims;
  }
  const Eigen::Map<const RowMatrix> x(rows.data(), static_cast<Eigen::Index>(n),
                                      static_cast<Eigen::Index>(dims));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - mean;
  const double denom = static_cast<double>(n - 1);

  const auto k = static_cast<Eigen::Index>(components);
  const auto d = static_cast<Eigen::Index>(dims);
  Rng rng(mix_seed(seed, kPcaStream));
  Eigen::MatrixXd q(d, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) q(i, j) = rng.normal();
  }
  Eigen::VectorXd ritz = Eigen::VectorXd::Zero(k);
  for (int iter = 0; iter < 500; ++iter) {
    const Eigen::MatrixXd z = xc.transpose() * (xc * q) / denom;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    // Rayleigh-Ritz on the current subspace.
    const Eigen::MatrixXd y = xc * q;
    const Eigen::MatrixXd t = y.transpose() * y / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
    const Eigen::VectorXd values = eig.eigenvalues().reverse();
    q = q * eig.eigenvectors().rowwise().reverse();
    const double change = (values - ritz).cwiseAbs().maxCoeff();
    ritz = values;
    if (iter >= 5 && change <= 1e-13 * std::max(1e-300, std::abs(values(0)))) break;
  }

  Pca pca;
  pca.dims = dims;
  pca.components = components;
  pca.mean.assign(mean.data(), mean.data() + d);
  pca.total_variance = xc.squaredNorm() / denom;
  pca.basis.resize(components * dims);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::VectorXd v = q.col(j);
    Eigen::Index peak = 0;
    v.cwiseAbs().maxCoeff(&peak);
    if (v(peak) < 0) v = -v;
    for (Eigen::Index i = 0; i < d; ++i) pca.basis[static_cast<std::size_t>(j * d + i)] = v(i);
    pca.eigenvalues.push_back(std::max(0.0, ritz(j)));
  }
  return pca;
}

namespace {

std::vector<double> svm_features(const TrainedModel& m, std::span<const double> pixels) {
  const std::size_t k = m.params[1].dim(0);
  const std::size_t d = m.params[0].size();
  const double scale = m.params[2][0];
  std::vector<double> z(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double* b = m.params[1].raw() + c * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += b[i] * (pixels[i] - m.params[0][i]);
    z[c] = acc * scale;
  }
  return z;
}

}  // namespace

TrainedModel train_pca_svm(const ImageSet& train, const PcaSvmConfig& config,
                           const TrainMonitor& monitor) {
  check_training_set(train, config.train);
  TrainedModel m = new_model(ModelKind::PCA_SVM, train);
  const std::size_t dims = train.images.front().pixels.size();
  std::vector<double> rows;
  rows.reserve(train.size() * dims);
  for (const auto& img : train.images) rows.insert(rows.end(), img.pixels.begin(), img.pixels.end());
  const Pca pca = fit_pca(rows, train.size(), dims, config.components, config.train.seed);
  double retained = 0.0;
  for (double v : pca.eigenvalues) retained += v;
  // One global scale (not whitening) keeps the projected features O(1).
  const double scale =
      pca.eigenvalues.front() > 0.0 ? 1.0 / std::sqrt(pca.eigenvalues.front()) : 1.0;

  m.arch = {{"inputs", dims},
            {"components", pca.components},
            {"retained_variance",
             pca.total_variance > 0.0 ? retained / pca.total_variance : 1.0},
            {"lambda", config.lambda}};
  m.hyper = to_json(config.train);
  m.params.emplace_back(std::vector<std::size_t>{dims}, pca.mean);
  m.params.emplace_back(std::vector<std::size_t>{pca.components, dims}, pca.basis);
  m.params.emplace_back(std::vector<std::size_t>{1}, std::vector<double>{scale});
  m.params.emplace_back(std::vector<std::size_t>{pca.components, m.class_count});
  m.params.emplace_back(std::vector<std::size_t>{m.class_count});

  // Projected features are fixed during SVM training; cache them.
  std::vector<std::vector<double>> features;
  features.reserve(train.size());
  for (const auto& img : train.images) features.push_back(svm_features(m, img.pixels));
  // Train on image indices so run_sgd can drive the loop; map image address
  // back to its cached features.
  const FeatureImage* base = train.images.data();
  const std::size_t k = pca.components;
  const std::size_t classes = m.class_count;
  const double lambda = config.lambda;

  const SampleStep step = [&, base](const FeatureImage& img, std::size_t label,
                                    std::vector<Tensor>& grads) {
    const auto& z = features[static_cast<std::size_t>(&img - base)];
    const auto margins = nn::dense_forward(z, m.params[3], m.params[4]);
    double loss = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double y = c == label ? 1.0 : -1.0;
      const double slack = 1.0 - y * margins[c];
      double wnorm = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double w = m.params[3].at(j, c);
        wnorm += w * w;
        grads[3].at(j, c) += lambda * w;
      }
      loss += 0.5 * lambda * wnorm;
      if (slack > 0.0) {
        loss += slack;
        for (std::size_t j = 0; j < k; ++j) grads[3].at(j, c) -= y * z[j];
        grads[4][c] -= y;
      }
    }
    return std::pair{loss, argmax(margins)};
  };
  run_sgd(m, {3, 4}, train, config.train, step, m.log.iterations, &m.log.epoch_accuracy, monitor,
          kOrderStream);
  return m;
}

// ---- inference ----------------------------------------------------------------

std::vector<double> cnn_logits(const TrainedModel& model, const FeatureImage& image) {
  if (model.kind != ModelKind::CNN) throw std::invalid_argument("cnn_logits needs a CNN model");
  check_image(model, image);
  return cnn_forward(model, image).logits;
}

Prediction predict(const TrainedModel& model, const FeatureImage& image) {
  check_image(model, image);
  std::vector<double> scores;
  switch (model.kind) {
    case ModelKind::CNN:
      scores = cnn_forward(model, image).logits;
      break;
    case ModelKind::TMLP:
      scores = mlp_forward(model, image.pixels, 0, 3).back();
      break;
    case ModelKind::PCA_SVM:
      scores = nn::dense_forward(svm_features(model, image.pixels), model.params[3],
                                 model.params[4]);
      break;
    case ModelKind::Autoencoder:
      scores = nn::dense_forward(encode(model, image.pixels), model.params[4], model.params[5]);
      break;
  }
  Prediction p;
  p.label = argmax(scores);
  p.probabilities = nn::softmax(scores);
  return p;
}

double accuracy(const TrainedModel& model, const ImageSet& set) {
  if (set.images.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (predict(model, set.images[i]).label == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

// ---- persistence ----------------------------------------------------------

void save_model(const TrainedModel& model, const std::filesystem::path& path,
                const nlohmann::json& extra) {
  nlohmann::json meta = {{"format", "emte-model"},
                         {"version", 1},
                         {"kind", kind_key(model.kind)},
                         {"input_case", preprocess::case_key(model.input_case)},
                         {"input_shape", model.input_shape},
                         {"class_count", model.class_count},
                         {"arch", model.arch},
                         {"hyper", model.hyper},
                         {"epochs_completed", model.log.epoch_accuracy.size()}};
  if (!extra.is_null()) meta["extra"] = extra;
  write_checkpoint(path, meta, model.params);
}

TrainedModel load_model(const std::filesystem::path& path, nlohmann::json* extra) {
  Checkpoint ck = read_checkpoint(path);
  TrainedModel m;
  try {
    if (ck.meta.at("format").get<std::string>() != "emte-model") {
      throw DataError("not a model checkpoint: " + path.string());
    }
    const auto kind = kind_from_key(ck.meta.at("kind").get<std::string>());
    const auto input_case = preprocess::case_from_key(ck.meta.at("input_case").get<std::string>());
    if (!kind || !input_case) throw DataError("checkpoint has unknown model kind or case");
    m.kind = *kind;
    m.input_case = *input_case;
    m.input_shape = ck.meta.at("input_shape").get<std::array<std::size_t, 3>>();
    m.class_count = ck.meta.at("class_count").get<std::size_t>();
    m.arch = ck.meta.at("arch");
    m.hyper = ck.meta.at("hyper");
    train_config_from(m.hyper);
    if (extra) *extra = ck.meta.value("extra", nlohmann::json{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint metadata: " + std::string(e.what()));
  }
  const std::size_t expected = m.kind == ModelKind::CNN ? 4 : m.kind == ModelKind::PCA_SVM ? 5 : 6;
  if (ck.tensors.size() != expected) throw DataError("checkpoint has the wrong tensor count");
  m.params = std::move(ck.tensors);
  return m;
}

void write_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "iteration,epoch,loss,train_acc\n";
  char buf[128];
  for (const auto& e : log.iterations) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.6f\n", e.iteration, e.epoch, e.loss,
                  e.train_accuracy);
    out << buf;
  }
  if (!out) throw DataError("failed writing log " + path.string());
}

}  // namespace emte::models

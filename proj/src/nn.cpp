#include "emte/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace emte::nn {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + " must have rank " +
                                std::to_string(rank) + ", got " +
                                shape_string(t.shape()));
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& filters, const Tensor& biases) {
  require_rank(input, 3, "conv input");
  require_rank(filters, 4, "conv filters");
  const std::size_t out_maps = filters.dim(0);
  const std::size_t in_maps = filters.dim(1);
  const std::size_t fh = filters.dim(2);
  const std::size_t fw = filters.dim(3);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  if (input.dim(0) != in_maps) {
    throw std::invalid_argument("conv input has " + std::to_string(input.dim(0)) +
                                " maps, filters expect " + std::to_string(in_maps));
  }
  if (fh > h || fw > w) {
    throw std::invalid_argument("conv filter " + std::to_string(fh) + "x" +
                                std::to_string(fw) + " larger than input " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  if (biases.size() != out_maps) {
    throw std::invalid_argument("conv bias count does not match filter count");
  }
  const std::size_t oh = h - fh + 1;
  const std::size_t ow = w - fw + 1;
  Tensor out({out_maps, oh, ow});
  const double* in = input.raw();
  const double* k = filters.raw();
  double* o = out.raw();

  for (std::size_t f = 0; f < out_maps; ++f) {
    double* omap = o + f * oh * ow;
    std::fill(omap, omap + oh * ow, biases[f]);
    for (std::size_t c = 0; c < in_maps; ++c) {
      const double* imap = in + c * h * w;
      const double* kern = k + ((f * in_maps + c) * fh) * fw;
      for (std::size_t y = 0; y < oh; ++y) {
        double* orow = omap + y * ow;
        for (std::size_t dy = 0; dy < fh; ++dy) {
          const double* irow = imap + (y + dy) * w;
          for (std::size_t dx = 0; dx < fw; ++dx) {
            const double kv = kern[dy * fw + dx];
            const double* src = irow + dx;
            for (std::size_t x = 0; x < ow; ++x) orow[x] += kv * src[x];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                          bool want_input_grad) {
  require_rank(input, 3, "conv input");
  require_rank(filters, 4, "conv filters");
  require_rank(grad_out, 3, "conv grad_out");
  const std::size_t out_maps = filters.dim(0);
  const std::size_t in_maps = filters.dim(1);
  const std::size_t fh = filters.dim(2);
  const std::size_t fw = filters.dim(3);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  if (input.dim(0) != in_maps || fh > h || fw > w) {
    throw std::invalid_argument("conv backward: input does not match filters");
  }
  const std::size_t oh = h - fh + 1;
  const std::size_t ow = w - fw + 1;
  if (grad_out.dim(0) != out_maps || grad_out.dim(1) != oh || grad_out.dim(2) != ow) {
    throw std::invalid_argument("conv backward: grad_out shape " +
                                shape_string(grad_out.shape()) +
                                " does not match forward output");
  }

  ConvGrads grads;
  grads.filters = Tensor(filters.shape());
  grads.biases = Tensor({out_maps});
  if (want_input_grad) grads.input = Tensor(input.shape());

  const double* in = input.raw();
  const double* k = filters.raw();
  const double* g = grad_out.raw();
  double* gk = grads.filters.raw();

  for (std::size_t f = 0; f < out_maps; ++f) {
    const double* gmap = g + f * oh * ow;
    double bias_sum = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) bias_sum += gmap[i];
    grads.biases[f] = bias_sum;

    for (std::size_t c = 0; c < in_maps; ++c) {
      const double* imap = in + c * h * w;
      const std::size_t kbase = ((f * in_maps + c) * fh) * fw;
      for (std::size_t dy = 0; dy < fh; ++dy) {
        for (std::size_t dx = 0; dx < fw; ++dx) {
          double acc = 0.0;
          for (std::size_t y = 0; y < oh; ++y) {
            const double* grow = gmap + y * ow;
            const double* src = imap + (y + dy) * w + dx;
            for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * src[x];
          }
          gk[kbase + dy * fw + dx] = acc;
        }
      }
      if (!want_input_grad) continue;
      double* gimap = grads.input.raw() + c * h * w;
      for (std::size_t y = 0; y < oh; ++y) {
        const double* grow = gmap + y * ow;
        for (std::size_t dy = 0; dy < fh; ++dy) {
          double* dst_row = gimap + (y + dy) * w;
          for (std::size_t dx = 0; dx < fw; ++dx) {
            const double kv = k[kbase + dy * fw + dx];
            double* dst = dst_row + dx;
            for (std::size_t x = 0; x < ow; ++x) dst[x] += kv * grow[x];
          }
        }
      }
    }
  }
  return grads;
}

PoolResult maxpool_forward(const Tensor& input, std::size_t width) {
  require_rank(input, 3, "pool input");
  if (width == 0) throw std::invalid_argument("pool width must be positive");
  const std::size_t c = input.dim(0);
  const std::size_t h = input.dim(1);
  const std::size_t w = input.dim(2);
  if (w < width) {
    throw std::invalid_argument("pool width " + std::to_string(width) +
                                " exceeds input width " + std::to_string(w));
  }
  const std::size_t ow = w / width;
  PoolResult result{Tensor({c, h, ow}), std::vector<std::size_t>(c * h * ow)};
  const double* in = input.raw();
  double* out = result.output.raw();
  for (std::size_t row = 0; row < c * h; ++row) {
    for (std::size_t x = 0; x < ow; ++x) {
      std::size_t best = row * w + x * width;
      for (std::size_t j = 1; j < width; ++j) {
        const std::size_t idx = row * w + x * width + j;
        if (in[idx] > in[best]) best = idx;
      }
      out[row * ow + x] = in[best];
      result.argmax[row * ow + x] = best;
    }
  }
  return result;
}

Tensor maxpool_backward(std::span<const std::size_t> argmax, const Tensor& grad_out,
                        const std::vector<std::size_t>& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw std::invalid_argument("pool backward: argmax and grad_out sizes differ");
  }
  Tensor grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= grad_in.size()) {
      throw std::invalid_argument("pool backward: argmax index out of range");
    }
    grad_in[argmax[i]] += grad_out[i];
  }
  return grad_in;
}

std::vector<double> dense_forward(std::span<const double> input, const Tensor& weights,
                                  const Tensor& biases) {
  require_rank(weights, 2, "dense weights");
  const std::size_t in = weights.dim(0);
  const std::size_t out = weights.dim(1);
  if (input.size() != in || biases.size() != out) {
    throw std::invalid_argument("dense input size " + std::to_string(input.size()) +
                                " does not match weights " + shape_string(weights.shape()));
  }
  std::vector<double> logits(biases.data().begin(), biases.data().end());
  const double* wt = weights.raw();
  for (std::size_t i = 0; i < in; ++i) {
    const double zi = input[i];
    if (zi == 0.0) continue;
    const double* row = wt + i * out;
    for (std::size_t j = 0; j < out; ++j) logits[j] += zi * row[j];
  }
  return logits;
}

DenseGrads zero_grads(const DenseLayerParams& params) {
  return DenseGrads{{}, Tensor(params.weights.shape()), Tensor(params.biases.shape())};
}

std::vector<double> dense_backward(std::span<const double> input, const Tensor& weights,
                                   std::span<const double> grad_out, Tensor& grad_weights,
                                   Tensor& grad_biases, bool want_input_grad) {
  require_rank(weights, 2, "dense weights");
  const std::size_t in = weights.dim(0);
  const std::size_t out = weights.dim(1);
  if (input.size() != in || grad_out.size() != out ||
      grad_weights.shape() != weights.shape() || grad_biases.size() != out) {
    throw std::invalid_argument("dense backward: shape mismatch");
  }
  const double* wt = weights.raw();
  double* gw = grad_weights.raw();
  for (std::size_t j = 0; j < out; ++j) grad_biases[j] += grad_out[j];
  std::vector<double> grad_in;
  if (want_input_grad) grad_in.assign(in, 0.0);
  for (std::size_t i = 0; i < in; ++i) {
    const double zi = input[i];
    double* grow = gw + i * out;
    if (zi != 0.0) {
      for (std::size_t j = 0; j < out; ++j) grow[j] += zi * grad_out[j];
    }
    if (want_input_grad) {
      const double* row = wt + i * out;
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) acc += row[j] * grad_out[j];
      grad_in[i] = acc;
    }
  }
  return grad_in;
}

void relu_inplace(std::span<double> values) {
  for (double& v : values) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(std::span<const double> activation, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
  }
}

void sigmoid_inplace(std::span<double> values) {
  for (double& v : values) v = 1.0 / (1.0 + std::exp(-v));
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of empty logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - peak);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

SoftmaxResult softmax_xent(std::span<const double> logits, std::size_t label) {
  if (logits.size() < 2) throw std::invalid_argument("softmax needs at least 2 classes");
  if (label >= logits.size()) throw std::invalid_argument("label out of range");
  SoftmaxResult r;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double log_total = std::log(total);
  r.probabilities.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probabilities[i] = std::exp(logits[i] - peak - log_total);
  }
  r.loss = -(logits[label] - peak - log_total);
  r.grad_logits = r.probabilities;
  r.grad_logits[label] -= 1.0;
  return r;
}

void sgd_momentum_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                       OptimizerState& state) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("optimizer: parameter and gradient counts differ");
  }
  if (!(state.learning_rate > 0.0) || state.momentum < 0.0 || state.momentum >= 1.0) {
    throw std::invalid_argument("optimizer: learning rate must be > 0, momentum in [0,1)");
  }
  if (state.velocity.empty()) {
    for (const Tensor& p : params) state.velocity.emplace_back(p.shape());
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].shape() != params[t].shape() ||
        state.velocity[t].shape() != params[t].shape()) {
      throw std::invalid_argument("optimizer: shape mismatch for parameter " +
                                  std::to_string(t));
    }
    double* p = params[t].raw();
    double* v = state.velocity[t].raw();
    const double* g = grads[t].raw();
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      v[i] = state.momentum * v[i] - state.learning_rate * g[i];
      p[i] += v[i];
    }
  }
}

std::vector<Tensor> init_params(std::span<const ParamSpec> specs, Rng& rng,
                                double stddev) {
  std::vector<Tensor> out;
  out.reserve(specs.size());
  for (const ParamSpec& spec : specs) {
    Tensor t(spec.shape);
    if (!spec.is_bias) {
      for (double& v : t.data()) v = rng.normal(0.0, stddev);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace emte::nn

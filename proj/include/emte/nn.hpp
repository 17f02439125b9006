#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emte/rng.hpp"
#include "emte/tensor.hpp"

namespace emte::nn {

// Convolution: filters [out_maps x in_maps x fh x fw], biases [out_maps].
// Stride is fixed at 1x1.
struct ConvLayerParams {
  Tensor filters;
  Tensor biases;
};

struct ConvGrads {
  Tensor input;  // left empty when not requested
  Tensor filters;
  Tensor biases;
};

/// Valid-region cross-correlation plus one scalar bias per output map.
/// input [in_maps x H x W] -> [out_maps x (H-fh+1) x (W-fw+1)].
Tensor conv2d_forward(const Tensor& input, const Tensor& filters, const Tensor& biases);

ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                          bool want_input_grad = true);

inline Tensor conv2d_forward(const Tensor& input, const ConvLayerParams& params) {
  return conv2d_forward(input, params.filters, params.biases);
}
inline ConvGrads conv2d_backward(const Tensor& input, const ConvLayerParams& params,
                                 const Tensor& grad_out, bool want_input_grad = true) {
  return conv2d_backward(input, params.filters, grad_out, want_input_grad);
}

// 1 x width max pooling over the last axis of a [C x H x W] tensor.
struct PoolResult {
  Tensor output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping windows; ties go to the leftmost element and a trailing
/// partial window is dropped.
PoolResult maxpool_forward(const Tensor& input, std::size_t width = 2);

Tensor maxpool_backward(std::span<const std::size_t> argmax,
                        const Tensor& grad_out,
                        const std::vector<std::size_t>& input_shape);

// Fully connected: weights [in x out], biases [out].
struct DenseLayerParams {
  Tensor weights;
  Tensor biases;
};

struct DenseGrads {
  std::vector<double> input;
  Tensor weights;
  Tensor biases;
};

/// logits = z^T W + b
std::vector<double> dense_forward(std::span<const double> input, const Tensor& weights,
                                  const Tensor& biases);

/// Accumulates weight and bias gradients into `grad_weights` / `grad_biases`
/// (already shaped like the parameters) and returns the input gradient when
/// requested (empty otherwise).
std::vector<double> dense_backward(std::span<const double> input, const Tensor& weights,
                                   std::span<const double> grad_out, Tensor& grad_weights,
                                   Tensor& grad_biases, bool want_input_grad = true);

inline std::vector<double> dense_forward(std::span<const double> input,
                                         const DenseLayerParams& params) {
  return dense_forward(input, params.weights, params.biases);
}
inline std::vector<double> dense_backward(std::span<const double> input,
                                          const DenseLayerParams& params,
                                          std::span<const double> grad_out, DenseGrads& grads,
                                          bool want_input_grad = true) {
  return dense_backward(input, params.weights, grad_out, grads.weights, grads.biases,
                        want_input_grad);
}

DenseGrads zero_grads(const DenseLayerParams& params);

void relu_inplace(std::span<double> values);
/// Zeroes gradient entries whose forward activation was not positive.
void relu_backward_inplace(std::span<const double> activation,
                           std::span<double> grad);

void sigmoid_inplace(std::span<double> values);

struct SoftmaxResult {
  std::vector<double> probabilities;
  double loss = 0.0;
  std::vector<double> grad_logits;
};

std::vector<double> softmax(std::span<const double> logits);

/// Softmax probabilities, -ln p[label], and p - onehot(label).
SoftmaxResult softmax_xent(std::span<const double> logits, std::size_t label);

struct OptimizerState {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  std::vector<Tensor> velocity;
};

/// Classical momentum: v <- mu*v - lr*g; theta <- theta + v.
/// Velocity is zero-initialized on the first call.
void sgd_momentum_step(std::vector<Tensor>& params,
                       const std::vector<Tensor>& grads, OptimizerState& state);

// Declares one parameter tensor for initialization.
struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;
  bool is_bias = false;
};

inline constexpr double kInitStddev = 0.01;

/// Weights ~ N(0, stddev^2), biases exactly zero, drawn in declaration order.
std::vector<Tensor> init_params(std::span<const ParamSpec> specs, Rng& rng,
                                double stddev = kInitStddev);

}  // namespace emte::nn

#pragma once

#include <functional>
#include <span>

#include "emte/tensor.hpp"

namespace emte::nn {

/// Central finite-difference gradient of a scalar function, one element of
/// `x` perturbed at a time.
Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double step = 1e-6);

/// ||a - b|| / max(||a||, ||b||); 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace emte::nn

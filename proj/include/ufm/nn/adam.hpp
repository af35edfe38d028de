#pragma once

#include "ufm/nn/tensor.hpp"

namespace ufm::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update applied in place to every parameter, in name
// order. Increments the step counter and zeroes the gradients afterwards.
// Throws ValidationError naming the first parameter without a gradient.
void adam_step(ParamStore& store, const AdamConfig& cfg);

}  // namespace ufm::nn

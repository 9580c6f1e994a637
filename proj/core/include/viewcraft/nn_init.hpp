#pragma once

#include <torch/nn/module.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Re-initializes every conv / linear / norm layer below `module` from `rng`
/// using torch's default schemes (uniform +-1/sqrt(fan_in) for weights and
/// biases, unit scale and zero shift for normalization layers). Construction
/// through this function is deterministic in the seed and independent of
/// torch's global generator.
void init_parameters(torch::nn::Module& module, Rng& rng);

/// Total number of scalar parameters.
int64_t parameter_count(const torch::nn::Module& module);

}  // namespace viewcraft

#include "viewcraft/nn_init.hpp"

#include <cmath>

#include <torch/torch.h>

namespace viewcraft {

namespace {

void init_weight_bias(torch::Tensor& weight, torch::Tensor& bias, Rng& rng) {
  const int64_t fan_in = weight.numel() / weight.size(0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight.uniform_(-bound, bound, rng.generator());
  if (bias.defined()) {
    bias.uniform_(-bound, bound, rng.generator());
  }
}

}  // namespace

void init_parameters(torch::nn::Module& module, Rng& rng) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/true)) {
    if (auto* conv = child->as<torch::nn::Conv2d>()) {
      init_weight_bias(conv->weight, conv->bias, rng);
    } else if (auto* linear = child->as<torch::nn::Linear>()) {
      init_weight_bias(linear->weight, linear->bias, rng);
    } else if (auto* bn = child->as<torch::nn::BatchNorm2d>()) {
      if (bn->weight.defined()) bn->weight.fill_(1.0);
      if (bn->bias.defined()) bn->bias.zero_();
    } else if (auto* in = child->as<torch::nn::InstanceNorm2d>()) {
      if (in->weight.defined()) in->weight.fill_(1.0);
      if (in->bias.defined()) in->bias.zero_();
    }
  }
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) {
    n += p.numel();
  }
  return n;
}

}  // namespace viewcraft

#include "viewcraft/normalization.hpp"

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

namespace {

torch::Tensor broadcastable(const torch::Tensor& v, const torch::Tensor& x) {
  if (x.dim() == 3) return v.view({-1, 1, 1}).to(x.scalar_type());
  if (x.dim() == 4) return v.view({1, -1, 1, 1}).to(x.scalar_type());
  throw ShapeMismatch("normalization expects C x H x W or B x C x H x W");
}

void check_channels(const torch::Tensor& x, const NormStats& stats) {
  const int64_t c = x.dim() == 4 ? x.size(1) : x.size(0);
  if (c != stats.channels()) {
    throw ShapeMismatch("normalization stats have " + std::to_string(stats.channels()) +
                        " channels, input has " + std::to_string(c));
  }
}

}  // namespace

NormStats compute_norm_stats(const torch::Tensor& split) {
  if (split.dim() != 4) {
    throw ShapeMismatch("compute_norm_stats expects N x C x H x W");
  }
  if (split.size(0) == 0 || split.numel() == 0) {
    throw EmptyInput("cannot compute normalization statistics of an empty split");
  }
  auto x = split.to(torch::kFloat64);
  auto mean = x.mean({0, 2, 3});
  auto std = x.var({0, 2, 3}, /*unbiased=*/false).sqrt();
  if ((std <= 1e-12).any().item<bool>()) {
    throw ZeroVariance("a channel of the training split is constant");
  }
  return {mean.to(torch::kFloat32), std.to(torch::kFloat32)};
}

torch::Tensor normalize(const torch::Tensor& x, const NormStats& stats) {
  check_channels(x, stats);
  return (x - broadcastable(stats.mean, x)) / broadcastable(stats.std, x);
}

torch::Tensor denormalize(const torch::Tensor& x, const NormStats& stats) {
  check_channels(x, stats);
  return x * broadcastable(stats.std, x) + broadcastable(stats.mean, x);
}

}  // namespace viewcraft

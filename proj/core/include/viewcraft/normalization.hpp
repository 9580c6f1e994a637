#pragma once

#include <torch/types.h>

namespace viewcraft {

/// Per-channel standardization statistics computed on a training split.
struct NormStats {
  torch::Tensor mean;  // C
  torch::Tensor std;   // C, strictly positive

  int64_t channels() const { return mean.defined() ? mean.size(0) : 0; }
};

/// Mean / population std per channel of an N x C x H x W split.
/// Throws EmptyInput for an empty split and ZeroVariance for a constant channel.
NormStats compute_norm_stats(const torch::Tensor& split);

/// (x - mean) / std, broadcast over a C x H x W example or B x C x H x W batch.
torch::Tensor normalize(const torch::Tensor& x, const NormStats& stats);
torch::Tensor denormalize(const torch::Tensor& x, const NormStats& stats);

}  // namespace viewcraft

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Synthetic corruption families for CPU-sized robustness checks.
enum class CorruptionKind { kIdentity, kGaussianNoise, kGaussianBlur, kContrast };

std::string to_string(CorruptionKind k);
CorruptionKind parse_corruption(std::string_view s);

struct Corruption {
  CorruptionKind kind = CorruptionKind::kIdentity;
  /// 1..5; ignored for identity.
  int severity = 1;

  std::string name() const;
};

/// Corrupts a B x C x H x W batch of pixels in [0, 1]; the identity returns
/// its input unchanged. Throws ConfigInvalid for severities outside 1..5.
torch::Tensor apply_corruption(const torch::Tensor& images, const Corruption& corruption, Rng& rng);

/// Noise, blur and contrast at every severity.
std::vector<Corruption> standard_corruptions();

}  // namespace viewcraft

#include "viewcraft/corruptions.hpp"

#include <torch/torch.h>

#include "viewcraft/augment.hpp"
#include "viewcraft/errors.hpp"

namespace viewcraft {

namespace {

// Severity tables follow the CIFAR-10-C generator.
constexpr double kNoiseStd[5] = {0.04, 0.06, 0.08, 0.09, 0.10};
constexpr double kBlurSigma[5] = {0.4, 0.6, 0.7, 0.8, 1.0};
constexpr double kContrast[5] = {0.75, 0.5, 0.4, 0.3, 0.15};

}  // namespace

std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kIdentity:
      return "identity";
    case CorruptionKind::kGaussianNoise:
      return "gaussian_noise";
    case CorruptionKind::kGaussianBlur:
      return "gaussian_blur";
    case CorruptionKind::kContrast:
      return "contrast";
  }
  return "identity";
}

CorruptionKind parse_corruption(std::string_view s) {
  if (s == "identity") return CorruptionKind::kIdentity;
  if (s == "gaussian_noise" || s == "noise") return CorruptionKind::kGaussianNoise;
  if (s == "gaussian_blur" || s == "blur") return CorruptionKind::kGaussianBlur;
  if (s == "contrast") return CorruptionKind::kContrast;
  throw ConfigInvalid("unknown corruption '" + std::string(s) + "'");
}

std::string Corruption::name() const {
  if (kind == CorruptionKind::kIdentity) return "identity";
  return to_string(kind) + "-" + std::to_string(severity);
}

torch::Tensor apply_corruption(const torch::Tensor& images, const Corruption& c, Rng& rng) {
  if (c.kind == CorruptionKind::kIdentity) return images;
  if (c.severity < 1 || c.severity > 5) {
    throw ConfigInvalid("corruption severity must lie in 1..5");
  }
  if (images.dim() != 4) {
    throw ShapeMismatch("corruptions expect a B x C x H x W batch");
  }
  const int s = c.severity - 1;
  switch (c.kind) {
    case CorruptionKind::kGaussianNoise:
      return (images + kNoiseStd[s] * rng.randn(images.sizes(), images.scalar_type()))
          .clamp(0.0, 1.0);
    case CorruptionKind::kGaussianBlur: {
      const int64_t kernel = 2 * static_cast<int64_t>(std::ceil(3.0 * kBlurSigma[s])) + 1;
      std::vector<torch::Tensor> out;
      for (int64_t i = 0; i < images.size(0); ++i) {
        out.push_back(image_ops::gaussian_blur(images[i], kernel, kBlurSigma[s]));
      }
      return torch::stack(out).clamp(0.0, 1.0);
    }
    case CorruptionKind::kContrast: {
      auto mean = images.mean({1, 2, 3}, /*keepdim=*/true);
      return ((images - mean) * kContrast[s] + mean).clamp(0.0, 1.0);
    }
    case CorruptionKind::kIdentity:
      break;
  }
  return images;
}

std::vector<Corruption> standard_corruptions() {
  std::vector<Corruption> out;
  for (auto k : {CorruptionKind::kGaussianNoise, CorruptionKind::kGaussianBlur,
                 CorruptionKind::kContrast}) {
    for (int s = 1; s <= 5; ++s) out.push_back({k, s});
  }
  return out;
}

}  // namespace viewcraft

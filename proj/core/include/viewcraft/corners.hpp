#pragma once

#include <functional>

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Picks the donor image for quadrant `quadrant` (0 = top-left, 1 = top-right,
/// 2 = bottom-left, 3 = bottom-right) of output image `image`, out of `n`.
using DonorSampler = std::function<int64_t(int64_t image, int quadrant, int64_t n, Rng& rng)>;

/// Uniform over every image except `image` itself.
DonorSampler other_image_sampler();
/// Always returns `image` (the degenerate identity construction).
DonorSampler self_sampler();

struct CornersDataset {
  torch::Tensor images;  // N x C x H x W
  torch::Tensor donors;  // N x 4 int64, donor index per quadrant
};

inline constexpr int64_t kMinCornersImages = 5;

/// Replaces each of the four quadrants of every image with the same-position
/// quadrant of a donor image (independently sampled per quadrant). On 32 x 32
/// inputs the quadrants are 16 x 16 and tile the whole image.
/// Throws DatasetTooSmall (< 5 images) and ShapeMismatch (odd sides).
CornersDataset make_corners_dataset(const torch::Tensor& images, Rng& rng,
                                    const DonorSampler& sampler = other_image_sampler());

struct CornersAudit {
  int64_t quadrants = 0;
  /// Quadrants bit-identical to the same-position quadrant of some source.
  int64_t traced = 0;
  /// Quadrants bit-identical to the quadrant of the image at the same index.
  int64_t traced_to_original = 0;
};

/// Provenance check of a derived set against its sources (same ordering).
CornersAudit audit_corners(const torch::Tensor& derived, const torch::Tensor& sources);

}  // namespace viewcraft

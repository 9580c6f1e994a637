#pragma once

#include <filesystem>

#include <torch/types.h>

namespace viewcraft {

/// Reads a binary PPM (P6, 3 channels) or PGM (P5, 1 channel) with maxval
/// 255 into a C x H x W float32 tensor in [0, 1]. Throws IOFailure.
torch::Tensor read_pnm(const std::filesystem::path& path);

/// Writes a 1- or 3-channel C x H x W image (float in [0, 1] or uint8) as
/// P5 / P6. Float values are rounded to the nearest of 256 levels.
void write_pnm(const std::filesystem::path& path, const torch::Tensor& image);

/// C x H x W float in [0, 1] -> uint8, round to nearest.
torch::Tensor to_uint8(const torch::Tensor& image);

struct LabeledImages {
  torch::Tensor images;  // N x 3 x 32 x 32 float32 in [0, 1]
  torch::Tensor labels;  // N int64
};

/// CIFAR-10 binary batch file: records of 1 label byte + 3072 pixel bytes.
/// Reads at most `limit` records (all when limit < 0).
LabeledImages read_cifar10_batch(const std::filesystem::path& path, int64_t limit = -1);

}  // namespace viewcraft

#pragma once

#include <cstdint>
#include <vector>

#include <torch/types.h>

namespace viewcraft::cli {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

inline constexpr Rgb kCenterBorder{255, 105, 180};
inline constexpr Rgb kTileBorder{48, 48, 48};
inline constexpr int64_t kBorder = 2;
/// Endpoints of the signed difference color scale.
inline constexpr double kDiffRange = 2.5;

/// C x H x W image in [0, 1] -> 3 x H x W uint8 (single channels are gray).
torch::Tensor image_tile(const torch::Tensor& image);

/// H x W values, min-max scaled to gray.
torch::Tensor spectrogram_tile(const torch::Tensor& values);

/// H x W signed differences: -range is red, 0 white, +range blue.
torch::Tensor diff_tile(const torch::Tensor& diff, double range = kDiffRange);

/// 3 x 3 grid of equally sized 3 x h x w uint8 tiles (row-major, center is
/// index 4), each framed by kBorder pixels; the center frame uses
/// `center`, the others `frame`.
torch::Tensor compose_grid(const std::vector<torch::Tensor>& tiles, Rgb center = kCenterBorder,
                           Rgb frame = kTileBorder);

/// Interior of tile (row, col) of a grid built from h x w tiles.
torch::Tensor grid_tile(const torch::Tensor& grid, int64_t row, int64_t col, int64_t h, int64_t w);

}  // namespace viewcraft::cli

#include "viewcraft/render.hpp"

#include <torch/torch.h>

#include "viewcraft/errors.hpp"
#include "viewcraft/image_io.hpp"

namespace viewcraft::cli {

torch::Tensor image_tile(const torch::Tensor& image) {
  auto t = to_uint8(image.detach().cpu());
  if (t.size(0) == 1) t = t.expand({3, t.size(1), t.size(2)});
  if (t.size(0) != 3) {
    throw ShapeMismatch("image tiles need 1 or 3 channels");
  }
  return t.contiguous();
}

torch::Tensor spectrogram_tile(const torch::Tensor& values) {
  auto v = values.detach().cpu().to(torch::kFloat32);
  const auto lo = v.min(), hi = v.max();
  auto scaled = (v - lo) / (hi - lo).clamp_min(1e-12);
  return image_tile(scaled.unsqueeze(0));
}

torch::Tensor diff_tile(const torch::Tensor& diff, double range) {
  auto v = (diff.detach().cpu().to(torch::kFloat32) / range).clamp(-1.0, 1.0);
  auto neg = (-v).clamp_min(0.0);
  auto pos = v.clamp_min(0.0);
  // Negative: white -> red. Positive: white -> blue.
  auto r = 1.0 - pos;
  auto g = 1.0 - neg - pos;
  auto b = 1.0 - neg;
  return to_uint8(torch::stack({r, g, b}));
}

torch::Tensor compose_grid(const std::vector<torch::Tensor>& tiles, Rgb center, Rgb frame) {
  if (tiles.size() != 9) {
    throw ShapeMismatch("a view grid needs exactly 9 tiles");
  }
  const int64_t h = tiles[0].size(1), w = tiles[0].size(2);
  const int64_t th = h + 2 * kBorder, tw = w + 2 * kBorder;
  auto grid = torch::empty({3, 3 * th, 3 * tw}, torch::kUInt8);
  for (int64_t i = 0; i < 9; ++i) {
    const auto& t = tiles[i];
    if (t.sizes() != tiles[0].sizes() || t.scalar_type() != torch::kUInt8) {
      throw ShapeMismatch("grid tiles must share one 3 x h x w uint8 shape");
    }
    const Rgb c = i == 4 ? center : frame;
    auto cell = grid.narrow(1, (i / 3) * th, th).narrow(2, (i % 3) * tw, tw);
    cell[0].fill_(c.r);
    cell[1].fill_(c.g);
    cell[2].fill_(c.b);
    cell.narrow(1, kBorder, h).narrow(2, kBorder, w).copy_(t);
  }
  return grid;
}

torch::Tensor grid_tile(const torch::Tensor& grid, int64_t row, int64_t col, int64_t h, int64_t w) {
  const int64_t th = h + 2 * kBorder, tw = w + 2 * kBorder;
  return grid.narrow(1, row * th + kBorder, h).narrow(2, col * tw + kBorder, w);
}

}  // namespace viewcraft::cli

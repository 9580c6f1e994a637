#include "viewcraft/corners.hpp"

#include <string>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

namespace {

void check_images(const torch::Tensor& images) {
  if (images.dim() != 4) {
    throw ShapeMismatch("corners construction expects N x C x H x W images");
  }
  if (images.size(2) % 2 != 0 || images.size(3) % 2 != 0) {
    throw ShapeMismatch("image sides must be even to split into quadrants");
  }
}

torch::Tensor quadrant(const torch::Tensor& image, int q) {
  const int64_t h = image.size(-2) / 2, w = image.size(-1) / 2;
  return image.narrow(-2, (q / 2) * h, h).narrow(-1, (q % 2) * w, w);
}

std::string bytes_of(const torch::Tensor& t) {
  auto c = t.contiguous();
  return std::string(static_cast<const char*>(c.data_ptr()), c.numel() * c.element_size());
}

}  // namespace

DonorSampler other_image_sampler() {
  return [](int64_t image, int, int64_t n, Rng& rng) {
    const int64_t k = rng.randint(0, n - 2);
    return k >= image ? k + 1 : k;
  };
}

DonorSampler self_sampler() {
  return [](int64_t image, int, int64_t, Rng&) { return image; };
}

CornersDataset make_corners_dataset(const torch::Tensor& images, Rng& rng,
                                    const DonorSampler& sampler) {
  check_images(images);
  const int64_t n = images.size(0);
  if (n < kMinCornersImages) {
    throw DatasetTooSmall("corners construction needs at least " +
                          std::to_string(kMinCornersImages) + " images, got " + std::to_string(n));
  }
  auto out = torch::empty_like(images);
  auto donors = torch::empty({n, 4}, torch::kInt64);
  auto d = donors.accessor<int64_t, 2>();
  for (int64_t i = 0; i < n; ++i) {
    for (int q = 0; q < 4; ++q) {
      const int64_t donor = sampler(i, q, n, rng);
      if (donor < 0 || donor >= n) {
        throw IndexOutOfRange("donor sampler returned " + std::to_string(donor));
      }
      d[i][q] = donor;
      quadrant(out[i], q).copy_(quadrant(images[donor], q));
    }
  }
  return {out, donors};
}

CornersAudit audit_corners(const torch::Tensor& derived, const torch::Tensor& sources) {
  check_images(derived);
  check_images(sources);
  if (derived.sizes().slice(1) != sources.sizes().slice(1) ||
      derived.scalar_type() != sources.scalar_type()) {
    throw ShapeMismatch("derived and source images differ in shape or dtype");
  }
  // Per quadrant position: content -> source indices carrying it.
  std::unordered_map<std::string, std::vector<int64_t>> index[4];
  for (int64_t s = 0; s < sources.size(0); ++s) {
    for (int q = 0; q < 4; ++q) {
      index[q][bytes_of(quadrant(sources[s], q))].push_back(s);
    }
  }
  CornersAudit audit;
  for (int64_t i = 0; i < derived.size(0); ++i) {
    for (int q = 0; q < 4; ++q) {
      ++audit.quadrants;
      auto it = index[q].find(bytes_of(quadrant(derived[i], q)));
      if (it == index[q].end()) continue;
      ++audit.traced;
      for (int64_t s : it->second) {
        if (s == i) {
          ++audit.traced_to_original;
          break;
        }
      }
    }
  }
  return audit;
}

}  // namespace viewcraft

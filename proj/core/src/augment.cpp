#include "viewcraft/augment.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigInvalid(std::string(name) + " must lie in [0, 1]");
  }
}

void check_scale(std::pair<double, double> s, const char* name) {
  if (!(s.first > 0.0 && s.first <= s.second && s.second <= 1.0)) {
    throw ConfigInvalid(std::string(name) + " must satisfy 0 < lo <= hi <= 1");
  }
}

}  // namespace

ImageExpertPolicy ImageExpertPolicy::simclr() { return {}; }

ImageExpertPolicy ImageExpertPolicy::crop_flip() {
  ImageExpertPolicy p;
  p.jitter_prob = 0.0;
  p.grayscale_prob = 0.0;
  p.blur_prob = 0.0;
  return p;
}

ImageExpertPolicy ImageExpertPolicy::identity() {
  ImageExpertPolicy p = crop_flip();
  p.crop_scale = {1.0, 1.0};
  p.flip_prob = 0.0;
  return p;
}

void ImageExpertPolicy::validate() const {
  check_scale(crop_scale, "expert.image.crop_scale");
  if (!(crop_ratio.first > 0.0 && crop_ratio.first <= crop_ratio.second)) {
    throw ConfigInvalid("expert.image.crop_ratio must satisfy 0 < lo <= hi");
  }
  check_probability(flip_prob, "expert.image.flip_prob");
  check_probability(jitter_prob, "expert.image.jitter_prob");
  check_probability(grayscale_prob, "expert.image.grayscale_prob");
  check_probability(blur_prob, "expert.image.blur_prob");
  if (brightness < 0 || contrast < 0 || saturation < 0 || hue < 0 || hue > 0.5) {
    throw ConfigInvalid("expert.image jitter strengths must be >= 0 (hue <= 0.5)");
  }
  if (blur_kernel < 1 || blur_kernel % 2 == 0) {
    throw ConfigInvalid("expert.image.blur_kernel must be a positive odd number");
  }
}

void SpectralMaskPolicy::validate() const {
  if (mask_factor < 0) throw ConfigInvalid("expert.spectral.mask_factor must be >= 0");
  if (noise_std < 0) throw ConfigInvalid("expert.spectral.noise_std must be >= 0");
}

void WaveformPolicy::validate() const {
  check_scale(crop_scale, "expert.waveform.crop_scale");
  if (noise_scale < 0) throw ConfigInvalid("expert.waveform.noise_scale must be >= 0");
}

namespace image_ops {

CropBox sample_resized_crop(int64_t height, int64_t width, std::pair<double, double> scale,
                            std::pair<double, double> ratio, Rng& rng) {
  const double area = static_cast<double>(height * width);
  const double log_lo = std::log(ratio.first);
  const double log_hi = std::log(ratio.second);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(scale.first, scale.second);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<int64_t>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<int64_t>(std::lround(std::sqrt(target / aspect)));
    if (w > 0 && w <= width && h > 0 && h <= height) {
      return {rng.randint(0, height - h), rng.randint(0, width - w), h, w};
    }
  }
  // Fallback: central crop at the closest admissible aspect ratio.
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  int64_t w = width, h = height;
  if (in_ratio < ratio.first) {
    h = static_cast<int64_t>(std::lround(w / ratio.first));
  } else if (in_ratio > ratio.second) {
    w = static_cast<int64_t>(std::lround(h * ratio.second));
  }
  return {(height - h) / 2, (width - w) / 2, h, w};
}

torch::Tensor resized_crop(const torch::Tensor& image, const CropBox& box, int64_t out_h,
                           int64_t out_w) {
  namespace F = torch::nn::functional;
  auto crop = image.narrow(1, box.top, box.height).narrow(2, box.left, box.width);
  if (box.height == out_h && box.width == out_w) {
    return crop.clone();
  }
  return F::interpolate(crop.unsqueeze(0), F::InterpolateFuncOptions()
                                               .size(std::vector<int64_t>{out_h, out_w})
                                               .mode(torch::kBilinear)
                                               .align_corners(false))
      .squeeze(0);
}

torch::Tensor rgb_to_grayscale(const torch::Tensor& image) {
  auto gray = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2];
  return gray.unsqueeze(0);
}

torch::Tensor adjust_brightness(const torch::Tensor& image, double factor) {
  return (image * factor).clamp(0.0, 1.0);
}

torch::Tensor adjust_contrast(const torch::Tensor& image, double factor) {
  auto mean = rgb_to_grayscale(image).mean();
  return (factor * image + (1.0 - factor) * mean).clamp(0.0, 1.0);
}

torch::Tensor adjust_saturation(const torch::Tensor& image, double factor) {
  auto gray = rgb_to_grayscale(image);
  return (factor * image + (1.0 - factor) * gray).clamp(0.0, 1.0);
}

torch::Tensor rgb_to_hsv(const torch::Tensor& image) {
  auto r = image[0], g = image[1], b = image[2];
  auto maxc = torch::max(torch::max(r, g), b);
  auto minc = torch::min(torch::min(r, g), b);
  auto flat = maxc == minc;
  auto chroma = maxc - minc;
  auto ones = torch::ones_like(maxc);
  auto s = chroma / torch::where(flat, ones, maxc);
  auto divisor = torch::where(flat, ones, chroma);
  auto rc = (maxc - r) / divisor;
  auto gc = (maxc - g) / divisor;
  auto bc = (maxc - b) / divisor;
  auto hr = (maxc == r).to(image.scalar_type()) * (bc - gc);
  auto hg = ((maxc == g) & (maxc != r)).to(image.scalar_type()) * (2.0 + rc - bc);
  auto hb = ((maxc != g) & (maxc != r)).to(image.scalar_type()) * (4.0 + gc - rc);
  auto h = torch::fmod((hr + hg + hb) / 6.0 + 1.0, 1.0);
  return torch::stack({h, s, maxc});
}

torch::Tensor hsv_to_rgb(const torch::Tensor& image) {
  auto h = image[0], s = image[1], v = image[2];
  auto i = torch::floor(h * 6.0);
  auto f = h * 6.0 - i;
  auto sector = torch::remainder(i.to(torch::kInt64), 6);
  auto p = (v * (1.0 - s)).clamp(0.0, 1.0);
  auto q = (v * (1.0 - s * f)).clamp(0.0, 1.0);
  auto t = (v * (1.0 - s * (1.0 - f))).clamp(0.0, 1.0);
  auto mask = (sector.unsqueeze(0) == torch::arange(6).view({-1, 1, 1})).to(image.scalar_type());
  auto a1 = torch::stack({v, q, p, p, t, v});
  auto a2 = torch::stack({t, v, v, q, p, p});
  auto a3 = torch::stack({p, p, t, v, v, q});
  auto table = torch::stack({a1, a2, a3});  // 3 x 6 x H x W
  return (table * mask.unsqueeze(0)).sum(1);
}

torch::Tensor adjust_hue(const torch::Tensor& image, double shift) {
  auto hsv = rgb_to_hsv(image);
  auto h = torch::remainder(hsv[0] + shift, 1.0);
  return hsv_to_rgb(torch::stack({h, hsv[1], hsv[2]})).clamp(0.0, 1.0);
}

torch::Tensor gaussian_blur(const torch::Tensor& image, int64_t kernel, double sigma) {
  namespace F = torch::nn::functional;
  const int64_t half = kernel / 2;
  auto x = torch::arange(-half, half + 1, image.options());
  auto weights = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  weights = weights / weights.sum();
  const int64_t c = image.size(0);
  auto horizontal = weights.view({1, 1, 1, kernel}).expand({c, 1, 1, kernel});
  auto vertical = weights.view({1, 1, kernel, 1}).expand({c, 1, kernel, 1});
  auto padded = F::pad(image.unsqueeze(0),
                       F::PadFuncOptions({half, half, half, half}).mode(torch::kReflect));
  auto y = F::conv2d(padded, horizontal, F::Conv2dFuncOptions().groups(c));
  y = F::conv2d(y, vertical, F::Conv2dFuncOptions().groups(c));
  return y.squeeze(0);
}

}  // namespace image_ops

torch::Tensor image_expert_view(const torch::Tensor& image, const ImageExpertPolicy& policy,
                                Rng& rng) {
  using namespace image_ops;
  if (image.dim() != 3 || image.size(0) != 3) {
    throw ShapeMismatch("image expert views expect a 3 x H x W image");
  }
  const int64_t h = image.size(1), w = image.size(2);

  auto box = sample_resized_crop(h, w, policy.crop_scale, policy.crop_ratio, rng);
  auto out = resized_crop(image, box, h, w);

  if (rng.bernoulli(policy.flip_prob)) {
    out = out.flip({2});
  }

  if (rng.bernoulli(policy.jitter_prob)) {
    auto factor = [&](double strength) {
      return rng.uniform(std::max(0.0, 1.0 - strength), 1.0 + strength);
    };
    const double bf = factor(policy.brightness);
    const double cf = factor(policy.contrast);
    const double sf = factor(policy.saturation);
    const double hf = rng.uniform(-policy.hue, policy.hue);
    auto order = rng.randperm(4);
    for (int64_t k = 0; k < 4; ++k) {
      switch (order[k].item<int64_t>()) {
        case 0:
          if (policy.brightness > 0) out = adjust_brightness(out, bf);
          break;
        case 1:
          if (policy.contrast > 0) out = adjust_contrast(out, cf);
          break;
        case 2:
          if (policy.saturation > 0) out = adjust_saturation(out, sf);
          break;
        default:
          if (policy.hue > 0) out = adjust_hue(out, hf);
          break;
      }
    }
  }

  if (rng.bernoulli(policy.grayscale_prob)) {
    out = rgb_to_grayscale(out).expand({3, h, w}).clone();
  }

  if (rng.bernoulli(policy.blur_prob)) {
    out = gaussian_blur(out, policy.blur_kernel,
                        rng.uniform(policy.blur_sigma.first, policy.blur_sigma.second));
  }
  return out.clamp(0.0, 1.0);
}

torch::Tensor image_expert_views(const torch::Tensor& batch, const ImageExpertPolicy& policy,
                                 Rng& rng) {
  if (batch.dim() != 4) {
    throw ShapeMismatch("expected a B x 3 x H x W batch");
  }
  std::vector<torch::Tensor> views;
  views.reserve(batch.size(0));
  for (int64_t i = 0; i < batch.size(0); ++i) {
    views.push_back(image_expert_view(batch[i], policy, rng));
  }
  return torch::stack(views);
}

torch::Tensor waveform_view(const torch::Tensor& waveform, const WaveformPolicy& policy, Rng& rng) {
  if (waveform.dim() != 1 || waveform.size(0) == 0) {
    throw EmptyInput("waveform view needs a nonempty 1-D waveform");
  }
  const int64_t n = waveform.size(0);
  const auto min_len = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(policy.crop_scale.first * n)));
  const auto max_len = std::max<int64_t>(min_len, static_cast<int64_t>(std::floor(policy.crop_scale.second * n)));
  const auto len = std::clamp<int64_t>(
      std::llround(n * rng.uniform(policy.crop_scale.first, policy.crop_scale.second)), min_len,
      max_len);
  const int64_t start = rng.randint(0, n - len);
  auto out = waveform.narrow(0, start, len).clone();
  if (policy.noise_scale > 0) {
    out += policy.noise_scale * rng.randn({len}, waveform.scalar_type());
  }
  return out;
}

torch::Tensor spectral_mask_view(const torch::Tensor& spectrogram, const SpectralMaskPolicy& policy,
                                 Rng& rng) {
  if (spectrogram.dim() != 3) {
    throw ShapeMismatch("spectral masking expects a C x F x T spectrogram");
  }
  const int64_t c = spectrogram.size(0), f = spectrogram.size(1), t = spectrogram.size(2);
  if (policy.mask_factor > f || policy.mask_factor > t) {
    throw MaskTooLarge("mask_factor " + std::to_string(policy.mask_factor) +
                       " exceeds spectrogram extent " + std::to_string(f) + " x " +
                       std::to_string(t));
  }
  auto out = spectrogram.clone();
  if (policy.apply_noise && policy.noise_std > 0) {
    out += policy.noise_std * rng.randn(out.sizes(), out.scalar_type());
  }
  auto mask_channels = [&](int64_t c0, int64_t count) {
    const int64_t fw = rng.randint(0, policy.mask_factor);
    const int64_t f0 = rng.randint(0, f - fw);
    const int64_t tw = rng.randint(0, policy.mask_factor);
    const int64_t t0 = rng.randint(0, t - tw);
    auto slab = out.narrow(0, c0, count);
    if (fw > 0) slab.narrow(1, f0, fw).zero_();
    if (tw > 0) slab.narrow(2, t0, tw).zero_();
  };
  if (policy.shared_mask_across_channels) {
    mask_channels(0, c);
  } else {
    for (int64_t ch = 0; ch < c; ++ch) mask_channels(ch, 1);
  }
  return out;
}

torch::Tensor spectral_mask_views(const torch::Tensor& batch, const SpectralMaskPolicy& policy,
                                  Rng& rng) {
  if (batch.dim() != 4) {
    throw ShapeMismatch("expected a B x C x F x T batch");
  }
  std::vector<torch::Tensor> views;
  views.reserve(batch.size(0));
  for (int64_t i = 0; i < batch.size(0); ++i) {
    views.push_back(spectral_mask_view(batch[i], policy, rng));
  }
  return torch::stack(views);
}

}  // namespace viewcraft

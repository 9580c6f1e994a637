#pragma once

#include <utility>

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Handcrafted image views in the SimCLR style. Defaults are the SimCLR
/// reference strengths.
struct ImageExpertPolicy {
  std::pair<double, double> crop_scale{0.08, 1.0};
  std::pair<double, double> crop_ratio{3.0 / 4.0, 4.0 / 3.0};
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double brightness = 0.8;
  double contrast = 0.8;
  double saturation = 0.8;
  double hue = 0.2;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  int64_t blur_kernel = 3;
  std::pair<double, double> blur_sigma{0.1, 2.0};

  /// Full pipeline: crop, flip, jitter, grayscale, blur.
  static ImageExpertPolicy simclr();
  /// Crop and horizontal flip only; no color or blur operations.
  static ImageExpertPolicy crop_flip();
  /// Every stochastic stage disabled and crop fixed to the whole image.
  static ImageExpertPolicy identity();

  void validate() const;
};

/// SpecAugment-style frequency / time masking.
struct SpectralMaskPolicy {
  int64_t mask_factor = 40;
  bool apply_noise = true;
  double noise_std = 0.1;
  /// Same band positions for every channel (multi-sensor spectrograms).
  bool shared_mask_across_channels = true;

  void validate() const;
};

/// Time-domain waveform views: random contiguous crop plus Gaussian noise.
struct WaveformPolicy {
  std::pair<double, double> crop_scale{0.08, 1.0};
  double noise_scale = 1.0;

  void validate() const;
};

/// One expert view of a 3 x H x W image in [0, 1]. Stages run in order:
/// random resized crop, horizontal flip, color jitter, random grayscale,
/// Gaussian blur. Output has the input shape and stays in [0, 1].
torch::Tensor image_expert_view(const torch::Tensor& image, const ImageExpertPolicy& policy,
                                Rng& rng);

/// image_expert_view applied independently to each image of a batch.
torch::Tensor image_expert_views(const torch::Tensor& batch, const ImageExpertPolicy& policy,
                                 Rng& rng);

/// Random contiguous crop of relative length in policy.crop_scale, then
/// additive N(0, noise_scale^2) noise. Throws EmptyInput.
torch::Tensor waveform_view(const torch::Tensor& waveform, const WaveformPolicy& policy, Rng& rng);

/// Optional noise, then one frequency band and one time band of random width
/// in [0, mask_factor] zeroed on a C x F x T spectrogram. Throws MaskTooLarge.
torch::Tensor spectral_mask_view(const torch::Tensor& spectrogram, const SpectralMaskPolicy& policy,
                                 Rng& rng);

torch::Tensor spectral_mask_views(const torch::Tensor& batch, const SpectralMaskPolicy& policy,
                                  Rng& rng);

// Individual image stages, exposed for testing and reuse.
namespace image_ops {

struct CropBox {
  int64_t top = 0;
  int64_t left = 0;
  int64_t height = 0;
  int64_t width = 0;
};

CropBox sample_resized_crop(int64_t height, int64_t width, std::pair<double, double> scale,
                            std::pair<double, double> ratio, Rng& rng);
torch::Tensor resized_crop(const torch::Tensor& image, const CropBox& box, int64_t out_h,
                           int64_t out_w);
torch::Tensor rgb_to_grayscale(const torch::Tensor& image);
torch::Tensor adjust_brightness(const torch::Tensor& image, double factor);
torch::Tensor adjust_contrast(const torch::Tensor& image, double factor);
torch::Tensor adjust_saturation(const torch::Tensor& image, double factor);
torch::Tensor adjust_hue(const torch::Tensor& image, double shift);
torch::Tensor rgb_to_hsv(const torch::Tensor& image);
torch::Tensor hsv_to_rgb(const torch::Tensor& image);
torch::Tensor gaussian_blur(const torch::Tensor& image, int64_t kernel, double sigma);

}  // namespace image_ops

}  // namespace viewcraft

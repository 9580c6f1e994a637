#pragma once

#include <string>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/modules/instancenorm.h>
#include <torch/nn/modules/padding.h>
#include <torch/nn/pimpl.h>

#include "viewcraft/perturb.hpp"
#include "viewcraft/rng.hpp"

namespace viewcraft {

struct ViewmakerConfig {
  int64_t in_channels = 3;
  int64_t num_residual_blocks = 3;
  /// Uniform noise channels concatenated at each injection site.
  int64_t noise_dim = 1;
  PerturbationBudget budget;

  /// Throws ConfigInvalid.
  void validate() const;
};

/// Reflection-padded convolution.
class ReflectConvImpl : public torch::nn::Module {
 public:
  ReflectConvImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::ReflectionPad2d pad_{nullptr};
  torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(ReflectConv);

/// conv-IN-ReLU-conv-IN plus identity.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ReflectConv conv1_{nullptr}, conv2_{nullptr};
  torch::nn::InstanceNorm2d in1_{nullptr}, in2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Nearest-neighbour x2 upsampling followed by a reflection-padded conv.
class UpsampleConvImpl : public torch::nn::Module {
 public:
  UpsampleConvImpl(int64_t in, int64_t out, int64_t kernel);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ReflectConv conv_{nullptr};
};
TORCH_MODULE(UpsampleConv);

/// Image-to-image perturbation generator in the fast style-transfer layout:
///
///   9x9 conv -> 3x3/2 conv -> 3x3/2 conv -> residual blocks
///            -> up x2 conv -> up x2 conv -> 9x9 conv (linear output)
///
/// One channel of U[0,1) noise per `noise_dim` is concatenated to the input
/// and again in front of every residual block, so block k sees
/// 128 + k * noise_dim channels. Noise is drawn independently at each site
/// at that site's resolution.
class ViewmakerImpl : public torch::nn::Module {
 public:
  explicit ViewmakerImpl(ViewmakerConfig config);

  /// Raw (unprojected) perturbation for a B x C x H x W batch.
  torch::Tensor forward(const torch::Tensor& x, Rng& rng);

  const ViewmakerConfig& config() const { return config_; }

 private:
  torch::Tensor add_noise(const torch::Tensor& x, Rng& rng) const;

  ViewmakerConfig config_;
  ReflectConv conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  torch::nn::InstanceNorm2d in1_{nullptr}, in2_{nullptr}, in3_{nullptr};
  std::vector<ResidualBlock> blocks_;
  UpsampleConv up1_{nullptr}, up2_{nullptr};
  torch::nn::InstanceNorm2d in4_{nullptr}, in5_{nullptr};
  ReflectConv out_{nullptr};
};
TORCH_MODULE(Viewmaker);

/// Builds a viewmaker with parameters drawn deterministically from `seed`.
Viewmaker build_viewmaker(const ViewmakerConfig& config, uint64_t seed);

/// One view: P = V(X, noise), projected onto the budget sphere, applied with
/// optional clamping (or applied in the DCT domain when budget.domain is dct).
/// Differentiable with respect to both the viewmaker parameters and X.
PerturbedView generate_view(Viewmaker& viewmaker, const torch::Tensor& input, Rng& rng);

/// Which mechanism produced a pair of views.
enum class ViewSource { kViewmaker, kExpert, kCombined, kGaussianNoise, kDctViewmaker, kNone };

std::string to_string(ViewSource s);
ViewSource parse_view_source(std::string_view s);

struct ViewPair {
  torch::Tensor first;
  torch::Tensor second;
  /// Projected perturbations, undefined when the source has none.
  torch::Tensor first_perturbation;
  torch::Tensor second_perturbation;
  ViewSource source = ViewSource::kNone;
};

/// Two independent generate_view calls.
ViewPair viewmaker_pair(Viewmaker& viewmaker, const torch::Tensor& input, Rng& rng);

}  // namespace viewcraft

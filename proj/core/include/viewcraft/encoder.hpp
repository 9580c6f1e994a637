#pragma once

#include <string>
#include <string_view>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/modules/batchnorm.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>

namespace viewcraft {

enum class EncoderVariant { kSmallResNet18, kStandardResNet18, kResNet50Mlp };

std::string to_string(EncoderVariant v);
EncoderVariant parse_encoder_variant(std::string_view s);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::kSmallResNet18;
  int64_t embedding_dim = 128;
  /// Hidden width of the projection MLP (resnet50_mlp only).
  int64_t mlp_hidden = 2048;
  int64_t input_channels = 3;

  void validate() const;
};

struct FeatureBundle {
  /// B x D contrastive embedding (not normalized).
  torch::Tensor embedding;
  /// B x (C * h * w) flattened activations of the last convolutional stage.
  torch::Tensor prepool;
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

class BottleneckImpl : public torch::nn::Module {
 public:
  static constexpr int64_t kExpansion = 4;
  BottleneckImpl(int64_t in, int64_t width, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet backbones.
///  - small_resnet18: 3x3 stride-1 stem, no max-pool (32x32 inputs give
///    512 x 4 x 4 pre-pool features); linear 512 -> D head.
///  - standard_resnet18: 7x7 stride-2 stem + max-pool; linear head.
///  - resnet50_mlp: bottleneck ResNet-50 with a 2048 -> hidden -> D MLP head.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(EncoderConfig config);

  FeatureBundle forward(const torch::Tensor& x);

  const EncoderConfig& config() const { return config_; }
  /// Channels of the last convolutional stage (512 or 2048).
  int64_t feature_channels() const { return feature_channels_; }

 private:
  EncoderConfig config_;
  int64_t feature_channels_ = 0;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr}, layer4_{nullptr};
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(Encoder);

Encoder build_encoder(const EncoderConfig& config, uint64_t seed);

/// Evaluation-mode, gradient-free forward pass. Restores the previous
/// training flag before returning.
FeatureBundle encode(Encoder& encoder, const torch::Tensor& x);

/// Pre-pool feature length for an input of the given spatial size.
int64_t prepool_dim(Encoder& encoder, int64_t height, int64_t width);

}  // namespace viewcraft

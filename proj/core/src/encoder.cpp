#include "viewcraft/encoder.hpp"

#include <torch/torch.h>

#include "viewcraft/errors.hpp"
#include "viewcraft/nn_init.hpp"
#include "viewcraft/rng.hpp"

namespace viewcraft {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(false));
}

torch::Tensor relu(torch::Tensor x) { return torch::relu(x); }

nn::Sequential projection_shortcut(int64_t in, int64_t out, int64_t stride) {
  if (stride == 1 && in == out) {
    return nn::Sequential();
  }
  return nn::Sequential(conv(in, out, 1, stride, 0), nn::BatchNorm2d(out));
}

}  // namespace

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::kSmallResNet18:
      return "small_resnet18";
    case EncoderVariant::kStandardResNet18:
      return "standard_resnet18";
    case EncoderVariant::kResNet50Mlp:
      return "resnet50_mlp";
  }
  return "small_resnet18";
}

EncoderVariant parse_encoder_variant(std::string_view s) {
  if (s == "small_resnet18") return EncoderVariant::kSmallResNet18;
  if (s == "standard_resnet18") return EncoderVariant::kStandardResNet18;
  if (s == "resnet50_mlp") return EncoderVariant::kResNet50Mlp;
  throw ConfigInvalid("unknown encoder variant '" + std::string(s) + "'");
}

void EncoderConfig::validate() const {
  if (embedding_dim < 1) throw ConfigInvalid("encoder.embedding_dim must be >= 1");
  if (input_channels < 1) throw ConfigInvalid("encoder.input_channels must be >= 1");
  if (variant == EncoderVariant::kResNet50Mlp && mlp_hidden < 1) {
    throw ConfigInvalid("encoder.mlp_hidden must be >= 1");
  }
}

BasicBlockImpl::BasicBlockImpl(int64_t in, int64_t out, int64_t stride) {
  conv1_ = register_module("conv1", conv(in, out, 3, stride, 1));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out));
  conv2_ = register_module("conv2", conv(out, out, 3, 1, 1));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out));
  shortcut_ = register_module("shortcut", projection_shortcut(in, out, stride));
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
  y = bn2_->forward(conv2_->forward(y));
  auto skip = shortcut_->is_empty() ? x : shortcut_->forward(x);
  return torch::relu(y + skip);
}

BottleneckImpl::BottleneckImpl(int64_t in, int64_t width, int64_t stride) {
  const int64_t out = width * kExpansion;
  conv1_ = register_module("conv1", conv(in, width, 1, 1, 0));
  bn1_ = register_module("bn1", nn::BatchNorm2d(width));
  conv2_ = register_module("conv2", conv(width, width, 3, stride, 1));
  bn2_ = register_module("bn2", nn::BatchNorm2d(width));
  conv3_ = register_module("conv3", conv(width, out, 1, 1, 0));
  bn3_ = register_module("bn3", nn::BatchNorm2d(out));
  shortcut_ = register_module("shortcut", projection_shortcut(in, out, stride));
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
  y = torch::relu(bn2_->forward(conv2_->forward(y)));
  y = bn3_->forward(conv3_->forward(y));
  auto skip = shortcut_->is_empty() ? x : shortcut_->forward(x);
  return torch::relu(y + skip);
}

EncoderImpl::EncoderImpl(EncoderConfig config) : config_(config) {
  config_.validate();
  const int64_t cin = config_.input_channels;

  if (config_.variant == EncoderVariant::kSmallResNet18) {
    stem_ = nn::Sequential(conv(cin, 64, 3, 1, 1), nn::BatchNorm2d(64), nn::Functional(relu));
  } else {
    stem_ = nn::Sequential(conv(cin, 64, 7, 2, 3), nn::BatchNorm2d(64), nn::Functional(relu),
                           nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
  }
  register_module("stem", stem_);

  const std::array<int64_t, 4> widths{64, 128, 256, 512};
  const bool bottleneck = config_.variant == EncoderVariant::kResNet50Mlp;
  const std::array<int64_t, 4> depths =
      bottleneck ? std::array<int64_t, 4>{3, 4, 6, 3} : std::array<int64_t, 4>{2, 2, 2, 2};

  int64_t in = 64;
  std::array<nn::Sequential, 4> layers;
  for (size_t stage = 0; stage < 4; ++stage) {
    layers[stage] = nn::Sequential();
    for (int64_t b = 0; b < depths[stage]; ++b) {
      const int64_t stride = (b == 0 && stage > 0) ? 2 : 1;
      if (bottleneck) {
        layers[stage]->push_back(Bottleneck(in, widths[stage], stride));
        in = widths[stage] * BottleneckImpl::kExpansion;
      } else {
        layers[stage]->push_back(BasicBlock(in, widths[stage], stride));
        in = widths[stage];
      }
    }
  }
  layer1_ = register_module("layer1", layers[0]);
  layer2_ = register_module("layer2", layers[1]);
  layer3_ = register_module("layer3", layers[2]);
  layer4_ = register_module("layer4", layers[3]);
  feature_channels_ = in;

  if (bottleneck) {
    head_ = nn::Sequential(nn::Linear(in, config_.mlp_hidden), nn::Functional(relu),
                           nn::Linear(config_.mlp_hidden, config_.embedding_dim));
  } else {
    head_ = nn::Sequential(nn::Linear(in, config_.embedding_dim));
  }
  register_module("head", head_);
}

FeatureBundle EncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.input_channels) {
    throw ShapeMismatch("encoder expects B x " + std::to_string(config_.input_channels) +
                        " x H x W input, got " + c10::str(x.sizes()));
  }
  auto y = stem_->forward(x);
  y = layer1_->forward(y);
  y = layer2_->forward(y);
  y = layer3_->forward(y);
  y = layer4_->forward(y);
  FeatureBundle out;
  out.prepool = y.flatten(1);
  out.embedding = head_->forward(y.mean({2, 3}));
  return out;
}

Encoder build_encoder(const EncoderConfig& config, uint64_t seed) {
  Encoder encoder(config);
  Rng rng(seed);
  init_parameters(*encoder, rng);
  return encoder;
}

FeatureBundle encode(Encoder& encoder, const torch::Tensor& x) {
  const bool was_training = encoder->is_training();
  encoder->eval();
  torch::NoGradGuard no_grad;
  auto out = encoder->forward(x);
  encoder->train(was_training);
  return out;
}

int64_t prepool_dim(Encoder& encoder, int64_t height, int64_t width) {
  auto dtype = encoder->parameters().front().scalar_type();
  auto probe = torch::zeros({1, encoder->config().input_channels, height, width}, dtype);
  return encode(encoder, probe).prepool.size(1);
}

}  // namespace viewcraft

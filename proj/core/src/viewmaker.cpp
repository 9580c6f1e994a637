#include "viewcraft/viewmaker.hpp"

#include <torch/torch.h>

#include "viewcraft/errors.hpp"
#include "viewcraft/nn_init.hpp"

namespace viewcraft {

namespace {

constexpr int64_t kBaseWidth = 32;

torch::nn::InstanceNorm2d make_instance_norm(int64_t channels) {
  return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true));
}

}  // namespace

void ViewmakerConfig::validate() const {
  if (in_channels < 1) {
    throw ConfigInvalid("viewmaker.in_channels must be >= 1");
  }
  if (num_residual_blocks < 1) {
    throw ConfigInvalid("viewmaker.num_residual_blocks must be >= 1");
  }
  if (noise_dim < 1) {
    throw ConfigInvalid("viewmaker.noise_dim must be >= 1");
  }
  budget.validate();
}

ReflectConvImpl::ReflectConvImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  pad_ = register_module("pad", torch::nn::ReflectionPad2d(kernel / 2));
  conv_ = register_module("conv",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride)));
}

torch::Tensor ReflectConvImpl::forward(const torch::Tensor& x) { return conv_->forward(pad_->forward(x)); }

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  conv1_ = register_module("conv1", ReflectConv(channels, channels, 3, 1));
  in1_ = register_module("in1", make_instance_norm(channels));
  conv2_ = register_module("conv2", ReflectConv(channels, channels, 3, 1));
  in2_ = register_module("in2", make_instance_norm(channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(in1_->forward(conv1_->forward(x)));
  y = in2_->forward(conv2_->forward(y));
  return y + x;
}

UpsampleConvImpl::UpsampleConvImpl(int64_t in, int64_t out, int64_t kernel) {
  conv_ = register_module("conv", ReflectConv(in, out, kernel, 1));
}

torch::Tensor UpsampleConvImpl::forward(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest));
  return conv_->forward(up);
}

ViewmakerImpl::ViewmakerImpl(ViewmakerConfig config) : config_(std::move(config)) {
  config_.validate();
  const int64_t noise = config_.noise_dim;
  const int64_t c1 = kBaseWidth, c2 = 2 * kBaseWidth, c3 = 4 * kBaseWidth;

  conv1_ = register_module("conv1", ReflectConv(config_.in_channels + noise, c1, 9, 1));
  in1_ = register_module("in1", make_instance_norm(c1));
  conv2_ = register_module("conv2", ReflectConv(c1, c2, 3, 2));
  in2_ = register_module("in2", make_instance_norm(c2));
  conv3_ = register_module("conv3", ReflectConv(c2, c3, 3, 2));
  in3_ = register_module("in3", make_instance_norm(c3));

  for (int64_t k = 1; k <= config_.num_residual_blocks; ++k) {
    blocks_.push_back(
        register_module("res" + std::to_string(k), ResidualBlock(c3 + k * noise)));
  }
  const int64_t res_out = c3 + config_.num_residual_blocks * noise;
  up1_ = register_module("up1", UpsampleConv(res_out, c2, 3));
  in4_ = register_module("in4", make_instance_norm(c2));
  up2_ = register_module("up2", UpsampleConv(c2, c1, 3));
  in5_ = register_module("in5", make_instance_norm(c1));
  out_ = register_module("out", ReflectConv(c1, config_.in_channels, 9, 1));
}

torch::Tensor ViewmakerImpl::add_noise(const torch::Tensor& x, Rng& rng) const {
  auto noise = rng.rand({x.size(0), config_.noise_dim, x.size(2), x.size(3)}, x.scalar_type());
  return torch::cat({x, noise}, 1);
}

torch::Tensor ViewmakerImpl::forward(const torch::Tensor& x, Rng& rng) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw ShapeMismatch("viewmaker expects B x " + std::to_string(config_.in_channels) +
                        " x H x W input");
  }
  auto y = torch::relu(in1_->forward(conv1_->forward(add_noise(x, rng))));
  y = torch::relu(in2_->forward(conv2_->forward(y)));
  y = torch::relu(in3_->forward(conv3_->forward(y)));
  for (auto& block : blocks_) {
    y = block->forward(add_noise(y, rng));
  }
  y = torch::relu(in4_->forward(up1_->forward(y)));
  y = torch::relu(in5_->forward(up2_->forward(y)));
  y = out_->forward(y);
  // Odd spatial sizes lose a row/column in the stride-2 stages.
  if (y.size(2) != x.size(2) || y.size(3) != x.size(3)) {
    namespace F = torch::nn::functional;
    y = F::interpolate(y, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{x.size(2), x.size(3)})
                              .mode(torch::kNearest));
  }
  return y;
}

Viewmaker build_viewmaker(const ViewmakerConfig& config, uint64_t seed) {
  Viewmaker viewmaker(config);
  Rng rng(seed);
  init_parameters(*viewmaker, rng);
  return viewmaker;
}

PerturbedView generate_view(Viewmaker& viewmaker, const torch::Tensor& input, Rng& rng) {
  const auto& budget = viewmaker->config().budget;
  auto raw = viewmaker->forward(input, rng);
  if (budget.domain == PerturbDomain::kDct) {
    return dct_view(input, raw, budget);
  }
  auto projected = project_to_budget(raw, budget);
  return {apply_perturbation(input, projected, budget), projected};
}

std::string to_string(ViewSource s) {
  switch (s) {
    case ViewSource::kViewmaker:
      return "viewmaker";
    case ViewSource::kExpert:
      return "expert";
    case ViewSource::kCombined:
      return "combined";
    case ViewSource::kGaussianNoise:
      return "gaussian_noise";
    case ViewSource::kDctViewmaker:
      return "dct_viewmaker";
    case ViewSource::kNone:
      return "none";
  }
  return "none";
}

ViewSource parse_view_source(std::string_view s) {
  if (s == "viewmaker") return ViewSource::kViewmaker;
  if (s == "expert") return ViewSource::kExpert;
  if (s == "combined") return ViewSource::kCombined;
  if (s == "gaussian_noise") return ViewSource::kGaussianNoise;
  if (s == "dct_viewmaker") return ViewSource::kDctViewmaker;
  if (s == "none") return ViewSource::kNone;
  throw ConfigInvalid("unknown view_source '" + std::string(s) + "'");
}

ViewPair viewmaker_pair(Viewmaker& viewmaker, const torch::Tensor& input, Rng& rng) {
  auto a = generate_view(viewmaker, input, rng);
  auto b = generate_view(viewmaker, input, rng);
  const auto source = viewmaker->config().budget.domain == PerturbDomain::kDct
                          ? ViewSource::kDctViewmaker
                          : ViewSource::kViewmaker;
  return {a.view, b.view, a.perturbation, b.perturbation, source};
}

}  // namespace viewcraft

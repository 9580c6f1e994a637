#include <gtest/gtest.h>
#include <torch/torch.h>

#include "support/oracles.hpp"
#include "viewcraft/checkpoint.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/viewmaker.hpp"

using namespace viewcraft;
using viewcraft::testing::lp_norm_oracle;
using viewcraft::testing::to_vector;

namespace {

ViewmakerConfig config(int64_t channels, bool clamp = true) {
  ViewmakerConfig c;
  c.in_channels = channels;
  c.budget.epsilon = 0.05;
  c.budget.clamp = clamp;
  return c;
}

int64_t param_count(torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace

TEST(Viewmaker, DeterministicBuild) {
  auto a = build_viewmaker(config(3), 7);
  auto b = build_viewmaker(config(3), 7);
  EXPECT_EQ(param_count(*a), param_count(*b));
  EXPECT_GT(param_count(*a), 0);
  EXPECT_TRUE(modules_identical(*a, *b));
  auto c = build_viewmaker(config(3), 8);
  EXPECT_FALSE(modules_identical(*a, *c));
}

TEST(Viewmaker, RejectsBadConfig) {
  auto c = config(3);
  c.num_residual_blocks = 0;
  EXPECT_THROW(build_viewmaker(c, 0), ConfigInvalid);
  c = config(0);
  EXPECT_THROW(build_viewmaker(c, 0), ConfigInvalid);
  c = config(3);
  c.noise_dim = 0;
  EXPECT_THROW(build_viewmaker(c, 0), ConfigInvalid);
}

TEST(Viewmaker, ShapesAndBudget) {
  struct Case {
    int64_t c, h, w;
    bool clamp;
  };
  for (auto k : {Case{3, 32, 32, true}, Case{1, 64, 64, false}, Case{1, 112, 112, false},
                 Case{52, 32, 32, false}}) {
    auto vm = build_viewmaker(config(k.c, k.clamp), 1);
    Rng rng(2);
    auto x = k.clamp ? rng.rand({2, k.c, k.h, k.w}) : rng.randn({2, k.c, k.h, k.w});
    auto out = generate_view(vm, x, rng);
    ASSERT_EQ(out.view.sizes(), x.sizes());
    const double r = 0.05 * k.c * k.h * k.w;
    for (int64_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(lp_norm_oracle(to_vector(out.perturbation[i]), 1.0), r, 1e-4 * r);
    }
    if (!k.clamp) {
      EXPECT_TRUE(torch::allclose(out.view, x + out.perturbation));
    }
  }
}

TEST(Viewmaker, WrongChannelsRejected) {
  auto vm = build_viewmaker(config(3), 1);
  Rng rng(0);
  EXPECT_THROW(generate_view(vm, torch::rand({1, 1, 32, 32}), rng), ShapeMismatch);
}

TEST(Viewmaker, StochasticAndDeterministic) {
  auto vm = build_viewmaker(config(3), 3);
  torch::NoGradGuard no_grad;
  auto x = Rng(4).rand({1, 3, 32, 32});
  Rng rng(5);
  std::vector<torch::Tensor> views;
  for (int i = 0; i < 20; ++i) views.push_back(generate_view(vm, x, rng).view);
  for (size_t i = 0; i < views.size(); ++i) {
    for (size_t j = i + 1; j < views.size(); ++j) {
      EXPECT_GT((views[i] - views[j]).abs().max().item<float>(), 0.0f);
    }
  }
  Rng r1(99), r2(99);
  EXPECT_TRUE(torch::equal(generate_view(vm, x, r1).view, generate_view(vm, x, r2).view));
}

TEST(Viewmaker, PairIsIndependentAndClamped) {
  auto vm = build_viewmaker(config(3), 6);
  torch::NoGradGuard no_grad;
  Rng rng(7);
  auto x = rng.rand({2, 3, 16, 16});
  auto pair = viewmaker_pair(vm, x, rng);
  EXPECT_EQ(pair.source, ViewSource::kViewmaker);
  EXPECT_FALSE(torch::equal(pair.first, pair.second));
  for (const auto& v : {pair.first, pair.second}) {
    EXPECT_GE(v.min().item<float>(), 0.0f);
    EXPECT_LE(v.max().item<float>(), 1.0f);
  }
  const double r = 0.05 * 3 * 16 * 16;
  for (const auto& p : {pair.first_perturbation, pair.second_perturbation}) {
    EXPECT_NEAR(lp_norm_oracle(to_vector(p[0]), 1.0), r, 1e-4 * r);
  }
}

TEST(Viewmaker, DifferentiableInInputAndParameters) {
  auto vm = build_viewmaker(config(3), 8);
  Rng rng(9);
  auto x = rng.rand({1, 3, 16, 16}).requires_grad_(true);
  auto out = generate_view(vm, x, rng);
  out.view.square().sum().backward();
  ASSERT_TRUE(x.grad().defined());
  EXPECT_GT(x.grad().abs().sum().item<float>(), 0.0f);
  int64_t with_grad = 0;
  for (const auto& p : vm->parameters()) {
    if (p.grad().defined() && p.grad().abs().sum().item<float>() > 0) ++with_grad;
  }
  EXPECT_GT(with_grad, 0);
}

TEST(Viewmaker, CheckpointRoundTrip) {
  auto vm = build_viewmaker(config(3), 10);
  auto dir = viewcraft::testing::temp_dir("vm-ckpt");
  save_module(*vm, dir / "viewmaker.pt", "cfg");
  auto other = build_viewmaker(config(3), 11);
  EXPECT_EQ(load_module(*other, dir / "viewmaker.pt"), "cfg");
  EXPECT_TRUE(modules_identical(*vm, *other));
}

TEST(ViewSourceNames, RoundTrip) {
  for (auto s : {ViewSource::kViewmaker, ViewSource::kExpert, ViewSource::kCombined,
                 ViewSource::kGaussianNoise, ViewSource::kDctViewmaker}) {
    EXPECT_EQ(parse_view_source(to_string(s)), s);
  }
  EXPECT_THROW(parse_view_source("mixup"), ConfigInvalid);
}

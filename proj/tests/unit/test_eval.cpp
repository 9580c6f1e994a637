#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "support/oracles.hpp"
#include "viewcraft/checkpoint.hpp"
#include "viewcraft/corruptions.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/eval.hpp"

using namespace viewcraft;

namespace {

/// Two classes of images that differ by a large constant offset.
DatasetBundle blobs(int64_t n_train, int64_t n_val, uint64_t seed) {
  Rng rng(seed);
  auto make = [&](int64_t n) {
    Dataset d;
    d.labels = torch::arange(n, torch::kInt64) % 2;
    auto base = 0.25 + 0.5 * d.labels.to(torch::kFloat32).view({n, 1, 1, 1});
    d.inputs = (base + rng.randn({n, 3, 8, 8}) * 0.05).clamp(0, 1);
    d.subjects = 1 + torch::arange(n, torch::kInt64) % 3;
    return d;
  };
  DatasetBundle b;
  b.train = make(n_train);
  b.val = make(n_val);
  b.num_classes = 2;
  b.encoder_norm = compute_norm_stats(b.train.inputs);
  return b;
}

ExperimentConfig eval_config(const std::string& source = "expert") {
  auto c = parse_config("view_source = \"" + source +
                        "\"\n[expert.image]\npreset = \"crop_flip\"\n"
                        "[linear_eval]\nepochs = 20\nbatch_size = 16\nlr_drops = [15]\n"
                        "[semisup]\nbatch_size = 16\nmax_epochs = 4\npatience = 2\n");
  return c;
}

}  // namespace

TEST(TopK, HandExample) {
  auto logits = torch::tensor({{3.0, 2.0, 1.0}, {1.0, 3.0, 2.0}});
  auto labels = torch::tensor({1, 0}, torch::kInt64);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, labels, 3), 100.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, labels, 2), 50.0);
  EXPECT_DOUBLE_EQ(topk_accuracy(logits, labels, 1), 0.0);
  EXPECT_THROW(topk_accuracy(logits, labels, 4), KTooLarge);
  EXPECT_THROW(topk_accuracy(logits, labels, 0), KTooLarge);
}

TEST(TopK, PropertiesOnRandomLogits) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto logits = rng.randn({50, 7});
    auto labels = rng.randperm(50) % 7;
    const double argmax = (logits.argmax(1) == labels).to(torch::kFloat64).mean().item<double>() * 100;
    EXPECT_NEAR(topk_accuracy(logits, labels, 1), argmax, 1e-9);
    EXPECT_DOUBLE_EQ(topk_accuracy(logits, labels, 7), 100.0);
    double prev = 0.0;
    for (int64_t k = 1; k <= 7; ++k) {
      const double a = topk_accuracy(logits, labels, k);
      EXPECT_GE(a, prev);
      EXPECT_DOUBLE_EQ(topk_accuracy(torch::exp(logits) * 3 + 1, labels, k), a);
      prev = a;
    }
  }
}

TEST(MacroF1, HandExample) {
  // Attribute 0: TP 1, FP 1, FN 0 -> F1 2/3. Attribute 1: all negative -> 100.
  auto logits = torch::tensor({{1.0, -1.0}, {1.0, -1.0}, {-1.0, -1.0}});
  auto targets = torch::tensor({{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}});
  EXPECT_NEAR(macro_f1(logits, targets), (200.0 / 3.0 + 100.0) / 2.0, 1e-9);
}

TEST(EvalReport, JsonRoundTripAndRender) {
  EvalReport r;
  r.task = "robustness";
  r.set("clean", 90.0);
  r.set("corrupted", 80.5);
  r.set("diff", -9.5);
  r.table.push_back({"gaussian_noise-1", 85.0});
  r.info["checkpoint"] = "runs/x/step-4";
  auto back = EvalReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_DOUBLE_EQ(back.get("diff"), -9.5);
  EXPECT_TRUE(back.has("clean"));
  EXPECT_THROW(back.get("missing"), IndexOutOfRange);
  r.set("clean", 91.0);
  EXPECT_DOUBLE_EQ(r.get("clean"), 91.0);
  EXPECT_EQ(r.summary.size(), 3u);
  const auto text = r.render();
  EXPECT_NE(text.find("clean"), std::string::npos);
  EXPECT_NE(text.find("gaussian_noise-1"), std::string::npos);
  auto dir = viewcraft::testing::temp_dir("report");
  r.save(dir / "r.json");
  EXPECT_EQ(EvalReport::load(dir / "r.json").to_json(), r.to_json());
}

TEST(LinearEval, SeparableTaskAndFrozenEncoder) {
  auto data = blobs(64, 32, 2);
  auto c = eval_config();
  Encoder enc = build_encoder(c.encoder, 3);
  ViewFactory views = make_view_factory(c, Viewmaker(nullptr), data);
  auto before = module_archive(*enc);
  Rng rng(4);
  auto r = linear_eval(enc, views, false, data.train, data.val, 2, c.linear_eval, rng);
  EXPECT_GE(r.val_accuracy, 99.0);
  EXPECT_EQ(r.epoch_val_accuracy.size(), 20u);
  EXPECT_DOUBLE_EQ(r.report.get("accuracy"), r.val_accuracy);
  EXPECT_EQ(r.report.get("feature_dim"), 512.0);
  EXPECT_FALSE(r.report.has("top5_accuracy"));
  for (const auto& [k, v] : before.tensors()) {
    EXPECT_TRUE(torch::equal(v, module_archive(*enc).tensor(k))) << k;
  }

  // With training views the encoder stays frozen as well, and validation is
  // deterministic given the classifier.
  Rng rng2(5);
  auto rv = linear_eval(enc, views, true, data.train, data.val, 2, c.linear_eval, rng2);
  EXPECT_GE(rv.val_accuracy, 90.0);
  for (const auto& [k, v] : before.tensors()) {
    EXPECT_TRUE(torch::equal(v, module_archive(*enc).tensor(k))) << k;
  }
  EXPECT_EQ(classifier_accuracy(enc, rv.classifier, views, data.val.inputs, data.val.labels),
            rv.val_accuracy);
}

TEST(LinearEval, LearningRateDrops) {
  auto data = blobs(32, 16, 6);
  auto c = eval_config();
  c.linear_eval.epochs = 3;
  c.linear_eval.lr_drops = {1, 2};
  Encoder enc = build_encoder(c.encoder, 3);
  ViewFactory views = make_view_factory(c, Viewmaker(nullptr), data);
  Rng rng(7);
  auto r = linear_eval(enc, views, false, data.train, data.val, 2, c.linear_eval, rng);
  ASSERT_EQ(r.report.table.size(), 3u);
  c.linear_eval.lr_drops = {0};
  EXPECT_THROW(c.linear_eval.validate(), ConfigInvalid);
}

TEST(LinearEval, ClassifierShapeChecks) {
  torch::nn::Linear head(512, 2);
  EXPECT_NO_THROW(check_classifier(head, 512, 2));
  EXPECT_THROW(check_classifier(head, 8192, 2), CheckpointMismatch);
  EXPECT_THROW(check_classifier(head, 512, 10), CheckpointMismatch);
}

TEST(Corruptions, IdentityDiffIsExactlyZero) {
  auto data = blobs(32, 32, 8);
  auto c = eval_config();
  Encoder enc = build_encoder(c.encoder, 3);
  ViewFactory views = make_view_factory(c, Viewmaker(nullptr), data);
  Rng rng(9);
  auto le = linear_eval(enc, views, false, data.train, data.val, 2, c.linear_eval, rng);
  auto before = module_archive(*le.classifier);
  auto r = corruption_eval(enc, le.classifier, views, data.val, {Corruption{}}, rng);
  EXPECT_EQ(r.get("diff"), 0.0);
  EXPECT_EQ(r.get("clean"), r.get("corrupted"));
  EXPECT_EQ(r.get("clean"), le.val_accuracy);
  EXPECT_TRUE(modules_identical(*le.classifier, *torch::nn::Linear(512, 2)) == false);
  for (const auto& [k, v] : before.tensors()) {
    EXPECT_TRUE(torch::equal(v, module_archive(*le.classifier).tensor(k))) << k;
  }
  auto all = corruption_eval(enc, le.classifier, views, data.val, standard_corruptions(), rng);
  EXPECT_EQ(all.table.size(), 15u);
  EXPECT_NEAR(all.get("diff"), all.get("corrupted") - all.get("clean"), 1e-12);
}

TEST(Corruptions, KindsAndRange) {
  auto x = Rng(10).rand({4, 3, 16, 16});
  Rng rng(11);
  EXPECT_TRUE(torch::equal(apply_corruption(x, Corruption{}, rng), x));
  for (const auto& c : standard_corruptions()) {
    auto y = apply_corruption(x, c, rng);
    EXPECT_EQ(y.sizes(), x.sizes());
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
    EXPECT_FALSE(torch::equal(y, x)) << c.name();
  }
  // Severity is monotone for contrast: higher severity shrinks the spread.
  auto s1 = apply_corruption(x, {CorruptionKind::kContrast, 1}, rng).std().item<float>();
  auto s5 = apply_corruption(x, {CorruptionKind::kContrast, 5}, rng).std().item<float>();
  EXPECT_LT(s5, s1);
  EXPECT_EQ(parse_corruption("gaussian_blur"), CorruptionKind::kGaussianBlur);
  EXPECT_EQ(parse_corruption("noise"), CorruptionKind::kGaussianNoise);
  EXPECT_EQ((Corruption{CorruptionKind::kContrast, 3}).name(), "contrast-3");
  EXPECT_THROW(parse_corruption("fog"), ConfigInvalid);
}

TEST(SemiSupervised, SubjectsAndArms) {
  auto data = blobs(48, 16, 12);
  auto c = eval_config();
  EXPECT_THROW(subject_indices(data.train, {}), UnknownSubject);
  EXPECT_THROW(subject_indices(data.train, {9}), UnknownSubject);
  EXPECT_EQ(subject_indices(data.train, {1}).numel(), 16);
  EXPECT_EQ(subject_indices(data.train, {1, 2, 3}).numel(), 48);

  Encoder enc = build_encoder(c.encoder, 3);
  ViewFactory views = make_view_factory(c, Viewmaker(nullptr), data);
  Rng rng(13);
  Rng copy = rng;
  auto r = semi_supervised_compare(c, data, enc, views, {1, 2, 3}, rng);
  EXPECT_EQ(r.labeled_examples, 48);
  EXPECT_GE(r.supervised_epochs, 1);
  EXPECT_LE(r.supervised_epochs, 4);
  // Arm (b) with every subject is plain linear evaluation.
  const bool tv = c.linear_eval.train_views == "pretrain";
  auto plain = linear_eval(enc, views, tv, data.train, data.val, 2, c.linear_eval, copy);
  EXPECT_EQ(r.pretrained_accuracy, plain.val_accuracy);
  EXPECT_THROW(semi_supervised_compare(c, data, enc, views, {}, rng), UnknownSubject);
}

#include <fstream>

#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "viewcraft/config.hpp"
#include "viewcraft/errors.hpp"

using namespace viewcraft;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text, "test.toml");
  } catch (const ConfigParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, Defaults) {
  auto c = parse_config("");
  EXPECT_EQ(c.view_source, ViewSource::kViewmaker);
  EXPECT_EQ(c.objective, Objective::kSimclr);
  EXPECT_DOUBLE_EQ(c.temperature, 0.07);
  EXPECT_DOUBLE_EQ(c.optimizer.lr, 0.03);
  EXPECT_DOUBLE_EQ(c.optimizer.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.optimizer.weight_decay, 1e-4);
  EXPECT_EQ(c.training.batch_size, 256);
  EXPECT_EQ(c.training.epochs, 200);
  EXPECT_DOUBLE_EQ(c.viewmaker.budget.epsilon, 0.05);
  EXPECT_EQ(c.viewmaker.num_residual_blocks, 3);
  EXPECT_DOUBLE_EQ(c.memory_bank.update_rate, 0.5);
  EXPECT_EQ(c.memory_bank.num_negatives, 4096);
  EXPECT_DOUBLE_EQ(c.linear_eval.optimizer.lr, 0.01);
  EXPECT_DOUBLE_EQ(c.linear_eval.optimizer.weight_decay, 0.0);
  EXPECT_EQ(c.linear_eval.batch_size, 128);
  EXPECT_EQ(c.linear_eval.epochs, 100);
  EXPECT_EQ(c.linear_eval.lr_drops, (std::vector<int64_t>{60, 80}));
  EXPECT_EQ(c.expert.spectral.mask_factor, 40);
  EXPECT_EQ(c.semisup.patience, 10);
  EXPECT_EQ(c.semisup.max_epochs, 200);
}

TEST(Config, DerivedDefaults) {
  auto combined = parse_config("view_source = \"combined\"\n");
  EXPECT_DOUBLE_EQ(combined.viewmaker.budget.epsilon, 0.01);
  auto explicit_eps = parse_config("view_source = \"combined\"\n[viewmaker]\nepsilon = 0.05\n");
  EXPECT_DOUBLE_EQ(explicit_eps.viewmaker.budget.epsilon, 0.05);
  auto dct = parse_config("view_source = \"dct_viewmaker\"\n");
  EXPECT_EQ(dct.viewmaker.budget.domain, PerturbDomain::kDct);
  EXPECT_DOUBLE_EQ(dct.viewmaker.budget.epsilon, 1.0);
  auto sensors = parse_config("[dataset]\nkind = \"pamap2\"\n");
  EXPECT_EQ(sensors.encoder.input_channels, 52);
  EXPECT_EQ(sensors.viewmaker.in_channels, 52);
  EXPECT_FALSE(sensors.viewmaker.budget.clamp);
  auto speech = parse_config("[dataset]\nkind = \"audio_manifest\"\npath = \"m.jsonl\"\n");
  EXPECT_EQ(speech.encoder.input_channels, 1);
  auto crop = parse_config("[expert.image]\npreset = \"crop_flip\"\n");
  EXPECT_DOUBLE_EQ(crop.expert.image.jitter_prob, 0.0);
}

TEST(Config, ErrorsNameFieldAndLine) {
  auto msg = error_of("name = \"x\"\n[viewmaker]\nepsilon = -0.5\n");
  EXPECT_NE(msg.find("viewmaker.epsilon"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.toml:3"), std::string::npos) << msg;

  msg = error_of("[training]\nbatch_sise = 3\n");
  EXPECT_NE(msg.find("training.batch_sise"), std::string::npos) << msg;

  msg = error_of("view_source = \"mixup\"\n");
  EXPECT_NE(msg.find("view_source"), std::string::npos) << msg;

  msg = error_of("[training]\nepochs = \"many\"\n");
  EXPECT_NE(msg.find("training.epochs"), std::string::npos) << msg;

  msg = error_of("temperature = 0.0\n");
  EXPECT_NE(msg.find("temperature"), std::string::npos) << msg;

  msg = error_of("[viewmaker\n");
  EXPECT_NE(msg.find("test.toml"), std::string::npos) << msg;

  msg = error_of("[linear_eval]\nepochs = 10\nlr_drops = [60]\n");
  EXPECT_NE(msg.find("lr_drops"), std::string::npos) << msg;
}

TEST(Config, CanonicalRoundTrip) {
  auto c = parse_config(
      "name = \"rt\"\nseed = 42\nview_source = \"combined\"\nobjective = \"instdisc\"\n"
      "[dataset]\nkind = \"synthetic_images\"\nnum_train = 100\n"
      "[viewmaker]\np = \"l2\"\n[expert.image]\nflip_prob = 0.25\n"
      "[semisup]\nlabeled_subjects = [1, 2]\n");
  const auto text = to_toml(c);
  auto back = parse_config(text);
  EXPECT_EQ(to_toml(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.viewmaker.budget.p, NormOrder::kL2);
  EXPECT_DOUBLE_EQ(back.expert.image.flip_prob, 0.25);
  EXPECT_EQ(back.semisup.labeled_subjects, (std::vector<int64_t>{1, 2}));

  auto other = c;
  other.seed = 43;
  EXPECT_NE(config_hash(other), config_hash(c));
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Config, LoadFromFile) {
  auto dir = viewcraft::testing::temp_dir("config");
  std::ofstream(dir / "a.toml") << "name = \"file\"\n[training]\nepochs = 3\n";
  auto c = load_config(dir / "a.toml");
  EXPECT_EQ(c.name, "file");
  EXPECT_EQ(c.training.epochs, 3);
  EXPECT_THROW(load_config(dir / "missing.toml"), IOFailure);
}

TEST(Config, ReferenceConfigsParse) {
  const std::filesystem::path dir = VIEWCRAFT_SOURCE_DIR "/configs";
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".toml") continue;
    ++count;
    EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
  }
  EXPECT_GE(count, 10);
}

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "support/oracles.hpp"
#include "viewcraft/audio.hpp"
#include "viewcraft/corners.hpp"
#include "viewcraft/datasets.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/image_io.hpp"
#include "viewcraft/normalization.hpp"
#include "viewcraft/sensors.hpp"

using namespace viewcraft;
using viewcraft::testing::max_abs_diff;
using viewcraft::testing::temp_dir;
namespace fs = std::filesystem;

// ---- normalization

TEST(Normalization, StandardizesTrainSplit) {
  Rng rng(1);
  auto x = rng.rand({64, 3, 8, 8}) * torch::tensor({2.0f, 0.5f, 7.0f}).view({1, 3, 1, 1}) + 3.0;
  auto stats = compute_norm_stats(x);
  auto y = normalize(x, stats);
  auto mean = y.mean({0, 2, 3});
  auto std = y.transpose(0, 1).reshape({3, -1}).std(1, false);
  EXPECT_LT(mean.abs().max().item<float>(), 1e-4);
  EXPECT_LT((std - 1).abs().max().item<float>(), 1e-3);
  EXPECT_LT(max_abs_diff(denormalize(y, stats), x), 1e-5);
  EXPECT_EQ(normalize(x[0], stats).sizes(), x[0].sizes());
}

TEST(Normalization, Errors) {
  auto x = torch::rand({8, 2, 4, 4});
  x.select(1, 1).fill_(0.3f);
  EXPECT_THROW(compute_norm_stats(x), ZeroVariance);
  EXPECT_THROW(compute_norm_stats(torch::zeros({0, 3, 4, 4})), EmptyInput);
  auto stats = compute_norm_stats(torch::rand({8, 3, 4, 4}));
  EXPECT_THROW(normalize(torch::rand({1, 2, 4, 4}), stats), ShapeMismatch);
}

// ---- audio

TEST(LogMel, DeclaredShapes) {
  auto w = Rng(2).randn({150000}) * 0.1;
  Rng rng(3);
  auto small = waveform_to_logmel(w, SpectrogramSpec::small(), TruncateMode::kEval, rng);
  EXPECT_EQ(small.sizes(), (std::vector<int64_t>{1, 64, 64}));
  auto large = waveform_to_logmel(w, SpectrogramSpec::large(), TruncateMode::kEval, rng);
  EXPECT_EQ(large.sizes(), (std::vector<int64_t>{1, 112, 112}));
  EXPECT_TRUE(torch::isfinite(large).all().item<bool>());
  EXPECT_EQ(SpectrogramSpec::small().hop, 2360);
  EXPECT_EQ(SpectrogramSpec::small().fft_window, 64);
  EXPECT_EQ(SpectrogramSpec::large().hop, 672);
  EXPECT_EQ(SpectrogramSpec::large().fft_window, 112);
}

TEST(LogMel, ShortInputsArePaddedAndModesBehave) {
  Rng data(4);
  auto shortw = data.randn({20000});
  Rng rng(5);
  EXPECT_EQ(waveform_to_logmel(shortw, SpectrogramSpec::small(), TruncateMode::kTrain, rng).sizes(),
            (std::vector<int64_t>{1, 64, 64}));

  auto longw = data.randn({200000});
  Rng e1(6), e2(7);
  EXPECT_TRUE(torch::equal(waveform_to_logmel(longw, SpectrogramSpec::small(), TruncateMode::kEval, e1),
                           waveform_to_logmel(longw, SpectrogramSpec::small(), TruncateMode::kEval, e2)));
  // Train mode picks head or tail; over several seeds both must appear.
  std::set<std::string> seen;
  for (uint64_t s = 0; s < 16; ++s) {
    Rng r(s);
    auto out = waveform_to_logmel(longw, SpectrogramSpec::small(), TruncateMode::kTrain, r);
    Rng unused(0);
    auto head = waveform_to_logmel(longw.narrow(0, 0, 150000), SpectrogramSpec::small(),
                                   TruncateMode::kEval, unused);
    seen.insert(torch::equal(out, head) ? "head" : "tail");
  }
  EXPECT_EQ(seen.size(), 2u);
  Rng r(8);
  EXPECT_THROW(waveform_to_logmel(torch::zeros({0}), SpectrogramSpec::small(), TruncateMode::kEval, r),
               EmptyInput);
}

TEST(LogMel, FilterbankTriangles) {
  auto fb = mel_filterbank(201, 64, 16000, 0, 8000);
  EXPECT_EQ(fb.sizes(), (std::vector<int64_t>{201, 64}));
  EXPECT_GE(fb.min().item<float>(), 0.0f);
  EXPECT_LE(fb.max().item<float>(), 1.0f + 1e-6f);
  // Every band has some support.
  EXPECT_GT(fb.sum(0).min().item<float>(), 0.0f);
}

TEST(Wav, RoundTrip) {
  auto dir = temp_dir("wav");
  auto w = (Rng(9).rand({1000}) * 1.8 - 0.9);
  write_wav(dir / "a.wav", w, 16000);
  auto back = read_wav(dir / "a.wav");
  EXPECT_EQ(back.sample_rate, 16000);
  ASSERT_EQ(back.samples.numel(), 1000);
  EXPECT_LT(max_abs_diff(back.samples, w), 1.0 / 32767 + 1e-6);
  EXPECT_THROW(read_wav(dir / "missing.wav"), IOFailure);
}

// ---- sensors

TEST(Sensors, WindowShapeAndFloor) {
  SensorWindowSpec spec;
  EXPECT_EQ(spec.window_samples(), 1000);
  SensorRecording rec;
  rec.samples = Rng(10).randn({1500, 52});
  rec.samples.select(1, 7).zero_();
  rec.activity = torch::ones({1500}, torch::kInt64);
  auto s = sensor_window_to_spectrograms(rec, 200, spec);
  EXPECT_EQ(s.sizes(), (std::vector<int64_t>{52, 32, 32}));
  const double floor = std::log(1e-6);
  EXPECT_GE(s.min().item<double>(), floor - 1e-5);
  EXPECT_LT((s[7] - floor).abs().max().item<double>(), 1e-5);
  EXPECT_THROW(sensor_window_to_spectrograms(rec, 501, spec), WindowOutOfBounds);
  EXPECT_THROW(sensor_window_to_spectrograms(rec, -1, spec), WindowOutOfBounds);
}

TEST(Sensors, LinearInterpolation) {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  auto x = torch::tensor({{1.0f, nan}, {nan, nan}, {3.0f, 5.0f}, {nan, nan}});
  auto y = interpolate_missing(x);
  EXPECT_FLOAT_EQ(y[1][0].item<float>(), 2.0f);
  EXPECT_FLOAT_EQ(y[3][0].item<float>(), 3.0f);  // trailing gap holds
  EXPECT_FLOAT_EQ(y[0][1].item<float>(), 5.0f);  // leading gap holds
  auto all_missing = torch::full({3, 1}, nan);
  EXPECT_TRUE(torch::equal(interpolate_missing(all_missing), torch::zeros({3, 1})));
}

TEST(Sensors, HeartRateUpsampling) {
  // A channel sampled every 11th step interpolates linearly in between.
  const float nan = std::numeric_limits<float>::quiet_NaN();
  auto x = torch::full({23, 1}, nan);
  x[0][0] = 60.0f;
  x[11][0] = 71.0f;
  x[22][0] = 60.0f;
  auto y = interpolate_missing(x);
  for (int64_t t = 0; t <= 11; ++t) EXPECT_NEAR(y[t][0].item<float>(), 60.0f + t, 1e-4);
}

TEST(Sensors, WindowsStayInsideSegments) {
  SensorWindowSpec spec;
  SensorRecording rec;
  rec.samples = torch::zeros({5000, 52});
  rec.activity = torch::zeros({5000}, torch::kInt64);
  rec.activity.narrow(0, 100, 1500).fill_(1);
  rec.activity.narrow(0, 1600, 800).fill_(2);   // too short for a window
  rec.activity.narrow(0, 2500, 2400).fill_(4);
  auto segs = activity_segments({rec}, spec.window_samples());
  ASSERT_EQ(segs.size(), 2u);
  Rng rng(11);
  auto windows = sample_sensor_windows({rec}, spec, 200, rng);
  ASSERT_EQ(windows.size(), 200u);
  std::set<int64_t> acts;
  for (const auto& w : windows) {
    acts.insert(w.activity);
    auto span = rec.activity.narrow(0, w.start, 1000);
    EXPECT_TRUE((span == w.activity).all().item<bool>());
  }
  EXPECT_EQ(acts, (std::set<int64_t>{1, 4}));
  SensorRecording idle = rec;
  idle.activity = torch::zeros({5000}, torch::kInt64);
  EXPECT_THROW(sample_sensor_windows({idle}, spec, 1, rng), DatasetTooSmall);
}

TEST(Sensors, Pamap2ClassIds) {
  std::set<int64_t> ids;
  for (int64_t a : {1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24}) ids.insert(pamap2_class_id(a));
  EXPECT_EQ(ids.size(), 12u);
  EXPECT_EQ(*ids.begin(), 0);
  EXPECT_EQ(*ids.rbegin(), 11);
  EXPECT_EQ(pamap2_class_id(0), -1);
  EXPECT_EQ(pamap2_class_id(9), -1);
}

namespace {

void write_pamap2_file(const fs::path& file, int64_t rows, uint64_t seed) {
  Rng rng(seed);
  std::ofstream out(file);
  for (int64_t t = 0; t < rows; ++t) {
    const int activity = t < rows / 2 ? 1 : 4;
    out << t * 0.01 << " " << activity << " " << (t % 11 == 0 ? "80" : "NaN");
    for (int c = 0; c < 51; ++c) {
      if (c == 5 && t % 97 == 3) {
        out << " NaN";
      } else {
        out << " " << std::sin(0.01 * t * (c + 1)) + rng.uniform(-0.1, 0.1);
      }
    }
    out << "\n";
  }
}

}  // namespace

TEST(Datasets, Pamap2FromFiles) {
  auto root = temp_dir("pamap2");
  fs::create_directories(root / "PAMAP2_Dataset" / "Protocol");
  write_pamap2_file(root / "PAMAP2_Dataset" / "Protocol" / "subject101.dat", 4000, 1);
  write_pamap2_file(root / "PAMAP2_Dataset" / "Protocol" / "subject105.dat", 3000, 2);
  auto rec = read_pamap2_subject(root / "PAMAP2_Dataset" / "Protocol" / "subject101.dat", 1);
  EXPECT_EQ(rec.samples.sizes(), (std::vector<int64_t>{4000, 52}));
  EXPECT_FALSE(torch::isnan(rec.samples).any().item<bool>());
  EXPECT_NEAR(rec.samples[5][0].item<float>(), 80.0f, 1e-4);

  DatasetSpec spec;
  spec.kind = "pamap2";
  spec.train_subjects = {1};
  spec.val_subjects = {5};
  spec.train_windows = 6;
  spec.val_windows = 3;
  auto bundle = load_dataset(spec, 0, root);
  EXPECT_EQ(bundle.modality, Modality::kSpectrogram);
  EXPECT_EQ(bundle.train.inputs.sizes(), (std::vector<int64_t>{6, 52, 32, 32}));
  EXPECT_EQ(bundle.val.inputs.sizes(), (std::vector<int64_t>{3, 52, 32, 32}));
  EXPECT_EQ(bundle.num_classes, 12);
  EXPECT_TRUE(bundle.input_norm.has_value());
  EXPECT_FALSE(bundle.encoder_norm.has_value());
  EXPECT_TRUE((bundle.train.subjects == 1).all().item<bool>());
  EXPECT_TRUE((bundle.val.subjects == 5).all().item<bool>());
  auto again = load_dataset(spec, 0, root);
  EXPECT_TRUE(torch::equal(again.train.inputs, bundle.train.inputs));

  spec.train_subjects = {2};
  EXPECT_THROW(load_dataset(spec, 0, root), IOFailure);
}

// ---- corners

TEST(Corners, SelfSamplerIsIdentity) {
  auto images = Rng(12).rand({6, 3, 32, 32});
  Rng rng(13);
  auto out = make_corners_dataset(images, rng, self_sampler());
  EXPECT_TRUE(torch::equal(out.images, images));
}

TEST(Corners, ProvenanceAndDeterminism) {
  auto images = Rng(14).rand({20, 3, 32, 32});
  Rng a(15), b(15);
  auto out = make_corners_dataset(images, a);
  auto again = make_corners_dataset(images, b);
  EXPECT_TRUE(torch::equal(out.images, again.images));
  EXPECT_EQ(out.images.sizes(), images.sizes());
  EXPECT_GE(out.images.min().item<float>(), images.min().item<float>());
  EXPECT_LE(out.images.max().item<float>(), images.max().item<float>());
  auto d = out.donors.accessor<int64_t, 2>();
  for (int64_t i = 0; i < 20; ++i) {
    for (int q = 0; q < 4; ++q) {
      EXPECT_NE(d[i][q], i);
      const int64_t r = (q / 2) * 16, c = (q % 2) * 16;
      EXPECT_TRUE(torch::equal(out.images[i].slice(1, r, r + 16).slice(2, c, c + 16),
                               images[d[i][q]].slice(1, r, r + 16).slice(2, c, c + 16)));
    }
  }
  auto audit = audit_corners(out.images, images);
  EXPECT_EQ(audit.quadrants, 80);
  EXPECT_EQ(audit.traced, 80);
  EXPECT_EQ(audit.traced_to_original, 0);
  auto self_audit = audit_corners(images, images);
  EXPECT_EQ(self_audit.traced_to_original, 80);
}

TEST(Corners, Errors) {
  Rng rng(16);
  EXPECT_THROW(make_corners_dataset(torch::rand({4, 3, 32, 32}), rng), DatasetTooSmall);
  EXPECT_THROW(make_corners_dataset(torch::rand({6, 3, 31, 32}), rng), ShapeMismatch);
}

// ---- image io, manifests, loaders

TEST(ImageIo, PnmRoundTrip) {
  auto dir = temp_dir("pnm");
  auto rgb = torch::round(Rng(17).rand({3, 5, 7}) * 255) / 255;
  write_pnm(dir / "a.ppm", rgb);
  EXPECT_TRUE(torch::equal(read_pnm(dir / "a.ppm"), rgb));
  auto gray = torch::round(Rng(18).rand({1, 4, 4}) * 255) / 255;
  write_pnm(dir / "g.pgm", gray);
  EXPECT_TRUE(torch::equal(read_pnm(dir / "g.pgm"), gray));
  auto u8 = to_uint8(torch::tensor({{{0.0f, 0.5f, 1.0f}}}));
  EXPECT_EQ(u8[0][0][1].item<uint8_t>(), 128);
  EXPECT_THROW(read_pnm(dir / "missing.ppm"), IOFailure);
}

TEST(ImageIo, CifarBinary) {
  auto dir = temp_dir("cifar");
  auto write_batch = [&](const fs::path& f, int n, int offset) {
    std::ofstream out(f, std::ios::binary);
    for (int i = 0; i < n; ++i) {
      out.put(static_cast<char>((i + offset) % 10));
      for (int k = 0; k < 3072; ++k) out.put(static_cast<char>((k + i) % 256));
    }
  };
  write_batch(dir / "data_batch_1.bin", 12, 0);
  write_batch(dir / "test_batch.bin", 5, 3);
  auto b = read_cifar10_batch(dir / "data_batch_1.bin", 10);
  EXPECT_EQ(b.images.sizes(), (std::vector<int64_t>{10, 3, 32, 32}));
  EXPECT_EQ(b.labels[4].item<int64_t>(), 4);
  EXPECT_NEAR(b.images[1][0][0][0].item<float>(), 1.0f / 255, 1e-7);
  EXPECT_NEAR(b.images[0][1][0][0].item<float>(), (1024 % 256) / 255.0f, 1e-7);

  DatasetSpec spec;
  spec.kind = "cifar10";
  spec.path = dir.string();
  spec.train_limit = 12;
  auto bundle = load_dataset(spec, 0);
  EXPECT_EQ(bundle.train.size(), 12);
  EXPECT_EQ(bundle.val.size(), 5);
  EXPECT_EQ(bundle.val.labels[0].item<int64_t>(), 3);
  EXPECT_TRUE(bundle.encoder_norm.has_value());
}

TEST(Manifest, RoundTripAndImageLoader) {
  auto dir = temp_dir("manifest");
  fs::create_directories(dir / "img");
  std::vector<ManifestRecord> records;
  Rng rng(19);
  for (int i = 0; i < 8; ++i) {
    const std::string name = "img/" + std::to_string(i) + ".ppm";
    write_pnm(dir / name, torch::round(rng.rand({3, 8, 8}) * 255) / 255);
    records.push_back({name, i % 2, i < 6 ? "train" : "test", 100 + i});
  }
  write_manifest(dir / "manifest.jsonl", records);
  auto back = read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(back.size(), 8u);
  EXPECT_EQ(back[3].subject_id, 103);
  EXPECT_EQ(back[7].split, "test");
  EXPECT_EQ(fs::path(back[0].path), dir / "img/0.ppm");

  DatasetSpec spec;
  spec.kind = "image_manifest";
  spec.path = (dir / "manifest.jsonl").string();
  auto bundle = load_dataset(spec, 0);
  EXPECT_EQ(bundle.train.size(), 6);
  EXPECT_EQ(bundle.val.size(), 2);
  EXPECT_EQ(bundle.num_classes, 2);
  EXPECT_EQ(bundle.train.subjects[2].item<int64_t>(), 102);
}

TEST(Manifest, AudioLoaderStandardizesAndCaches) {
  auto dir = temp_dir("audio");
  std::vector<ManifestRecord> records;
  Rng rng(20);
  for (int i = 0; i < 6; ++i) {
    const std::string name = std::to_string(i) + ".wav";
    write_wav(dir / name, rng.randn({16000 + 4000 * i}) * 0.2, 16000);
    records.push_back({name, i % 3, i < 4 ? "train" : "val", 0});
  }
  write_manifest(dir / "manifest.jsonl", records);
  DatasetSpec spec;
  spec.kind = "audio_manifest";
  spec.path = (dir / "manifest.jsonl").string();
  spec.cache_dir = (dir / "cache").string();
  fs::create_directories(dir / "cache");
  auto bundle = load_dataset(spec, 3);
  EXPECT_EQ(bundle.train.inputs.sizes(), (std::vector<int64_t>{4, 1, 64, 64}));
  EXPECT_EQ(bundle.val.size(), 2);
  EXPECT_NEAR(bundle.train.inputs.mean().item<double>(), 0.0, 1e-4);
  EXPECT_TRUE(bundle.input_norm.has_value());
  EXPECT_FALSE(fs::is_empty(dir / "cache"));
  auto cached = load_dataset(spec, 3);
  EXPECT_TRUE(torch::equal(cached.train.inputs, bundle.train.inputs));
  EXPECT_NE(content_key(dir / "0.wav", "a"), content_key(dir / "0.wav", "b"));
  EXPECT_NE(content_key(dir / "0.wav", "a"), content_key(dir / "1.wav", "a"));
}

TEST(Datasets, SyntheticIsDeterministicAndClassStructured) {
  DatasetSpec spec;
  spec.num_train = 64;
  spec.num_val = 16;
  spec.num_classes = 4;
  auto a = load_dataset(spec, 5);
  auto b = load_dataset(spec, 5);
  EXPECT_TRUE(torch::equal(a.train.inputs, b.train.inputs));
  EXPECT_FALSE(torch::equal(a.train.inputs.narrow(0, 0, 16), a.val.inputs));
  EXPECT_GE(a.train.inputs.min().item<float>(), 0.0f);
  EXPECT_LE(a.train.inputs.max().item<float>(), 1.0f);
  // Nearest class mean recovers the labels far above chance.
  auto flat = a.train.inputs.view({64, -1});
  std::vector<torch::Tensor> means;
  for (int64_t c = 0; c < 4; ++c) means.push_back(flat.index({a.train.labels == c}).mean(0));
  auto m = torch::stack(means);
  auto pred = torch::cdist(a.val.inputs.view({16, -1}), m).argmin(1);
  EXPECT_GE((pred == a.val.labels).sum().item<int64_t>(), 14);
}

TEST(Datasets, UnknownKind) {
  DatasetSpec spec;
  spec.kind = "imagenet";
  EXPECT_THROW(load_dataset(spec, 0), ConfigInvalid);
  spec.kind = "image_manifest";
  spec.path = "/nonexistent/manifest.jsonl";
  EXPECT_THROW(load_dataset(spec, 0), IOFailure);
}

TEST(Rng, WorkerSeedsAndForks) {
  EXPECT_NE(worker_seed(1, 0, 0), worker_seed(1, 1, 0));
  EXPECT_NE(worker_seed(1, 0, 0), worker_seed(1, 0, 1));
  EXPECT_EQ(worker_seed(1, 2, 3), worker_seed(1, 2, 3));
  Rng a(7);
  auto state = a.state();
  const double x = a.uniform();
  a.set_state(state);
  EXPECT_EQ(a.uniform(), x);
  EXPECT_FALSE(torch::equal(a.fork(1).rand({4}), a.fork(2).rand({4})));
  EXPECT_TRUE(torch::equal(a.fork(1).rand({4}), Rng(7).fork(1).rand({4})));
}

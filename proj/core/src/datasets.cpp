#include "viewcraft/datasets.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "viewcraft/checkpoint.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/image_io.hpp"
#include "viewcraft/sensors.hpp"

namespace viewcraft {

namespace fs = std::filesystem;

Dataset Dataset::subset(const torch::Tensor& indices) const {
  auto idx = indices.to(torch::kInt64);
  Dataset d;
  d.inputs = inputs.index_select(0, idx);
  d.labels = labels.index_select(0, idx);
  d.subjects = subjects.index_select(0, idx);
  if (!waveforms.empty()) {
    auto a = idx.accessor<int64_t, 1>();
    for (int64_t i = 0; i < idx.size(0); ++i) d.waveforms.push_back(waveforms[a[i]]);
  }
  return d;
}

fs::path default_data_root() {
  if (const char* env = std::getenv("VIEWCRAFT_DATA_DIR"); env && *env) return env;
  return "data";
}

fs::path resolve_data_path(const std::string& path, const fs::path& root) {
  fs::path p(path);
  return p.is_absolute() ? p : root / p;
}

Dataset synthetic_images(int64_t count, int64_t num_classes, int64_t size, double noise_std,
                         uint64_t prototype_seed, uint64_t sample_seed) {
  Rng proto_rng(prototype_seed);
  const int64_t coarse = std::max<int64_t>(2, size / 8);
  auto protos = proto_rng.rand({num_classes, 3, coarse, coarse}) * 0.6 + 0.2;
  protos = torch::nn::functional::interpolate(
      protos, torch::nn::functional::InterpolateFuncOptions()
                  .size(std::vector<int64_t>{size, size})
                  .mode(torch::kBilinear)
                  .align_corners(false));

  Rng rng(sample_seed);
  Dataset d;
  d.labels = torch::arange(count, torch::kInt64).remainder(num_classes);
  d.labels = d.labels.index_select(0, rng.randperm(count));
  d.inputs = (protos.index_select(0, d.labels) + noise_std * rng.randn({count, 3, size, size}))
                 .clamp(0.0, 1.0)
                 .contiguous();
  d.subjects = torch::zeros({count}, torch::kInt64);
  return d;
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IOFailure("cannot open manifest " + path.string());
  }
  std::vector<ManifestRecord> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.path = j.at("path").get<std::string>();
      r.label = j.value("label", int64_t{0});
      r.split = j.value("split", std::string("train"));
      r.subject_id = j.value("subject_id", int64_t{0});
      fs::path p(r.path);
      if (p.is_relative()) r.path = (path.parent_path() / p).string();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IOFailure(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) {
    throw IOFailure("cannot write manifest " + path.string());
  }
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["label"] = r.label;
    j["split"] = r.split;
    j["subject_id"] = r.subject_id;
    out << j.dump() << "\n";
  }
}

Dataset load_image_records(const std::vector<ManifestRecord>& records) {
  if (records.empty()) {
    throw EmptyInput("no images in split");
  }
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels, subjects;
  for (const auto& r : records) {
    images.push_back(read_pnm(r.path));
    if (images.back().sizes() != images.front().sizes()) {
      throw ShapeMismatch("image " + r.path + " differs in shape from the first image");
    }
    labels.push_back(r.label);
    subjects.push_back(r.subject_id);
  }
  Dataset d;
  d.inputs = torch::stack(images);
  d.labels = torch::tensor(labels, torch::kInt64);
  d.subjects = torch::tensor(subjects, torch::kInt64);
  return d;
}

std::string content_key(const fs::path& file, const std::string& transform) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IOFailure("cannot open " + file.string());
  }
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) mix(static_cast<unsigned char>(buf[i]));
  }
  for (unsigned char c : transform) mix(c);
  return hex64(h);
}

namespace {

std::vector<ManifestRecord> split_records(const std::vector<ManifestRecord>& all,
                                          const std::string& split, int64_t limit) {
  std::vector<ManifestRecord> out;
  for (const auto& r : all) {
    if (r.split == split) out.push_back(r);
  }
  if (limit >= 0 && static_cast<int64_t>(out.size()) > limit) out.resize(limit);
  return out;
}

/// "val" when present, otherwise "test".
std::string eval_split_name(const std::vector<ManifestRecord>& all) {
  for (const auto& r : all) {
    if (r.split == "val") return "val";
  }
  return "test";
}

int64_t count_classes(const Dataset& a, const Dataset& b, int64_t floor) {
  int64_t m = floor;
  for (const auto* d : {&a, &b}) {
    if (d->size() > 0) m = std::max(m, d->labels.max().item<int64_t>() + 1);
  }
  return m;
}

/// Statistics over at most `limit` randomly chosen training examples.
NormStats sampled_stats(const torch::Tensor& inputs, int64_t limit, uint64_t seed) {
  if (inputs.size(0) <= limit) return compute_norm_stats(inputs);
  Rng rng(mix_seed(seed, 0x6e6f726dull));
  auto idx = rng.randperm(inputs.size(0)).narrow(0, 0, limit);
  return compute_norm_stats(inputs.index_select(0, idx));
}

DatasetBundle load_cifar10(const DatasetSpec& spec, uint64_t seed, const fs::path& root) {
  fs::path dir = resolve_data_path(spec.path.empty() ? "cifar-10-batches-bin" : spec.path, root);
  if (!fs::exists(dir / "data_batch_1.bin") && fs::exists(dir / "cifar-10-batches-bin")) {
    dir /= "cifar-10-batches-bin";
  }
  std::vector<torch::Tensor> xs, ys;
  int64_t remaining = spec.train_limit;
  for (int b = 1; b <= 5 && remaining != 0; ++b) {
    auto batch = read_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), remaining);
    xs.push_back(batch.images);
    ys.push_back(batch.labels);
    if (remaining > 0) remaining -= batch.images.size(0);
  }
  auto test = read_cifar10_batch(dir / "test_batch.bin", spec.val_limit);
  DatasetBundle bundle;
  bundle.train.inputs = torch::cat(xs);
  bundle.train.labels = torch::cat(ys);
  bundle.train.subjects = torch::zeros({bundle.train.size()}, torch::kInt64);
  bundle.val.inputs = test.images;
  bundle.val.labels = test.labels;
  bundle.val.subjects = torch::zeros({bundle.val.size()}, torch::kInt64);
  bundle.num_classes = 10;
  return bundle;
}

DatasetBundle load_image_manifest(const DatasetSpec& spec, const fs::path& root) {
  auto records = read_manifest(resolve_data_path(spec.path, root));
  DatasetBundle bundle;
  bundle.train = load_image_records(split_records(records, "train", spec.train_limit));
  auto val = split_records(records, eval_split_name(records), spec.val_limit);
  if (!val.empty()) bundle.val = load_image_records(val);
  bundle.num_classes = count_classes(bundle.train, bundle.val, 2);
  return bundle;
}

torch::Tensor cached_logmel(const fs::path& file, const SpectrogramSpec& spec, bool keep_tail,
                            const std::string& cache_dir) {
  std::ostringstream desc;
  desc << "logmel:" << spec.max_frames << ":" << spec.hop << ":" << spec.fft_window << ":"
       << spec.n_fft << ":" << spec.n_mels << ":" << spec.sample_rate << ":" << spec.mel << ":"
       << spec.power_to_db << ":" << (keep_tail ? "tail" : "head");
  fs::path cache_file;
  if (!cache_dir.empty()) {
    cache_file = fs::path(cache_dir) / (content_key(file, desc.str()) + ".pt");
    if (fs::exists(cache_file)) return Archive::load(cache_file).tensor("spectrogram");
  }
  auto w = read_wav(file).samples;
  if (keep_tail && w.size(0) > spec.max_frames) {
    w = w.narrow(0, w.size(0) - spec.max_frames, spec.max_frames);
  }
  Rng unused(0);
  auto s = waveform_to_logmel(w, spec, TruncateMode::kEval, unused);
  if (!cache_file.empty()) {
    Archive a;
    a.put("spectrogram", s);
    a.save(cache_file);
  }
  return s;
}

Dataset load_audio_split(const std::vector<ManifestRecord>& records, const SpectrogramSpec& spec,
                         bool train, Rng& rng, const DatasetSpec& ds, bool keep_waveforms) {
  if (records.empty()) {
    throw EmptyInput("no audio files in split");
  }
  std::vector<torch::Tensor> specs;
  std::vector<int64_t> labels, subjects;
  Dataset d;
  for (const auto& r : records) {
    // Training inputs keep a random end of long recordings; eval keeps the head.
    const bool keep_tail = train && rng.bernoulli(0.5);
    specs.push_back(cached_logmel(r.path, spec, keep_tail, ds.cache_dir));
    labels.push_back(r.label);
    subjects.push_back(r.subject_id);
    if (keep_waveforms) d.waveforms.push_back(read_wav(r.path).samples);
  }
  d.inputs = torch::stack(specs);
  d.labels = torch::tensor(labels, torch::kInt64);
  d.subjects = torch::tensor(subjects, torch::kInt64);
  return d;
}

DatasetBundle load_audio_manifest(const DatasetSpec& spec, uint64_t seed, const fs::path& root,
                                  const LoadOptions& options) {
  auto records = read_manifest(resolve_data_path(spec.path, root));
  DatasetBundle bundle;
  bundle.modality = Modality::kSpectrogram;
  bundle.spectrogram = spec.spectrogram == "large" ? SpectrogramSpec::large()
                                                   : SpectrogramSpec::small();
  Rng rng(mix_seed(seed, 0x61756469ull));
  bundle.train = load_audio_split(split_records(records, "train", spec.train_limit),
                                  bundle.spectrogram, true, rng, spec, options.keep_waveforms);
  auto val = split_records(records, eval_split_name(records), spec.val_limit);
  if (!val.empty()) {
    bundle.val = load_audio_split(val, bundle.spectrogram, false, rng, spec, false);
  }
  bundle.num_classes = count_classes(bundle.train, bundle.val, 2);
  return bundle;
}

Dataset pamap2_windows(const std::vector<SensorRecording>& recs, const SensorWindowSpec& spec,
                       int64_t count, Rng& rng) {
  Dataset d;
  if (count == 0) return d;
  auto windows = sample_sensor_windows(recs, spec, count, rng);
  std::vector<torch::Tensor> specs;
  std::vector<int64_t> labels, subjects;
  for (const auto& w : windows) {
    specs.push_back(sensor_window_to_spectrograms(recs[w.recording], w.start, spec));
    labels.push_back(pamap2_class_id(w.activity));
    subjects.push_back(recs[w.recording].subject);
  }
  d.inputs = torch::stack(specs);
  d.labels = torch::tensor(labels, torch::kInt64);
  d.subjects = torch::tensor(subjects, torch::kInt64);
  return d;
}

std::vector<SensorRecording> read_pamap2_subjects(const fs::path& dir,
                                                  const std::vector<int64_t>& subjects) {
  std::vector<SensorRecording> recs;
  for (int64_t s : subjects) {
    fs::path file = dir / ("subject" + std::to_string(100 + s) + ".dat");
    if (!fs::exists(file) && fs::exists(dir / "Protocol")) {
      file = dir / "Protocol" / ("subject" + std::to_string(100 + s) + ".dat");
    }
    auto rec = read_pamap2_subject(file, s);
    // Activities outside the twelve protocol classes count as transient.
    auto a = rec.activity.accessor<int64_t, 1>();
    for (int64_t i = 0; i < rec.activity.size(0); ++i) {
      if (pamap2_class_id(a[i]) < 0) a[i] = 0;
    }
    recs.push_back(std::move(rec));
  }
  return recs;
}

DatasetBundle load_pamap2(const DatasetSpec& spec, uint64_t seed, const fs::path& root) {
  const fs::path dir = resolve_data_path(spec.path.empty() ? "PAMAP2_Dataset" : spec.path, root);
  SensorWindowSpec wspec;
  DatasetBundle bundle;
  bundle.modality = Modality::kSpectrogram;
  bundle.num_classes = kPamap2NumClasses;
  Rng rng(mix_seed(seed, 0x70616d61ull));
  bundle.train = pamap2_windows(read_pamap2_subjects(dir, spec.train_subjects), wspec,
                                spec.train_windows, rng);
  if (spec.val_windows > 0 && !spec.val_subjects.empty()) {
    bundle.val = pamap2_windows(read_pamap2_subjects(dir, spec.val_subjects), wspec,
                                spec.val_windows, rng);
  }
  return bundle;
}

}  // namespace

DatasetBundle load_dataset(const DatasetSpec& spec, uint64_t seed, const fs::path& data_root,
                           const LoadOptions& options) {
  DatasetBundle bundle;
  if (spec.kind == "synthetic_images") {
    const uint64_t proto = mix_seed(seed, 0x70726f74ull);
    bundle.train = synthetic_images(spec.num_train, spec.num_classes, spec.image_size,
                                    spec.noise_std, proto, mix_seed(seed, 1));
    if (spec.num_val > 0) {
      bundle.val = synthetic_images(spec.num_val, spec.num_classes, spec.image_size,
                                    spec.noise_std, proto, mix_seed(seed, 2));
    }
    bundle.num_classes = spec.num_classes;
  } else if (spec.kind == "cifar10") {
    bundle = load_cifar10(spec, seed, data_root);
  } else if (spec.kind == "image_manifest") {
    bundle = load_image_manifest(spec, data_root);
  } else if (spec.kind == "audio_manifest") {
    bundle = load_audio_manifest(spec, seed, data_root, options);
  } else if (spec.kind == "pamap2") {
    bundle = load_pamap2(spec, seed, data_root);
  } else {
    throw ConfigInvalid("unknown dataset kind '" + spec.kind + "'");
  }
  if (bundle.train.size() == 0) {
    throw EmptyInput("training split of '" + spec.kind + "' is empty");
  }

  if (bundle.modality == Modality::kImage) {
    bundle.encoder_norm = compute_norm_stats(bundle.train.inputs);
  } else {
    auto stats = sampled_stats(bundle.train.inputs, spec.norm_samples, seed);
    bundle.train.inputs = normalize(bundle.train.inputs, stats);
    if (bundle.val.size() > 0) bundle.val.inputs = normalize(bundle.val.inputs, stats);
    bundle.input_norm = stats;
  }
  return bundle;
}

}  // namespace viewcraft

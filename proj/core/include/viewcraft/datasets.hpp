#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/types.h>

#include "viewcraft/audio.hpp"
#include "viewcraft/config.hpp"
#include "viewcraft/normalization.hpp"

namespace viewcraft {

enum class Modality { kImage, kSpectrogram };

/// One split held in memory.
struct Dataset {
  /// N x C x H x W. Images are pixels in [0, 1]; spectrograms are already
  /// standardized with the training statistics.
  torch::Tensor inputs;
  torch::Tensor labels;    // N int64
  torch::Tensor subjects;  // N int64, 0 when unknown
  /// Raw waveforms (audio only, when requested) for time-domain views.
  std::vector<torch::Tensor> waveforms;

  int64_t size() const { return inputs.defined() ? inputs.size(0) : 0; }
  Dataset subset(const torch::Tensor& indices) const;
};

struct DatasetBundle {
  Dataset train;
  Dataset val;
  Modality modality = Modality::kImage;
  int64_t num_classes = 0;
  /// Pixel standardization applied just before the encoder (images only).
  std::optional<NormStats> encoder_norm;
  /// Standardization already applied to spectrogram inputs; reused for
  /// spectrograms computed on the fly from waveform views.
  std::optional<NormStats> input_norm;
  SpectrogramSpec spectrogram;

  int64_t channels() const { return train.inputs.size(1); }
};

struct LoadOptions {
  bool keep_waveforms = false;
};

/// $VIEWCRAFT_DATA_DIR, or ./data when unset.
std::filesystem::path default_data_root();
std::filesystem::path resolve_data_path(const std::string& path,
                                        const std::filesystem::path& root);

/// Loads both splits of the dataset described by `spec`. Deterministic in
/// `seed`. Throws IOFailure, EmptyInput, ZeroVariance, ConfigInvalid.
DatasetBundle load_dataset(const DatasetSpec& spec, uint64_t seed,
                           const std::filesystem::path& data_root = default_data_root(),
                           const LoadOptions& options = {});

/// Class-structured synthetic images: each class has a smooth random
/// prototype; samples add Gaussian pixel noise and are clamped to [0, 1].
Dataset synthetic_images(int64_t count, int64_t num_classes, int64_t size, double noise_std,
                         uint64_t prototype_seed, uint64_t sample_seed);

/// Line-delimited JSON record {path, label, split, subject_id}.
struct ManifestRecord {
  std::string path;
  int64_t label = 0;
  std::string split = "train";
  int64_t subject_id = 0;
};

/// Relative paths in the result are resolved against the manifest directory.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Images listed in a manifest, in order, as N x C x H x W in [0, 1].
Dataset load_image_records(const std::vector<ManifestRecord>& records);

/// FNV-1a over the file bytes and a description of the transform.
std::string content_key(const std::filesystem::path& file, const std::string& transform);

}  // namespace viewcraft

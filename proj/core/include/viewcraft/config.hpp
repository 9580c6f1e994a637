#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "viewcraft/augment.hpp"
#include "viewcraft/encoder.hpp"
#include "viewcraft/viewmaker.hpp"

namespace viewcraft {

enum class Objective { kSimclr, kInstdisc };
std::string to_string(Objective o);
Objective parse_objective(std::string_view s);

struct OptimizerConfig {
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Where the data comes from. Paths are relative to the data root
/// (VIEWCRAFT_DATA_DIR) unless absolute.
struct DatasetSpec {
  /// synthetic_images | cifar10 | image_manifest | audio_manifest | pamap2
  std::string kind = "synthetic_images";
  std::string path;
  /// Caps on split sizes; negative means everything.
  int64_t train_limit = -1;
  int64_t val_limit = -1;

  // synthetic_images
  int64_t num_train = 512;
  int64_t num_val = 128;
  int64_t num_classes = 10;
  int64_t image_size = 32;
  double noise_std = 0.1;

  // audio_manifest: "small" (64 x 64) or "large" (112 x 112)
  std::string spectrogram = "small";

  // pamap2
  std::vector<int64_t> train_subjects{1, 2, 3, 4, 7, 8, 9};
  std::vector<int64_t> val_subjects{5};
  int64_t train_windows = 10000;
  int64_t val_windows = 2000;

  /// Examples used to estimate spectrogram normalization statistics.
  int64_t norm_samples = 10000;
  /// Spectrogram cache directory ("" disables caching).
  std::string cache_dir;

  bool is_spectral() const { return kind == "audio_manifest" || kind == "pamap2"; }
  /// Channel count implied by the kind (3, 1 or 52).
  int64_t default_channels() const;
};

struct TrainingConfig {
  int64_t batch_size = 256;
  int64_t epochs = 200;
  /// Checkpoint cadence in steps; 0 writes one checkpoint per epoch.
  int64_t checkpoint_every = 0;
  /// Global gradient-norm clip for both networks; 0 disables clipping.
  double grad_clip = 0.0;
};

struct MemoryBankConfig {
  double update_rate = 0.5;
  int64_t num_negatives = 4096;
};

/// Expert view pipeline selection. `kind` is image, spectral, waveform, or
/// auto (image for pixel data, spectral for spectrograms).
struct ExpertConfig {
  std::string kind = "auto";
  ImageExpertPolicy image;
  SpectralMaskPolicy spectral;
  WaveformPolicy waveform;
};

struct LinearEvalConfig {
  OptimizerConfig optimizer{0.01, 0.9, 0.0};
  int64_t batch_size = 128;
  int64_t epochs = 100;
  std::vector<int64_t> lr_drops{60, 80};
  double lr_drop_factor = 0.1;
  /// "pretrain" applies the pretraining view source (frozen) to training
  /// inputs; "none" trains on clean inputs. Validation never uses views.
  std::string train_views = "pretrain";

  void validate() const;
};

struct SemiSupervisedConfig {
  /// Subjects whose labels are available to both arms.
  std::vector<int64_t> labeled_subjects{1};
  OptimizerConfig optimizer{0.03, 0.9, 1e-4};
  int64_t batch_size = 128;
  int64_t patience = 10;
  int64_t max_epochs = 200;
};

struct ExperimentConfig {
  std::string name = "run";
  uint64_t seed = 0;
  ViewSource view_source = ViewSource::kViewmaker;
  Objective objective = Objective::kSimclr;
  double temperature = 0.07;
  EncoderConfig encoder;
  ViewmakerConfig viewmaker;
  OptimizerConfig optimizer;
  OptimizerConfig viewmaker_optimizer;
  TrainingConfig training;
  MemoryBankConfig memory_bank;
  ExpertConfig expert;
  DatasetSpec dataset;
  LinearEvalConfig linear_eval;
  SemiSupervisedConfig semisup;

  bool uses_viewmaker() const;
  /// Throws ConfigInvalid.
  void validate() const;
};

/// Parses a TOML document. Unset fields keep their defaults, except:
///  - input channels follow the dataset kind,
///  - clamping is off for spectrogram datasets,
///  - combined views default to epsilon 0.01,
///  - dct_viewmaker sets the budget domain to dct.
/// Throws ConfigParseError naming the field and line on any problem,
/// including unknown keys.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical TOML rendering; parse_config(to_toml(c)) reproduces c.
std::string to_toml(const ExperimentConfig& config);

/// 64-bit FNV-1a of the canonical rendering.
uint64_t config_hash(const ExperimentConfig& config);
std::string hex64(uint64_t v);

}  // namespace viewcraft

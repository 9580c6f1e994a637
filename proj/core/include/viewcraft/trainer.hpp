#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/optim/sgd.h>

#include "viewcraft/config.hpp"
#include "viewcraft/datasets.hpp"
#include "viewcraft/encoder.hpp"
#include "viewcraft/objectives.hpp"
#include "viewcraft/views.hpp"

namespace viewcraft {

struct StepOptions {
  bool update_encoder = true;
  bool update_viewmaker = true;
};

struct StepMetrics {
  int64_t step = 0;
  double loss = 0.0;
  /// Mean pre-clamp perturbation norm over all views; NaN without perturbations.
  double perturbation_norm = 0.0;
  double encoder_grad_norm = 0.0;
  double viewmaker_grad_norm = 0.0;
  double lr = 0.0;
};

/// Everything needed to continue a pretraining run exactly.
class Trainer {
 public:
  Trainer(ExperimentConfig config, std::shared_ptr<const DatasetBundle> data);

  /// One min-max step on the training examples `indices`: two views per
  /// input, one shared forward pass, encoder descent on L and viewmaker
  /// ascent on L (descent on -L). Throws NonFiniteLoss.
  StepMetrics step(const torch::Tensor& indices, const StepOptions& options = {});

  /// Loss of the current parameters on `indices` with views drawn from `rng`
  /// (train-mode normalization layers), without touching any state.
  double loss_at(const torch::Tensor& indices, Rng rng);

  /// Batches of one epoch, a function of (seed, epoch) only.
  std::vector<torch::Tensor> epoch_batches(int64_t epoch) const;
  int64_t steps_per_epoch() const;

  /// {dir}/encoder.pt, viewmaker.pt, optimizer.pt, config.toml, rng.pt,
  /// state.json and, for instdisc, memory_bank.pt.
  void save(const std::filesystem::path& dir) const;
  /// Throws CheckpointMismatch / IOFailure.
  void load(const std::filesystem::path& dir);

  const ExperimentConfig& config() const { return config_; }
  const DatasetBundle& data() const { return *data_; }
  Encoder& encoder() { return encoder_; }
  Viewmaker& viewmaker() { return viewmaker_; }
  bool has_viewmaker() const { return !viewmaker_.is_empty(); }
  MemoryBank* memory_bank() { return bank_ ? &*bank_ : nullptr; }
  torch::optim::SGD& encoder_optimizer() { return *encoder_opt_; }
  torch::optim::SGD* viewmaker_optimizer() { return viewmaker_opt_.get(); }
  ViewFactory& views() { return *views_; }
  Rng& rng() { return rng_; }
  int64_t step_count() const { return step_; }

 private:
  torch::Tensor compute_loss(const torch::Tensor& indices, Rng& rng, ViewPair* pair_out);

  ExperimentConfig config_;
  std::shared_ptr<const DatasetBundle> data_;
  Encoder encoder_{nullptr};
  Viewmaker viewmaker_{nullptr};
  std::unique_ptr<torch::optim::SGD> encoder_opt_;
  std::unique_ptr<torch::optim::SGD> viewmaker_opt_;
  std::optional<MemoryBank> bank_;
  std::unique_ptr<ViewFactory> views_;
  Rng rng_;
  int64_t step_ = 0;
};

struct PretrainOptions {
  std::filesystem::path run_dir;
  /// Checkpoint directory to continue from (empty: fresh start).
  std::filesystem::path resume;
  /// Stop after this many total steps (negative: run to completion).
  int64_t max_steps = -1;
  /// Called after every step.
  std::function<void(const StepMetrics&)> on_step;
};

struct PretrainResult {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path final_checkpoint;
  std::vector<StepMetrics> metrics;
  int64_t steps = 0;
};

/// Runs config.training.epochs epochs of Trainer::step, writing
/// {run_dir}/step-{n}/ checkpoints and {run_dir}/metrics.jsonl. When
/// resuming, metrics from the checkpoint onward are appended.
PretrainResult pretrain(const ExperimentConfig& config, std::shared_ptr<const DatasetBundle> data,
                        const PretrainOptions& options);

/// Frozen networks from a checkpoint written by Trainer::save.
struct PretrainedModels {
  ExperimentConfig config;
  Encoder encoder{nullptr};
  /// Empty for view sources without a viewmaker.
  Viewmaker viewmaker{nullptr};
  std::filesystem::path dir;
};

/// Accepts a step directory or a run directory (latest step is used).
/// Throws IOFailure for a missing path and CheckpointMismatch.
PretrainedModels load_pretrained(const std::filesystem::path& path);

/// "{dir}/step-{n}" naming helper.
std::filesystem::path step_dir(const std::filesystem::path& run_dir, int64_t step);

/// Latest step-* directory in a run, or empty.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace viewcraft

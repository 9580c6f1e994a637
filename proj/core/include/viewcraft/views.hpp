#pragma once

#include <optional>
#include <vector>

#include <torch/types.h>

#include "viewcraft/config.hpp"
#include "viewcraft/datasets.hpp"
#include "viewcraft/viewmaker.hpp"

namespace viewcraft {

/// Produces views for one configured view source. Views live in the input
/// space of the dataset (pixels in [0, 1] for images, standardized values
/// for spectrograms); `encoder_input` maps them to what the encoder sees.
class ViewFactory {
 public:
  /// `viewmaker` may be null for sources that do not use one.
  ViewFactory(ViewSource source, const ExpertConfig& expert, const PerturbationBudget& noise_budget,
              Viewmaker viewmaker, const DatasetBundle& data);

  ViewSource source() const { return source_; }
  const Viewmaker& viewmaker() const { return viewmaker_; }

  /// One view per example of `batch`. `waveforms`, when given, are the raw
  /// waveforms of the batch (time-domain expert views need them).
  PerturbedView view(const torch::Tensor& batch, Rng& rng,
                     const std::vector<torch::Tensor>* waveforms = nullptr);

  /// Two independent views per example.
  ViewPair pair(const torch::Tensor& batch, Rng& rng,
                const std::vector<torch::Tensor>* waveforms = nullptr);

  /// Pixel standardization for images; identity for spectrograms.
  torch::Tensor encoder_input(const torch::Tensor& views) const;

 private:
  torch::Tensor expert_view(const torch::Tensor& batch, Rng& rng,
                            const std::vector<torch::Tensor>* waveforms);

  ViewSource source_;
  ExpertConfig expert_;
  std::string expert_kind_;
  PerturbationBudget noise_budget_;
  Viewmaker viewmaker_;
  Modality modality_;
  std::optional<NormStats> encoder_norm_;
  std::optional<NormStats> input_norm_;
  SpectrogramSpec spectrogram_;
};

/// Factory for the configured pretraining view source.
ViewFactory make_view_factory(const ExperimentConfig& config, Viewmaker viewmaker,
                              const DatasetBundle& data);

}  // namespace viewcraft

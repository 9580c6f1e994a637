#include "viewcraft/views.hpp"

#include <torch/torch.h>

#include "viewcraft/augment.hpp"
#include "viewcraft/errors.hpp"

namespace viewcraft {

ViewFactory::ViewFactory(ViewSource source, const ExpertConfig& expert,
                         const PerturbationBudget& noise_budget, Viewmaker viewmaker,
                         const DatasetBundle& data)
    : source_(source),
      expert_(expert),
      noise_budget_(noise_budget),
      viewmaker_(std::move(viewmaker)),
      modality_(data.modality),
      encoder_norm_(data.encoder_norm),
      input_norm_(data.input_norm),
      spectrogram_(data.spectrogram) {
  expert_kind_ = expert.kind;
  if (expert_kind_ == "auto") {
    expert_kind_ = modality_ == Modality::kImage ? "image" : "spectral";
  }
  const bool needs_viewmaker = source == ViewSource::kViewmaker ||
                               source == ViewSource::kCombined ||
                               source == ViewSource::kDctViewmaker;
  if (needs_viewmaker && viewmaker_.is_empty()) {
    throw ConfigInvalid("view source '" + to_string(source) + "' needs a viewmaker");
  }
}

torch::Tensor ViewFactory::encoder_input(const torch::Tensor& views) const {
  return encoder_norm_ ? normalize(views, *encoder_norm_) : views;
}

torch::Tensor ViewFactory::expert_view(const torch::Tensor& batch, Rng& rng,
                                       const std::vector<torch::Tensor>* waveforms) {
  if (expert_kind_ == "image") {
    return image_expert_views(batch, expert_.image, rng);
  }
  if (expert_kind_ == "spectral") {
    return spectral_mask_views(batch, expert_.spectral, rng);
  }
  // Time-domain views: crop + noise on the waveform, then the same front end
  // and standardization as the stored inputs.
  if (!waveforms || static_cast<int64_t>(waveforms->size()) != batch.size(0)) {
    throw ConfigInvalid("waveform expert views need the raw waveforms of the batch");
  }
  std::vector<torch::Tensor> out;
  out.reserve(waveforms->size());
  for (const auto& w : *waveforms) {
    auto s = waveform_to_logmel(waveform_view(w, expert_.waveform, rng), spectrogram_,
                                TruncateMode::kTrain, rng);
    out.push_back(input_norm_ ? normalize(s, *input_norm_) : s);
  }
  return torch::stack(out).to(batch.scalar_type());
}

PerturbedView ViewFactory::view(const torch::Tensor& batch, Rng& rng,
                                const std::vector<torch::Tensor>* waveforms) {
  switch (source_) {
    case ViewSource::kNone:
      return {batch, torch::Tensor()};
    case ViewSource::kExpert:
      return {expert_view(batch, rng, waveforms), torch::Tensor()};
    case ViewSource::kGaussianNoise:
      return gaussian_noise_view(batch, noise_budget_, rng);
    case ViewSource::kViewmaker:
    case ViewSource::kDctViewmaker:
      return generate_view(viewmaker_, batch, rng);
    case ViewSource::kCombined:
      return generate_view(viewmaker_, expert_view(batch, rng, waveforms), rng);
  }
  return {batch, torch::Tensor()};
}

ViewPair ViewFactory::pair(const torch::Tensor& batch, Rng& rng,
                           const std::vector<torch::Tensor>* waveforms) {
  auto a = view(batch, rng, waveforms);
  auto b = view(batch, rng, waveforms);
  return {a.view, b.view, a.perturbation, b.perturbation, source_};
}

ViewFactory make_view_factory(const ExperimentConfig& config, Viewmaker viewmaker,
                              const DatasetBundle& data) {
  return ViewFactory(config.view_source, config.expert, config.viewmaker.budget,
                     std::move(viewmaker), data);
}

}  // namespace viewcraft

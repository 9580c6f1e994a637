#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/nn/modules/linear.h>
#include <torch/types.h>

#include "viewcraft/config.hpp"
#include "viewcraft/corruptions.hpp"
#include "viewcraft/datasets.hpp"
#include "viewcraft/encoder.hpp"
#include "viewcraft/views.hpp"

namespace viewcraft {

/// Percentage of rows whose label is among the k largest logits.
/// Throws KTooLarge when k exceeds the class count (or k < 1).
double topk_accuracy(const torch::Tensor& logits, const torch::Tensor& labels, int64_t k);

/// Multi-label macro F1 (percent): per-attribute F1 of (logit > 0) against
/// binary targets, averaged over attributes. An attribute with no positive
/// predictions and no positive targets scores 100.
double macro_f1(const torch::Tensor& logits, const torch::Tensor& targets);

/// Evaluation output with stable field names.
struct EvalReport {
  struct Row {
    std::string name;
    double value = 0.0;
  };

  std::string task;
  /// Ordered key/value summary (accuracy, clean/corrupted/diff, ...).
  std::vector<Row> summary;
  /// Per-corruption, per-epoch or per-arm breakdown.
  std::vector<Row> table;
  std::map<std::string, std::string> info;

  void set(const std::string& key, double value);
  /// Throws IndexOutOfRange for a missing key.
  double get(const std::string& key) const;
  bool has(const std::string& key) const;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static EvalReport load(const std::filesystem::path& path);
  /// Fixed-width text table for terminals.
  std::string render() const;
};

/// Frozen pre-pool features of `inputs` (encoder-space), evaluated in
/// chunks without gradients.
torch::Tensor prepool_features(Encoder& encoder, const torch::Tensor& inputs,
                               int64_t chunk = 256);

struct LinearEvalResult {
  /// Validation accuracy after the final epoch (no views at validation).
  double val_accuracy = 0.0;
  double train_accuracy = 0.0;
  std::vector<double> epoch_val_accuracy;
  torch::nn::Linear classifier{nullptr};
  EvalReport report;
};

/// Trains one linear layer with softmax cross entropy on frozen pre-pool
/// features. When `train_views` is set, every training batch is replaced by
/// one view from it (the view source stays frozen); validation inputs are
/// used as-is. Neither the encoder nor the view source is modified.
LinearEvalResult linear_eval(Encoder& encoder, ViewFactory& views, bool train_views,
                             const Dataset& train, const Dataset& val, int64_t num_classes,
                             const LinearEvalConfig& config, Rng& rng);

/// Throws CheckpointMismatch when the classifier does not fit the features.
void check_classifier(const torch::nn::Linear& classifier, int64_t feature_dim,
                      int64_t num_classes = -1);

/// Accuracy (percent) of encoder + classifier on inputs in dataset space.
double classifier_accuracy(Encoder& encoder, torch::nn::Linear& classifier, ViewFactory& views,
                           const torch::Tensor& inputs, const torch::Tensor& labels);

/// Clean accuracy, accuracy under each corruption, their mean and
/// corrupted - clean. No parameters are updated.
EvalReport corruption_eval(Encoder& encoder, torch::nn::Linear& classifier, ViewFactory& views,
                           const Dataset& clean, const std::vector<Corruption>& corruptions,
                           Rng& rng);

/// Same report for externally supplied corrupted sets (e.g. from manifests).
EvalReport corruption_eval_sets(Encoder& encoder, torch::nn::Linear& classifier,
                                ViewFactory& views, const Dataset& clean,
                                const std::vector<std::pair<std::string, Dataset>>& corrupted);

struct SemiSupervisedResult {
  int64_t labeled_examples = 0;
  /// Arm (a): randomly initialized encoder + linear layer trained end to end
  /// on the labeled subset until validation accuracy stalls.
  double supervised_accuracy = 0.0;
  int64_t supervised_epochs = 0;
  /// Arm (b): linear evaluation of the pretrained encoder on the same subset.
  double pretrained_accuracy = 0.0;
};

/// Restricts the training split to `subjects` and runs both arms.
/// Throws UnknownSubject for a subject absent from the training split or an
/// empty subject list.
SemiSupervisedResult semi_supervised_compare(const ExperimentConfig& config,
                                             const DatasetBundle& data, Encoder& pretrained,
                                             ViewFactory& views,
                                             const std::vector<int64_t>& subjects, Rng& rng);

/// Indices of training examples whose subject is in `subjects`.
torch::Tensor subject_indices(const Dataset& data, const std::vector<int64_t>& subjects);

}  // namespace viewcraft

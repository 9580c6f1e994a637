#include "viewcraft/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "viewcraft/errors.hpp"
#include "viewcraft/nn_init.hpp"

namespace viewcraft {

namespace fs = std::filesystem;

double topk_accuracy(const torch::Tensor& logits, const torch::Tensor& labels, int64_t k) {
  if (logits.dim() != 2 || labels.dim() != 1 || logits.size(0) != labels.size(0)) {
    throw ShapeMismatch("topk_accuracy expects B x C logits and B labels");
  }
  if (k < 1 || k > logits.size(1)) {
    throw KTooLarge("k = " + std::to_string(k) + " is outside 1.." +
                    std::to_string(logits.size(1)));
  }
  if (logits.size(0) == 0) {
    throw EmptyInput("topk_accuracy of an empty batch");
  }
  auto top = std::get<1>(logits.topk(k, 1));
  auto hit = top.eq(labels.to(torch::kInt64).unsqueeze(1)).any(1);
  return 100.0 * hit.to(torch::kFloat64).mean().item<double>();
}

double macro_f1(const torch::Tensor& logits, const torch::Tensor& targets) {
  if (logits.sizes() != targets.sizes() || logits.dim() != 2) {
    throw ShapeMismatch("macro_f1 expects matching B x A logits and targets");
  }
  auto pred = logits.gt(0).to(torch::kFloat64);
  auto truth = targets.gt(0.5).to(torch::kFloat64);
  auto tp = (pred * truth).sum(0);
  auto fp = (pred * (1 - truth)).sum(0);
  auto fn = ((1 - pred) * truth).sum(0);
  auto denom = 2 * tp + fp + fn;
  auto f1 = torch::where(denom > 0, 2 * tp / denom.clamp_min(1), torch::ones_like(denom));
  return 100.0 * f1.mean().item<double>();
}

void EvalReport::set(const std::string& key, double value) {
  for (auto& r : summary) {
    if (r.name == key) {
      r.value = value;
      return;
    }
  }
  summary.push_back({key, value});
}

bool EvalReport::has(const std::string& key) const {
  return std::any_of(summary.begin(), summary.end(), [&](const Row& r) { return r.name == key; });
}

double EvalReport::get(const std::string& key) const {
  for (const auto& r : summary) {
    if (r.name == key) return r.value;
  }
  throw IndexOutOfRange("report has no field '" + key + "'");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["summary"] = nlohmann::ordered_json::object();
  for (const auto& r : summary) j["summary"][r.name] = r.value;
  j["table"] = nlohmann::ordered_json::array();
  for (const auto& r : table) j["table"].push_back({{"name", r.name}, {"value", r.value}});
  j["info"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : info) j["info"][k] = v;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  EvalReport r;
  try {
    auto j = nlohmann::ordered_json::parse(text);
    r.task = j.value("task", std::string());
    for (const auto& [k, v] : j.at("summary").items()) r.summary.push_back({k, v.get<double>()});
    for (const auto& row : j.at("table")) {
      r.table.push_back({row.at("name").get<std::string>(), row.at("value").get<double>()});
    }
    if (j.contains("info")) {
      for (const auto& [k, v] : j.at("info").items()) r.info[k] = v.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw IOFailure(std::string("malformed eval report: ") + e.what());
  }
  return r;
}

void EvalReport::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    throw IOFailure("cannot write report " + path.string());
  }
  out << to_json() << "\n";
}

EvalReport EvalReport::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IOFailure("cannot open report " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string EvalReport::render() const {
  std::ostringstream os;
  os << "task: " << task << "\n";
  size_t width = 8;
  for (const auto* rows : {&summary, &table}) {
    for (const auto& r : *rows) width = std::max(width, r.name.size());
  }
  os << std::fixed << std::setprecision(2);
  for (const auto& r : summary) {
    os << "  " << std::left << std::setw(static_cast<int>(width)) << r.name << "  "
       << std::right << std::setw(8) << r.value << "\n";
  }
  if (!table.empty()) {
    os << "  " << std::string(width + 10, '-') << "\n";
    for (const auto& r : table) {
      os << "  " << std::left << std::setw(static_cast<int>(width)) << r.name << "  "
         << std::right << std::setw(8) << r.value << "\n";
    }
  }
  return os.str();
}

torch::Tensor prepool_features(Encoder& encoder, const torch::Tensor& inputs, int64_t chunk) {
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < inputs.size(0); i += chunk) {
    const int64_t n = std::min(chunk, inputs.size(0) - i);
    parts.push_back(encode(encoder, inputs.narrow(0, i, n)).prepool);
  }
  return torch::cat(parts);
}

namespace {

double accuracy_of(torch::nn::Linear& classifier, const torch::Tensor& features,
                   const torch::Tensor& labels) {
  torch::NoGradGuard no_grad;
  return topk_accuracy(classifier->forward(features), labels, 1);
}

double lr_at(const LinearEvalConfig& config, int64_t epoch) {
  double lr = config.optimizer.lr;
  for (int64_t m : config.lr_drops) {
    if (epoch >= m) lr *= config.lr_drop_factor;
  }
  return lr;
}

void set_lr(torch::optim::SGD& opt, double lr) {
  for (auto& g : opt.param_groups()) {
    static_cast<torch::optim::SGDOptions&>(g.options()).lr(lr);
  }
}

torch::nn::Linear make_classifier(int64_t in, int64_t classes, Rng& rng) {
  torch::nn::Linear layer(in, classes);
  init_parameters(*layer, rng);
  return layer;
}

}  // namespace

void check_classifier(const torch::nn::Linear& classifier, int64_t feature_dim,
                      int64_t num_classes) {
  const auto& opts = classifier->options;
  if (opts.in_features() != feature_dim) {
    throw CheckpointMismatch("classifier expects " + std::to_string(opts.in_features()) +
                             " features, encoder produces " + std::to_string(feature_dim));
  }
  if (num_classes >= 0 && opts.out_features() != num_classes) {
    throw CheckpointMismatch("classifier has " + std::to_string(opts.out_features()) +
                             " outputs, dataset has " + std::to_string(num_classes) + " classes");
  }
}

LinearEvalResult linear_eval(Encoder& encoder, ViewFactory& views, bool train_views,
                             const Dataset& train, const Dataset& val, int64_t num_classes,
                             const LinearEvalConfig& config, Rng& rng) {
  config.validate();
  if (train.size() == 0 || val.size() == 0) {
    throw EmptyInput("linear evaluation needs nonempty train and validation splits");
  }
  const int64_t dim = prepool_dim(encoder, train.inputs.size(2), train.inputs.size(3));
  LinearEvalResult result;
  Rng init_rng = rng.fork(0x6c696e);
  result.classifier = make_classifier(dim, num_classes, init_rng);
  torch::optim::SGD opt(result.classifier->parameters(),
                        torch::optim::SGDOptions(config.optimizer.lr)
                            .momentum(config.optimizer.momentum)
                            .weight_decay(config.optimizer.weight_decay));

  auto val_features = prepool_features(encoder, views.encoder_input(val.inputs));
  torch::Tensor train_features;
  if (!train_views) train_features = prepool_features(encoder, views.encoder_input(train.inputs));

  const int64_t n = train.size();
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    set_lr(opt, lr_at(config, epoch));
    auto perm = rng.randperm(n);
    for (int64_t i = 0; i < n; i += config.batch_size) {
      auto idx = perm.narrow(0, i, std::min(config.batch_size, n - i));
      torch::Tensor feats;
      if (train_views) {
        auto x = train.inputs.index_select(0, idx);
        std::vector<torch::Tensor> waves;
        if (!train.waveforms.empty()) {
          auto a = idx.accessor<int64_t, 1>();
          for (int64_t k = 0; k < idx.size(0); ++k) waves.push_back(train.waveforms[a[k]]);
        }
        torch::Tensor v;
        {
          torch::NoGradGuard no_grad;
          v = views.view(x, rng, waves.empty() ? nullptr : &waves).view;
        }
        feats = prepool_features(encoder, views.encoder_input(v));
      } else {
        feats = train_features.index_select(0, idx);
      }
      auto loss = torch::nn::functional::cross_entropy(result.classifier->forward(feats),
                                                       train.labels.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    result.epoch_val_accuracy.push_back(accuracy_of(result.classifier, val_features, val.labels));
  }
  result.val_accuracy = result.epoch_val_accuracy.back();
  if (!train_views) {
    result.train_accuracy = accuracy_of(result.classifier, train_features, train.labels);
  } else {
    result.train_accuracy = classifier_accuracy(encoder, result.classifier, views, train.inputs,
                                                train.labels);
  }

  auto& r = result.report;
  r.task = "linear_eval";
  r.set("accuracy", result.val_accuracy);
  r.set("train_accuracy", result.train_accuracy);
  if (num_classes >= 5) {
    torch::NoGradGuard no_grad;
    r.set("top5_accuracy", topk_accuracy(result.classifier->forward(val_features), val.labels, 5));
  }
  r.set("epochs", static_cast<double>(config.epochs));
  r.set("feature_dim", static_cast<double>(dim));
  for (size_t e = 0; e < result.epoch_val_accuracy.size(); ++e) {
    r.table.push_back({"epoch-" + std::to_string(e + 1), result.epoch_val_accuracy[e]});
  }
  r.info["train_views"] = train_views ? to_string(views.source()) : "none";
  return result;
}

double classifier_accuracy(Encoder& encoder, torch::nn::Linear& classifier, ViewFactory& views,
                           const torch::Tensor& inputs, const torch::Tensor& labels) {
  auto feats = prepool_features(encoder, views.encoder_input(inputs));
  check_classifier(classifier, feats.size(1));
  return accuracy_of(classifier, feats, labels);
}

EvalReport corruption_eval(Encoder& encoder, torch::nn::Linear& classifier, ViewFactory& views,
                           const Dataset& clean, const std::vector<Corruption>& corruptions,
                           Rng& rng) {
  std::vector<std::pair<std::string, Dataset>> sets;
  for (const auto& c : corruptions) {
    Dataset d = clean;
    d.inputs = apply_corruption(clean.inputs, c, rng);
    sets.emplace_back(c.name(), std::move(d));
  }
  return corruption_eval_sets(encoder, classifier, views, clean, sets);
}

EvalReport corruption_eval_sets(Encoder& encoder, torch::nn::Linear& classifier,
                                ViewFactory& views, const Dataset& clean,
                                const std::vector<std::pair<std::string, Dataset>>& corrupted) {
  if (corrupted.empty()) {
    throw EmptyInput("corruption evaluation needs at least one corrupted set");
  }
  EvalReport r;
  r.task = "robustness";
  const double clean_acc = classifier_accuracy(encoder, classifier, views, clean.inputs, clean.labels);
  double sum = 0.0;
  for (const auto& [name, d] : corrupted) {
    const double acc = classifier_accuracy(encoder, classifier, views, d.inputs, d.labels);
    r.table.push_back({name, acc});
    sum += acc;
  }
  const double mean = sum / static_cast<double>(corrupted.size());
  r.set("clean", clean_acc);
  r.set("corrupted", mean);
  r.set("diff", mean - clean_acc);
  return r;
}

torch::Tensor subject_indices(const Dataset& data, const std::vector<int64_t>& subjects) {
  if (subjects.empty()) {
    throw UnknownSubject("no labeled subjects given");
  }
  auto s = data.subjects.to(torch::kInt64).contiguous();
  const auto* p = s.data_ptr<int64_t>();
  std::set<int64_t> wanted(subjects.begin(), subjects.end());
  std::set<int64_t> present(p, p + s.numel());
  for (int64_t id : wanted) {
    if (!present.count(id)) {
      throw UnknownSubject("subject " + std::to_string(id) + " has no training examples");
    }
  }
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < s.numel(); ++i) {
    if (wanted.count(p[i])) idx.push_back(i);
  }
  return torch::tensor(idx, torch::kInt64);
}

SemiSupervisedResult semi_supervised_compare(const ExperimentConfig& config,
                                             const DatasetBundle& data, Encoder& pretrained,
                                             ViewFactory& views,
                                             const std::vector<int64_t>& subjects, Rng& rng) {
  const Dataset labeled = data.train.subset(subject_indices(data.train, subjects));
  if (data.val.size() == 0) {
    throw EmptyInput("semi-supervised comparison needs a validation split");
  }
  SemiSupervisedResult result;
  result.labeled_examples = labeled.size();

  // Arm (a): supervised from scratch, early stopped on validation accuracy.
  {
    const auto& ss = config.semisup;
    Encoder encoder = build_encoder(config.encoder, mix_seed(config.seed, 0x73757076));
    const int64_t dim = prepool_dim(encoder, labeled.inputs.size(2), labeled.inputs.size(3));
    Rng arm_rng = rng.fork(0x73757076);
    Rng init_rng = arm_rng.fork(0x73656d69);
    auto head = make_classifier(dim, data.num_classes, init_rng);
    std::vector<torch::Tensor> params = encoder->parameters();
    for (auto& p : head->parameters()) params.push_back(p);
    torch::optim::SGD opt(params, torch::optim::SGDOptions(ss.optimizer.lr)
                                      .momentum(ss.optimizer.momentum)
                                      .weight_decay(ss.optimizer.weight_decay));
    double best = -1.0;
    int64_t since_best = 0;
    const int64_t n = labeled.size();
    for (int64_t epoch = 0; epoch < ss.max_epochs; ++epoch) {
      encoder->train();
      auto perm = arm_rng.randperm(n);
      for (int64_t i = 0; i < n; i += ss.batch_size) {
        const int64_t b = std::min(ss.batch_size, n - i);
        if (b < 2 && n >= 2) continue;  // batch norm needs two examples
        auto idx = perm.narrow(0, i, b);
        auto x = views.encoder_input(labeled.inputs.index_select(0, idx));
        auto logits = head->forward(encoder->forward(x).prepool);
        auto loss = torch::nn::functional::cross_entropy(logits, labeled.labels.index_select(0, idx));
        opt.zero_grad();
        loss.backward();
        opt.step();
      }
      result.supervised_accuracy =
          classifier_accuracy(encoder, head, views, data.val.inputs, data.val.labels);
      result.supervised_epochs = epoch + 1;
      if (result.supervised_accuracy > best) {
        best = result.supervised_accuracy;
        since_best = 0;
      } else if (++since_best >= ss.patience) {
        break;
      }
    }
  }

  // Arm (b): linear evaluation of the pretrained encoder on the same subset.
  {
    const bool train_views = config.linear_eval.train_views == "pretrain";
    auto le = linear_eval(pretrained, views, train_views, labeled, data.val, data.num_classes,
                          config.linear_eval, rng);
    result.pretrained_accuracy = le.val_accuracy;
  }
  return result;
}

}  // namespace viewcraft

#include "viewcraft/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "viewcraft/checkpoint.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/nn_init.hpp"

namespace viewcraft {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kEncoderSalt = 0x656e636fULL;
constexpr uint64_t kViewmakerSalt = 0x76696577ULL;
constexpr uint64_t kBankSalt = 0x62616e6bULL;
constexpr uint64_t kStepSalt = 0x73746570ULL;
constexpr uint64_t kEpochSalt = 0x65706f63ULL;

std::vector<torch::Tensor> params_of(torch::nn::Module& m) { return m.parameters(true); }

double grad_norm(const std::vector<torch::Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad().defined()) sq += p.grad().to(torch::kFloat64).square().sum().item<double>();
  }
  return std::sqrt(sq);
}

torch::optim::SGDOptions sgd_options(const OptimizerConfig& o) {
  return torch::optim::SGDOptions(o.lr).momentum(o.momentum).weight_decay(o.weight_decay);
}

std::string describe_indices(const torch::Tensor& indices) {
  std::ostringstream os;
  auto idx = indices.to(torch::kInt64).contiguous();
  const int64_t n = std::min<int64_t>(idx.numel(), 8);
  os << "[";
  for (int64_t i = 0; i < n; ++i) os << (i ? ", " : "") << idx.data_ptr<int64_t>()[i];
  if (idx.numel() > n) os << ", ...";
  os << "]";
  return os.str();
}

}  // namespace

Trainer::Trainer(ExperimentConfig config, std::shared_ptr<const DatasetBundle> data)
    : config_(std::move(config)), data_(std::move(data)), rng_(mix_seed(config_.seed, kStepSalt)) {
  config_.validate();
  if (data_->channels() != config_.encoder.input_channels) {
    throw ShapeMismatch("dataset has " + std::to_string(data_->channels()) +
                        " channels, encoder expects " +
                        std::to_string(config_.encoder.input_channels));
  }
  encoder_ = build_encoder(config_.encoder, mix_seed(config_.seed, kEncoderSalt));
  encoder_opt_ = std::make_unique<torch::optim::SGD>(params_of(*encoder_),
                                                     sgd_options(config_.optimizer));
  if (config_.uses_viewmaker()) {
    viewmaker_ = build_viewmaker(config_.viewmaker, mix_seed(config_.seed, kViewmakerSalt));
    viewmaker_opt_ = std::make_unique<torch::optim::SGD>(params_of(*viewmaker_),
                                                         sgd_options(config_.viewmaker_optimizer));
  }
  if (config_.objective == Objective::kInstdisc) {
    const int64_t m = data_->train.size();
    if (m < 2) {
      throw DatasetTooSmall("instance discrimination needs at least two training examples");
    }
    int64_t k = config_.memory_bank.num_negatives;
    if (k > m - 1) {
      std::cerr << "viewcraft: memory_bank.num_negatives " << k << " exceeds bank size - 1; using "
                << m - 1 << "\n";
      k = m - 1;
    }
    Rng bank_rng(mix_seed(config_.seed, kBankSalt));
    bank_.emplace(m, config_.encoder.embedding_dim, config_.memory_bank.update_rate, k, bank_rng);
  }
  views_ = std::make_unique<ViewFactory>(make_view_factory(config_, viewmaker_, *data_));
}

int64_t Trainer::steps_per_epoch() const {
  const int64_t n = data_->train.size();
  return std::max<int64_t>(1, n / config_.training.batch_size);
}

std::vector<torch::Tensor> Trainer::epoch_batches(int64_t epoch) const {
  const int64_t n = data_->train.size();
  const int64_t b = std::min(config_.training.batch_size, n);
  Rng order(mix_seed(mix_seed(config_.seed, kEpochSalt), static_cast<uint64_t>(epoch)));
  auto perm = order.randperm(n);
  std::vector<torch::Tensor> out;
  for (int64_t s = 0; s < steps_per_epoch(); ++s) out.push_back(perm.narrow(0, s * b, b));
  return out;
}

torch::Tensor Trainer::compute_loss(const torch::Tensor& indices, Rng& rng, ViewPair* pair_out) {
  const auto& train = data_->train;
  auto batch = train.inputs.index_select(0, indices);
  std::vector<torch::Tensor> waves;
  if (!train.waveforms.empty()) {
    auto idx = indices.to(torch::kInt64).contiguous();
    for (int64_t i = 0; i < idx.numel(); ++i) waves.push_back(train.waveforms[idx.data_ptr<int64_t>()[i]]);
  }
  const auto* wptr = waves.empty() ? nullptr : &waves;
  const Temperature tau(config_.temperature);

  if (config_.objective == Objective::kInstdisc) {
    auto v = views_->view(batch, rng, wptr);
    auto z = normalize_rows(encoder_->forward(views_->encoder_input(v.view)).embedding);
    auto loss = instdisc_loss(z, indices, *bank_, tau, rng);
    // `second` carries the normalized embeddings for the bank update.
    if (pair_out) *pair_out = {v.view, z.detach(), v.perturbation, torch::Tensor(), views_->source()};
    return loss;
  }

  auto pair = views_->pair(batch, rng, wptr);
  const int64_t b = batch.size(0);
  auto z = encoder_->forward(views_->encoder_input(torch::cat({pair.first, pair.second}))).embedding;
  auto emb = interleave_pairs(z.narrow(0, 0, b), z.narrow(0, b, b));
  auto loss = nt_xent_loss(normalize_rows(emb), tau);
  if (pair_out) *pair_out = std::move(pair);
  return loss;
}

namespace {

/// Disables gradients for a parameter set for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<torch::Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
};

}  // namespace

StepMetrics Trainer::step(const torch::Tensor& indices, const StepOptions& options) {
  encoder_->train();
  if (has_viewmaker()) viewmaker_->train();

  ViewPair pair;
  torch::Tensor loss;
  {
    std::vector<torch::Tensor> frozen;
    if (!options.update_encoder) frozen = params_of(*encoder_);
    if (has_viewmaker() && !options.update_viewmaker) {
      auto vm = params_of(*viewmaker_);
      frozen.insert(frozen.end(), vm.begin(), vm.end());
    }
    FreezeGuard guard(frozen);
    loss = compute_loss(indices, rng_, &pair);
  }

  const double value = loss.item<double>();
  if (!std::isfinite(value)) {
    throw NonFiniteLoss("loss is " + std::to_string(value) + " at step " + std::to_string(step_) +
                        " (batch indices " + describe_indices(indices) + ")");
  }

  encoder_opt_->zero_grad();
  if (viewmaker_opt_) viewmaker_opt_->zero_grad();
  if (loss.requires_grad()) loss.backward();

  StepMetrics m;
  m.step = step_ + 1;
  m.loss = value;
  m.lr = config_.optimizer.lr;
  auto enc_params = params_of(*encoder_);
  m.encoder_grad_norm = grad_norm(enc_params);
  std::vector<torch::Tensor> vm_params;
  if (has_viewmaker()) {
    vm_params = params_of(*viewmaker_);
    m.viewmaker_grad_norm = grad_norm(vm_params);
  }
  if (config_.training.grad_clip > 0) {
    torch::nn::utils::clip_grad_norm_(enc_params, config_.training.grad_clip);
    if (!vm_params.empty()) torch::nn::utils::clip_grad_norm_(vm_params, config_.training.grad_clip);
  }

  if (options.update_encoder) encoder_opt_->step();
  if (viewmaker_opt_ && options.update_viewmaker) {
    // Ascent on L: the viewmaker optimizer descends on -L.
    for (auto& p : vm_params) {
      if (p.grad().defined()) p.mutable_grad().neg_();
    }
    viewmaker_opt_->step();
  }

  if (bank_) {
    torch::NoGradGuard no_grad;
    bank_->update(pair.second, indices);
  }

  std::vector<torch::Tensor> perts;
  for (const auto* p : {&pair.first_perturbation, &pair.second_perturbation}) {
    if (p->defined()) perts.push_back(example_norm(p->detach(), config_.viewmaker.budget.p));
  }
  m.perturbation_norm = perts.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : torch::cat(perts).to(torch::kFloat64).mean().item<double>();
  ++step_;
  return m;
}

double Trainer::loss_at(const torch::Tensor& indices, Rng rng) {
  // Snapshot buffers so running statistics are left exactly as they were.
  auto buffers = module_archive(*encoder_);
  encoder_->train();
  if (has_viewmaker()) viewmaker_->train();
  double value = 0.0;
  {
    torch::NoGradGuard no_grad;
    value = compute_loss(indices, rng, nullptr).item<double>();
  }
  restore_module(*encoder_, buffers);
  return value;
}

void Trainer::save(const fs::path& dir) const {
  fs::create_directories(dir);
  const std::string cfg = to_toml(config_);
  save_module(*encoder_, dir / "encoder.pt", cfg);
  if (has_viewmaker()) save_module(*viewmaker_, dir / "viewmaker.pt", cfg);

  torch::serialize::OutputArchive opt;
  torch::serialize::OutputArchive enc_opt;
  encoder_opt_->save(enc_opt);
  opt.write("encoder", enc_opt);
  if (viewmaker_opt_) {
    torch::serialize::OutputArchive vm_opt;
    viewmaker_opt_->save(vm_opt);
    opt.write("viewmaker", vm_opt);
  }
  opt.save_to((dir / "optimizer.pt").string());

  Archive rng;
  rng.put("state", rng_.state());
  rng.save(dir / "rng.pt");

  if (bank_) {
    Archive bank;
    bank.put("slots", bank_->slots());
    bank.save(dir / "memory_bank.pt");
  }

  std::ofstream(dir / "config.toml") << cfg;
  nlohmann::ordered_json state;
  state["step"] = step_;
  state["seed"] = config_.seed;
  state["view_source"] = to_string(config_.view_source);
  state["objective"] = to_string(config_.objective);
  std::ofstream(dir / "state.json") << state.dump(2) << "\n";
}

void Trainer::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IOFailure("no such checkpoint directory: " + dir.string());
  }
  load_module(*encoder_, dir / "encoder.pt");
  if (has_viewmaker()) load_module(*viewmaker_, dir / "viewmaker.pt");

  torch::serialize::InputArchive opt;
  try {
    opt.load_from((dir / "optimizer.pt").string());
    torch::serialize::InputArchive enc_opt;
    opt.read("encoder", enc_opt);
    encoder_opt_->load(enc_opt);
    if (viewmaker_opt_) {
      torch::serialize::InputArchive vm_opt;
      opt.read("viewmaker", vm_opt);
      viewmaker_opt_->load(vm_opt);
    }
  } catch (const c10::Error& e) {
    throw CheckpointMismatch("cannot restore optimizer state from " + dir.string() + ": " +
                             e.what_without_backtrace());
  }

  rng_.set_state(Archive::load(dir / "rng.pt").tensor("state"));
  if (bank_) {
    auto slots = Archive::load(dir / "memory_bank.pt").tensor("slots");
    if (slots.sizes() != bank_->slots().sizes()) {
      throw CheckpointMismatch("memory bank shape differs from the checkpoint");
    }
    bank_->restore(slots);
  }

  std::ifstream in(dir / "state.json");
  if (!in) {
    throw IOFailure("missing state.json in " + dir.string());
  }
  step_ = nlohmann::json::parse(in).at("step").get<int64_t>();
}

fs::path step_dir(const fs::path& run_dir, int64_t step) {
  return run_dir / ("step-" + std::to_string(step));
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  fs::path best;
  int64_t best_step = -1;
  if (!fs::is_directory(run_dir)) return best;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("step-", 0) != 0) continue;
    try {
      const int64_t s = std::stoll(name.substr(5));
      if (s > best_step) {
        best_step = s;
        best = e.path();
      }
    } catch (const std::exception&) {
    }
  }
  return best;
}

PretrainedModels load_pretrained(const fs::path& path) {
  if (!fs::exists(path)) {
    throw IOFailure("no such checkpoint: " + path.string());
  }
  PretrainedModels m;
  m.dir = path;
  if (!fs::exists(path / "encoder.pt")) {
    m.dir = latest_checkpoint(path);
    if (m.dir.empty()) {
      throw IOFailure("no checkpoint found under " + path.string());
    }
  }
  m.config = load_config(m.dir / "config.toml");
  m.encoder = build_encoder(m.config.encoder, mix_seed(m.config.seed, kEncoderSalt));
  load_module(*m.encoder, m.dir / "encoder.pt");
  m.encoder->eval();
  if (m.config.uses_viewmaker()) {
    m.viewmaker = build_viewmaker(m.config.viewmaker, mix_seed(m.config.seed, kViewmakerSalt));
    load_module(*m.viewmaker, m.dir / "viewmaker.pt");
    m.viewmaker->eval();
    for (auto& p : m.viewmaker->parameters()) p.set_requires_grad(false);
  }
  for (auto& p : m.encoder->parameters()) p.set_requires_grad(false);
  return m;
}

namespace {

std::string metrics_line(const StepMetrics& m, double wall_time) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  if (std::isnan(m.perturbation_norm)) {
    j["perturbation_norm"] = nullptr;
  } else {
    j["perturbation_norm"] = m.perturbation_norm;
  }
  j["lr"] = m.lr;
  j["encoder_grad_norm"] = m.encoder_grad_norm;
  j["viewmaker_grad_norm"] = m.viewmaker_grad_norm;
  j["wall_time"] = wall_time;
  return j.dump();
}

/// Keeps metric lines with step <= `last_step` (used when resuming).
void truncate_metrics(const fs::path& file, int64_t last_step) {
  std::vector<std::string> keep;
  {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        if (nlohmann::json::parse(line).at("step").get<int64_t>() <= last_step) keep.push_back(line);
      } catch (const nlohmann::json::exception&) {
      }
    }
  }
  std::ofstream out(file, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
}

}  // namespace

PretrainResult pretrain(const ExperimentConfig& config, std::shared_ptr<const DatasetBundle> data,
                        const PretrainOptions& options) {
  Trainer trainer(config, std::move(data));
  fs::create_directories(options.run_dir);
  const fs::path metrics_file = options.run_dir / "metrics.jsonl";
  if (!options.resume.empty()) {
    trainer.load(options.resume);
    truncate_metrics(metrics_file, trainer.step_count());
  } else {
    std::ofstream(metrics_file, std::ios::trunc);
  }
  std::ofstream metrics(metrics_file, std::ios::app);
  if (!metrics) {
    throw IOFailure("cannot write " + metrics_file.string());
  }

  const auto start = std::chrono::steady_clock::now();
  const int64_t spe = trainer.steps_per_epoch();
  const int64_t total = config.training.epochs * spe;
  const int64_t every = config.training.checkpoint_every > 0 ? config.training.checkpoint_every : spe;

  PretrainResult result;
  int64_t cached_epoch = -1;
  std::vector<torch::Tensor> batches;
  for (int64_t s = trainer.step_count(); s < total; ++s) {
    if (options.max_steps >= 0 && s >= options.max_steps) break;
    const int64_t epoch = s / spe;
    if (epoch != cached_epoch) {
      batches = trainer.epoch_batches(epoch);
      cached_epoch = epoch;
    }
    auto m = trainer.step(batches[s % spe]);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics << metrics_line(m, wall) << "\n";
    metrics.flush();
    result.metrics.push_back(m);
    if (options.on_step) options.on_step(m);
    if ((s + 1) % every == 0 || s + 1 == total) {
      auto dir = step_dir(options.run_dir, s + 1);
      trainer.save(dir);
      result.checkpoints.push_back(dir);
    }
  }
  result.steps = trainer.step_count();
  if (result.steps == total) {
    result.final_checkpoint = step_dir(options.run_dir, total);
    if (!fs::exists(result.final_checkpoint)) {
      trainer.save(result.final_checkpoint);
      result.checkpoints.push_back(result.final_checkpoint);
    }
  }
  return result;
}

}  // namespace viewcraft

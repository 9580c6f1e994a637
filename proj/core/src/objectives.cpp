#include "viewcraft/objectives.hpp"

#include <cmath>
#include <limits>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

Temperature::Temperature(double tau) : tau_(tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigInvalid("temperature must be positive, got " + std::to_string(tau));
  }
}

torch::Tensor interleave_pairs(const torch::Tensor& first, const torch::Tensor& second) {
  if (first.sizes() != second.sizes()) {
    throw ShapeMismatch("paired embeddings must have identical shapes");
  }
  auto stacked = torch::stack({first, second}, 1);  // N x 2 x D
  return stacked.reshape({-1, first.size(1)});
}

torch::Tensor normalize_rows(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  return F::normalize(x, F::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));
}

namespace {

void check_unit_rows(const torch::Tensor& z) {
  auto deviation = (z.detach().norm(2, 1) - 1.0).abs().max().item<double>();
  if (deviation > kNormalizationTolerance) {
    throw NotNormalized("embedding rows must have unit l2 norm (max deviation " +
                        std::to_string(deviation) + ")");
  }
}

void check_indices(const torch::Tensor& indices, int64_t num_slots, int64_t batch) {
  if (indices.dim() != 1 || indices.size(0) != batch) {
    throw ShapeMismatch("indices must be a length-B vector");
  }
  if (batch == 0) return;
  auto lo = indices.min().item<int64_t>();
  auto hi = indices.max().item<int64_t>();
  if (lo < 0 || hi >= num_slots) {
    throw IndexOutOfRange("memory bank index out of range [0, " + std::to_string(num_slots) + ")");
  }
}

}  // namespace

torch::Tensor nt_xent_loss(const torch::Tensor& embeddings, Temperature tau) {
  if (embeddings.dim() != 2 || embeddings.size(0) < 2 || embeddings.size(0) % 2 != 0) {
    throw ShapeMismatch("nt_xent_loss expects a 2N x D batch with N >= 1");
  }
  check_unit_rows(embeddings);
  auto z = normalize_rows(embeddings);
  const int64_t rows = z.size(0);

  auto logits = torch::matmul(z, z.t()) / tau.value();
  auto self = torch::eye(rows, torch::TensorOptions().dtype(torch::kBool));
  logits = logits.masked_fill(self, -std::numeric_limits<double>::infinity());
  auto log_prob = torch::log_softmax(logits, 1);

  // Partner of row i is i ^ 1: (0,1), (2,3), ...
  auto partner = torch::arange(rows, torch::kInt64).bitwise_xor(1);
  return -log_prob.gather(1, partner.unsqueeze(1)).mean();
}

MemoryBank::MemoryBank(int64_t num_slots, int64_t dim, double update_rate, int64_t num_negatives,
                       Rng& rng)
    : MemoryBank(rng.randn({num_slots, dim}), update_rate, num_negatives) {}

MemoryBank::MemoryBank(torch::Tensor slots, double update_rate, int64_t num_negatives)
    : update_rate_(update_rate), num_negatives_(num_negatives) {
  if (slots.dim() != 2 || slots.size(0) < 1) {
    throw ShapeMismatch("memory bank slots must be an M x D matrix");
  }
  if (!(update_rate >= 0.0 && update_rate <= 1.0)) {
    throw ConfigInvalid("memory bank update_rate must lie in [0, 1]");
  }
  if (num_negatives < 1 || num_negatives > slots.size(0) - 1) {
    throw ConfigInvalid("num_negatives must lie in [1, M - 1] (M = " +
                        std::to_string(slots.size(0)) + ")");
  }
  slots_ = normalize_rows(slots.detach()).contiguous();
}

void MemoryBank::restore(const torch::Tensor& slots) {
  if (slots.sizes() != slots_.sizes()) {
    throw ShapeMismatch("memory bank slots must keep their M x D shape");
  }
  slots_ = slots.detach().to(slots_.scalar_type()).clone().contiguous();
}

void MemoryBank::update(const torch::Tensor& embeddings, const torch::Tensor& indices) {
  check_indices(indices, size(), embeddings.size(0));
  torch::NoGradGuard no_grad;
  auto z = normalize_rows(embeddings.detach().to(slots_.scalar_type()));
  auto ids = indices.to(torch::kInt64).contiguous();
  const auto* id = ids.data_ptr<int64_t>();
  // Sequential so that repeated ids within a batch compose.
  for (int64_t b = 0; b < ids.size(0); ++b) {
    auto slot = slots_[id[b]];
    auto mixed = (1.0 - update_rate_) * slot + update_rate_ * z[b];
    slot.copy_(mixed / mixed.norm().clamp_min(1e-12));
  }
}

MemoryBank update_bank(const MemoryBank& bank, const torch::Tensor& embeddings,
                       const torch::Tensor& indices) {
  MemoryBank next = bank;
  next.restore(bank.slots());
  next.update(embeddings, indices);
  return next;
}

torch::Tensor sample_negatives(const MemoryBank& bank, const torch::Tensor& indices, Rng& rng) {
  const int64_t m = bank.size();
  const int64_t k = bank.num_negatives();
  check_indices(indices, m, indices.size(0));
  auto ids = indices.to(torch::kInt64).contiguous();
  auto out = torch::empty({ids.size(0), k}, torch::kInt64);
  for (int64_t b = 0; b < ids.size(0); ++b) {
    auto own = ids[b].item<int64_t>();
    auto draw = rng.randperm(m - 1).narrow(0, 0, k);
    out[b] = draw + (draw >= own).to(torch::kInt64);
  }
  return out;
}

torch::Tensor instdisc_loss_with_negatives(const torch::Tensor& embeddings,
                                           const torch::Tensor& indices, const MemoryBank& bank,
                                           const torch::Tensor& negatives, Temperature tau) {
  if (embeddings.dim() != 2 || embeddings.size(1) != bank.dim()) {
    throw ShapeMismatch("embeddings must be B x D with D matching the memory bank");
  }
  check_indices(indices, bank.size(), embeddings.size(0));
  if (negatives.dim() != 2 || negatives.size(0) != embeddings.size(0)) {
    throw ShapeMismatch("negatives must be B x K");
  }
  if (negatives.numel() > 0 &&
      (negatives.min().item<int64_t>() < 0 || negatives.max().item<int64_t>() >= bank.size())) {
    throw IndexOutOfRange("negative slot id out of range");
  }
  check_unit_rows(embeddings);
  auto z = normalize_rows(embeddings);
  auto slots = bank.slots().to(z.scalar_type());

  auto positive = slots.index_select(0, indices.to(torch::kInt64));           // B x D
  auto negative = slots.index_select(0, negatives.flatten()).view(
      {negatives.size(0), negatives.size(1), -1});                              // B x K x D
  auto pos_logit = (z * positive).sum(1, true);                                // B x 1
  auto neg_logit = torch::bmm(negative, z.unsqueeze(2)).squeeze(2);            // B x K
  auto logits = torch::cat({pos_logit, neg_logit}, 1) / tau.value();
  return -torch::log_softmax(logits, 1).select(1, 0).mean();
}

torch::Tensor instdisc_loss(const torch::Tensor& embeddings, const torch::Tensor& indices,
                            const MemoryBank& bank, Temperature tau, Rng& rng) {
  auto negatives = sample_negatives(bank, indices, rng);
  return instdisc_loss_with_negatives(embeddings, indices, bank, negatives, tau);
}

}  // namespace viewcraft

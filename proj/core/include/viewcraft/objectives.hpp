#pragma once

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Softmax temperature; must be positive.
class Temperature {
 public:
  explicit Temperature(double tau = 0.07);
  double value() const { return tau_; }

 private:
  double tau_;
};

/// Tolerance on |1 - ||z||| before an embedding is rejected as unnormalized.
inline constexpr double kNormalizationTolerance = 1e-3;

/// Rows (2k, 2k+1) of the result are the two views of example k.
torch::Tensor interleave_pairs(const torch::Tensor& first, const torch::Tensor& second);

/// Row-wise l2 normalization.
torch::Tensor normalize_rows(const torch::Tensor& x);

/// NT-Xent loss over a 2N x D batch whose rows (2k, 2k+1) are positives:
///
///   l(i, j) = -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )
///   L = 1/(2N) * sum_k [ l(2k, 2k+1) + l(2k+1, 2k) ]
///
/// s is cosine similarity. Rows must already be unit norm (within 1e-3,
/// otherwise NotNormalized); they are renormalized before use.
torch::Tensor nt_xent_loss(const torch::Tensor& embeddings, Temperature tau);

/// Per-example feature memory for instance discrimination.
class MemoryBank {
 public:
  /// Slots start as uniformly random unit vectors.
  MemoryBank(int64_t num_slots, int64_t dim, double update_rate, int64_t num_negatives, Rng& rng);
  /// Wraps explicit slot contents (rows are renormalized).
  MemoryBank(torch::Tensor slots, double update_rate, int64_t num_negatives);

  int64_t size() const { return slots_.size(0); }
  int64_t dim() const { return slots_.size(1); }
  double update_rate() const { return update_rate_; }
  int64_t num_negatives() const { return num_negatives_; }
  const torch::Tensor& slots() const { return slots_; }

  /// Replaces the slots verbatim (same shape, no renormalization).
  void restore(const torch::Tensor& slots);

  /// In place: m_i <- normalize((1 - r) m_i + r z_i) for each (z_i, i).
  void update(const torch::Tensor& embeddings, const torch::Tensor& indices);

 private:
  torch::Tensor slots_;
  double update_rate_;
  int64_t num_negatives_;
};

/// Returns a copy of `bank` with the momentum update applied.
MemoryBank update_bank(const MemoryBank& bank, const torch::Tensor& embeddings,
                       const torch::Tensor& indices);

/// For each row i, `num_negatives` distinct slot ids drawn uniformly from all
/// slots except indices[i]. Returns B x K int64.
torch::Tensor sample_negatives(const MemoryBank& bank, const torch::Tensor& indices, Rng& rng);

/// Sampled-softmax instance discrimination: the logit of each embedding
/// against its own slot is the true class, logits against the sampled slots
/// are the negatives; loss is the mean cross entropy.
torch::Tensor instdisc_loss(const torch::Tensor& embeddings, const torch::Tensor& indices,
                            const MemoryBank& bank, Temperature tau, Rng& rng);

/// Same loss with explicit negative slot ids (B x K).
torch::Tensor instdisc_loss_with_negatives(const torch::Tensor& embeddings,
                                           const torch::Tensor& indices, const MemoryBank& bank,
                                           const torch::Tensor& negatives, Temperature tau);

}  // namespace viewcraft

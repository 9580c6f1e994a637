#pragma once

#include <cstdint>

#include <ATen/core/Generator.h>
#include <torch/types.h>

namespace viewcraft {

/// Explicit, seedable randomness handle. Every stochastic operation in the
/// library draws from one of these; nothing touches torch's global generator.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  Rng(const Rng& other);
  Rng& operator=(const Rng& other);
  Rng(Rng&&) noexcept = default;
  Rng& operator=(Rng&&) noexcept = default;

  /// Uniform real in [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0);
  /// Uniform integer in [lo, hi].
  int64_t randint(int64_t lo, int64_t hi);
  bool bernoulli(double p);

  torch::Tensor rand(torch::IntArrayRef sizes, torch::Dtype dtype = torch::kFloat32);
  torch::Tensor randn(torch::IntArrayRef sizes, torch::Dtype dtype = torch::kFloat32);
  torch::Tensor randperm(int64_t n);

  at::Generator& generator() { return gen_; }

  /// Opaque byte tensor capturing the generator position.
  torch::Tensor state() const;
  void set_state(const torch::Tensor& state);

  /// Independent child stream, deterministic in (this stream's seed, salt).
  Rng fork(uint64_t salt) const;

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  at::Generator gen_;
};

/// SplitMix64 finalizer; used to derive per-worker / per-epoch seeds.
uint64_t mix_seed(uint64_t a, uint64_t b);

/// Seed for a data-loading worker: a function of (global seed, worker, epoch).
uint64_t worker_seed(uint64_t global_seed, uint64_t worker_id, uint64_t epoch);

}  // namespace viewcraft

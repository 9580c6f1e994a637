#include "viewcraft/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace viewcraft {

Rng::Rng(uint64_t seed) : seed_(seed), gen_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

Rng::Rng(const Rng& other) : seed_(other.seed_), gen_(other.gen_.clone()) {}

Rng& Rng::operator=(const Rng& other) {
  if (this != &other) {
    seed_ = other.seed_;
    gen_ = other.gen_.clone();
  }
  return *this;
}

double Rng::uniform(double lo, double hi) {
  auto u = torch::rand({1}, gen_, torch::TensorOptions().dtype(torch::kFloat64)).item<double>();
  return lo + (hi - lo) * u;
}

int64_t Rng::randint(int64_t lo, int64_t hi) {
  if (hi <= lo) {
    return lo;
  }
  return torch::randint(lo, hi + 1, {1}, gen_, torch::TensorOptions().dtype(torch::kInt64))
      .item<int64_t>();
}

bool Rng::bernoulli(double p) {
  if (p <= 0.0) {
    return false;
  }
  if (p >= 1.0) {
    return true;
  }
  return uniform() < p;
}

torch::Tensor Rng::rand(torch::IntArrayRef sizes, torch::Dtype dtype) {
  return torch::rand(sizes, gen_, torch::TensorOptions().dtype(dtype));
}

torch::Tensor Rng::randn(torch::IntArrayRef sizes, torch::Dtype dtype) {
  return torch::randn(sizes, gen_, torch::TensorOptions().dtype(dtype));
}

torch::Tensor Rng::randperm(int64_t n) {
  return torch::randperm(n, gen_, torch::TensorOptions().dtype(torch::kInt64));
}

torch::Tensor Rng::state() const { return gen_.get_state(); }

void Rng::set_state(const torch::Tensor& state) { gen_.set_state(state); }

Rng Rng::fork(uint64_t salt) const { return Rng(mix_seed(seed_, salt)); }

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t worker_seed(uint64_t global_seed, uint64_t worker_id, uint64_t epoch) {
  return mix_seed(mix_seed(global_seed, worker_id), epoch);
}

}  // namespace viewcraft

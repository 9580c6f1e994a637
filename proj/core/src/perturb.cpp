#include "viewcraft/perturb.hpp"

#include <cmath>
#include <numbers>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

std::string to_string(NormOrder p) {
  switch (p) {
    case NormOrder::kL1:
      return "l1";
    case NormOrder::kL2:
      return "l2";
    case NormOrder::kInf:
      return "linf";
  }
  return "l1";
}

std::string to_string(PerturbDomain d) { return d == PerturbDomain::kDct ? "dct" : "signal"; }

NormOrder parse_norm_order(std::string_view s) {
  if (s == "l1" || s == "1") return NormOrder::kL1;
  if (s == "l2" || s == "2") return NormOrder::kL2;
  if (s == "linf" || s == "inf") return NormOrder::kInf;
  throw ConfigInvalid("unknown norm order '" + std::string(s) + "' (expected l1, l2 or linf)");
}

PerturbDomain parse_perturb_domain(std::string_view s) {
  if (s == "signal") return PerturbDomain::kSignal;
  if (s == "dct") return PerturbDomain::kDct;
  throw ConfigInvalid("unknown perturbation domain '" + std::string(s) + "'");
}

void PerturbationBudget::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw ConfigInvalid("budget.epsilon must be a finite value >= 0, got " +
                        std::to_string(epsilon));
  }
}

double budget_radius(const PerturbationBudget& budget, int64_t channels, int64_t width,
                     int64_t height) {
  return budget.epsilon * static_cast<double>(channels * width * height);
}

torch::Tensor example_norm(const torch::Tensor& x, NormOrder p) {
  if (x.dim() != 3 && x.dim() != 4) {
    throw ShapeMismatch("expected a C x W x H or B x C x W x H tensor, got rank " +
                        std::to_string(x.dim()));
  }
  std::vector<int64_t> dims = x.dim() == 3 ? std::vector<int64_t>{0, 1, 2}
                                           : std::vector<int64_t>{1, 2, 3};
  switch (p) {
    case NormOrder::kL1:
      return x.abs().sum(dims);
    case NormOrder::kL2:
      return x.square().sum(dims).sqrt();
    case NormOrder::kInf:
      return x.abs().amax(dims);
  }
  return x.abs().sum(dims);
}

torch::Tensor project_to_budget(const torch::Tensor& perturbation,
                                const PerturbationBudget& budget) {
  budget.validate();
  auto norm = example_norm(perturbation, budget.p);
  if ((norm.detach() < kDegenerateNormThreshold).any().item<bool>() ||
      !torch::isfinite(norm.detach()).all().item<bool>()) {
    throw DegenerateNorm("perturbation norm is zero or not finite; the generator output is dead");
  }
  const int64_t c = perturbation.size(-3);
  const int64_t w = perturbation.size(-2);
  const int64_t h = perturbation.size(-1);
  const double radius = budget_radius(budget, c, w, h);
  auto scale = radius / norm;
  if (perturbation.dim() == 4) {
    scale = scale.view({-1, 1, 1, 1});
  }
  return perturbation * scale;
}

torch::Tensor apply_perturbation(const torch::Tensor& input, const torch::Tensor& perturbation,
                                 const PerturbationBudget& budget) {
  if (input.sizes() != perturbation.sizes()) {
    throw ShapeMismatch("input and perturbation shapes differ");
  }
  auto view = input + perturbation;
  if (budget.clamp) {
    view = view.clamp(0.0, 1.0);
  }
  return view;
}

PerturbedView gaussian_noise_view(const torch::Tensor& input, const PerturbationBudget& budget,
                                  Rng& rng) {
  auto noise = rng.randn(input.sizes(), input.scalar_type());
  auto projected = project_to_budget(noise, budget);
  return {apply_perturbation(input, projected, budget), projected};
}

namespace {

// Rows are the orthonormal DCT-II basis vectors of length n.
torch::Tensor dct_matrix(int64_t n, torch::Dtype dtype) {
  auto k = torch::arange(n, torch::kFloat64).unsqueeze(1);
  auto i = torch::arange(n, torch::kFloat64).unsqueeze(0);
  auto basis = torch::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
  auto scale = torch::full({n, 1}, std::sqrt(2.0 / n), torch::kFloat64);
  scale[0][0] = std::sqrt(1.0 / n);
  return (basis * scale).to(dtype);
}

}  // namespace

torch::Tensor dct2d(const torch::Tensor& x) {
  if (x.dim() < 2) {
    throw ShapeMismatch("dct2d needs at least two dimensions");
  }
  auto rows = dct_matrix(x.size(-2), x.scalar_type());
  auto cols = dct_matrix(x.size(-1), x.scalar_type());
  return torch::matmul(torch::matmul(rows, x), cols.t());
}

torch::Tensor idct2d(const torch::Tensor& y) {
  if (y.dim() < 2) {
    throw ShapeMismatch("idct2d needs at least two dimensions");
  }
  auto rows = dct_matrix(y.size(-2), y.scalar_type());
  auto cols = dct_matrix(y.size(-1), y.scalar_type());
  return torch::matmul(torch::matmul(rows.t(), y), cols);
}

PerturbedView dct_view(const torch::Tensor& input, const torch::Tensor& perturbation,
                       const PerturbationBudget& budget) {
  if (budget.domain != PerturbDomain::kDct) {
    throw ConfigInvalid("dct_view requires a budget with domain = dct");
  }
  if (input.sizes() != perturbation.sizes()) {
    throw ShapeMismatch("input and perturbation shapes differ");
  }
  auto projected = project_to_budget(perturbation, budget);
  auto view = idct2d(dct2d(input) + projected);
  if (budget.clamp) {
    view = view.clamp(0.0, 1.0);
  }
  return {view, projected};
}

}  // namespace viewcraft

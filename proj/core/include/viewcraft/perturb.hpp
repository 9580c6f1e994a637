#pragma once

#include <string>
#include <string_view>

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

enum class NormOrder { kL1, kL2, kInf };
enum class PerturbDomain { kSignal, kDct };

std::string to_string(NormOrder p);
std::string to_string(PerturbDomain d);
NormOrder parse_norm_order(std::string_view s);
PerturbDomain parse_perturb_domain(std::string_view s);

/// Budget for an additive perturbation. The perturbation is scaled onto the
/// lp sphere of radius epsilon * C * W * H around the input.
struct PerturbationBudget {
  NormOrder p = NormOrder::kL1;
  double epsilon = 0.05;
  /// Clamp views to [0, 1]. Only meaningful for pixel images; spectrograms
  /// are left unclamped.
  bool clamp = true;
  PerturbDomain domain = PerturbDomain::kSignal;

  /// Throws ConfigInvalid when epsilon is negative or not finite.
  void validate() const;
};

/// A view together with the projected (pre-clamp) perturbation that made it.
struct PerturbedView {
  torch::Tensor view;
  torch::Tensor perturbation;
};

/// Norms below this are treated as a dead generator output.
inline constexpr double kDegenerateNormThreshold = 1e-12;

/// epsilon * C * W * H for a C x W x H example.
double budget_radius(const PerturbationBudget& budget, int64_t channels, int64_t width,
                     int64_t height);

/// Per-example lp norm. Accepts C x W x H (returns a scalar tensor) or
/// B x C x W x H (returns a length-B tensor).
torch::Tensor example_norm(const torch::Tensor& x, NormOrder p);

/// Scales each example exactly onto the budget sphere:
///   P <- (eps * C * W * H / ||P||_p) * P
/// Small perturbations are scaled up as well as large ones scaled down.
/// Throws DegenerateNorm if any example has ||P||_p below 1e-12.
torch::Tensor project_to_budget(const torch::Tensor& perturbation,
                                const PerturbationBudget& budget);

/// X + P, clamped to [0, 1] when budget.clamp is set.
torch::Tensor apply_perturbation(const torch::Tensor& input, const torch::Tensor& perturbation,
                                 const PerturbationBudget& budget);

/// Random-noise baseline: standard Gaussian noise projected onto the same
/// budget sphere as learned perturbations.
PerturbedView gaussian_noise_view(const torch::Tensor& input, const PerturbationBudget& budget,
                                  Rng& rng);

/// Orthonormal DCT-II over the last two dimensions.
torch::Tensor dct2d(const torch::Tensor& x);
/// Orthonormal DCT-III (inverse of dct2d) over the last two dimensions.
torch::Tensor idct2d(const torch::Tensor& y);

/// Frequency-domain view: IDCT(DCT(X) + project(P)), clamped per budget.
/// Requires budget.domain == kDct.
PerturbedView dct_view(const torch::Tensor& input, const torch::Tensor& perturbation,
                       const PerturbationBudget& budget);

}  // namespace viewcraft

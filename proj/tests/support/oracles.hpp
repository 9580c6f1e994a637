#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/types.h>

// Plain-loop reference implementations. They deliberately avoid tensor
// algebra so they share no code path with the library.
namespace viewcraft::testing {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const torch::Tensor& t);
std::vector<double> to_vector(const torch::Tensor& t);

/// NT-Xent with rows (2k, 2k+1) as positives, by explicit loops over the
/// full 2N x 2N similarity matrix.
double nt_xent_oracle(const Matrix& z, double tau);

/// Cross entropy of each row against its own bank slot, where the candidate
/// set is the row's own slot plus `negatives[i]` (explicit slot ids).
double instdisc_oracle(const Matrix& z, const std::vector<int64_t>& indices, const Matrix& slots,
                       const std::vector<std::vector<int64_t>>& negatives, double tau);

/// p = 1, 2 or infinity (pass p <= 0 for infinity).
double lp_norm_oracle(const std::vector<double>& v, double p);

/// Orthonormal 1-D DCT-II by its defining sum.
std::vector<double> dct_1d_oracle(const std::vector<double>& x);
/// Separable 2-D DCT-II of an H x W matrix.
Matrix dct_2d_oracle(const Matrix& x);

/// d f / d x_i by central differences, perturbing `x` in place and restoring it.
double central_difference(const std::function<double()>& f, torch::Tensor x, int64_t flat_index,
                          double h);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

/// Maximum absolute elementwise difference.
double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace viewcraft::testing

#include "support/oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <unistd.h>

#include <torch/torch.h>

namespace viewcraft::testing {

Matrix to_matrix(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous();
  Matrix m(c.size(0), std::vector<double>(c.size(1)));
  auto a = c.accessor<double, 2>();
  for (int64_t i = 0; i < c.size(0); ++i) {
    for (int64_t j = 0; j < c.size(1); ++j) m[i][j] = a[i][j];
  }
  return m;
}

std::vector<double> to_vector(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous().view(-1);
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

namespace {

std::vector<double> unit(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double n = std::sqrt(sq);
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double nt_xent_oracle(const Matrix& z, double tau) {
  const size_t rows = z.size();
  Matrix u(rows);
  for (size_t i = 0; i < rows; ++i) u[i] = unit(z[i]);
  Matrix sim(rows, std::vector<double>(rows));
  for (size_t a = 0; a < rows; ++a) {
    for (size_t b = 0; b < rows; ++b) sim[a][b] = dot(u[a], u[b]);
  }
  double total = 0.0;
  for (size_t i = 0; i < rows; ++i) {
    const size_t j = (i % 2 == 0) ? i + 1 : i - 1;
    double denom = 0.0;
    for (size_t k = 0; k < rows; ++k) {
      if (k != i) denom += std::exp(sim[i][k] / tau);
    }
    total += -std::log(std::exp(sim[i][j] / tau) / denom);
  }
  return total / static_cast<double>(rows);
}

double instdisc_oracle(const Matrix& z, const std::vector<int64_t>& indices, const Matrix& slots,
                       const std::vector<std::vector<int64_t>>& negatives, double tau) {
  double total = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    const auto zi = unit(z[i]);
    const double pos = std::exp(dot(zi, unit(slots[indices[i]])) / tau);
    double denom = pos;
    for (int64_t n : negatives[i]) denom += std::exp(dot(zi, unit(slots[n])) / tau);
    total += -std::log(pos / denom);
  }
  return total / static_cast<double>(z.size());
}

double lp_norm_oracle(const std::vector<double>& v, double p) {
  if (p <= 0) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

std::vector<double> dct_1d_oracle(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<double> y(n);
  for (size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
      s += x[i] * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    y[k] = scale * s;
  }
  return y;
}

Matrix dct_2d_oracle(const Matrix& x) {
  Matrix rows(x.size());
  for (size_t i = 0; i < x.size(); ++i) rows[i] = dct_1d_oracle(x[i]);
  Matrix out(x.size(), std::vector<double>(x[0].size()));
  for (size_t j = 0; j < x[0].size(); ++j) {
    std::vector<double> col(x.size());
    for (size_t i = 0; i < x.size(); ++i) col[i] = rows[i][j];
    auto c = dct_1d_oracle(col);
    for (size_t i = 0; i < x.size(); ++i) out[i][j] = c[i];
  }
  return out;
}

double central_difference(const std::function<double()>& f, torch::Tensor x, int64_t flat_index,
                          double h) {
  torch::NoGradGuard no_grad;
  auto flat = x.view(-1);
  const double orig = flat[flat_index].item<double>();
  flat[flat_index] = orig + h;
  const double plus = f();
  flat[flat_index] = orig - h;
  const double minus = f();
  flat[flat_index] = orig;
  return (plus - minus) / (2.0 * h);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("viewcraft-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace viewcraft::testing

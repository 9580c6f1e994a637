#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "support/oracles.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/objectives.hpp"
#include "viewcraft/rng.hpp"

using namespace viewcraft;
using viewcraft::testing::instdisc_oracle;
using viewcraft::testing::nt_xent_oracle;
using viewcraft::testing::to_matrix;

namespace {

torch::Tensor random_units(Rng& rng, int64_t rows, int64_t dim) {
  return normalize_rows(rng.randn({rows, dim}, torch::kFloat64));
}

}  // namespace

TEST(NtXent, MatchesOracleOnRandomBatches) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = rng.randint(1, 8);
    const int64_t d = rng.randint(4, 32);
    for (double tau : {0.07, 0.5, 1.0}) {
      auto z = random_units(rng, 2 * n, d);
      const double got = nt_xent_loss(z, Temperature(tau)).item<double>();
      EXPECT_NEAR(got, nt_xent_oracle(to_matrix(z), tau), 1e-6) << "n=" << n << " d=" << d;
    }
  }
}

TEST(NtXent, SinglePairIsZero) {
  Rng rng(3);
  auto z = random_units(rng, 2, 16);
  EXPECT_EQ(nt_xent_loss(z, Temperature(0.07)).item<double>(), 0.0);
}

TEST(NtXent, EqualSimilaritiesGiveLogTwoNMinusOne) {
  for (int64_t n : {2, 3, 5, 8}) {
    auto z = torch::zeros({2 * n, 6}, torch::kFloat64);
    z.select(1, 0).fill_(1.0);
    EXPECT_NEAR(nt_xent_loss(z, Temperature(0.5)).item<double>(), std::log(2.0 * n - 1.0), 1e-6);
  }
  EXPECT_NEAR(nt_xent_loss(torch::ones({4, 3}, torch::kFloat64) / std::sqrt(3.0), Temperature())
                  .item<double>(),
              1.0986122886681098, 1e-6);
}

TEST(NtXent, PairPermutationInvariance) {
  Rng rng(5);
  auto z = random_units(rng, 12, 8);
  auto perm = rng.randperm(6);
  auto rows = torch::stack({perm * 2, perm * 2 + 1}, 1).view(-1);
  const double a = nt_xent_loss(z, Temperature(0.2)).item<double>();
  const double b = nt_xent_loss(z.index_select(0, rows), Temperature(0.2)).item<double>();
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(NtXent, ScaleInvarianceBeforeNormalization) {
  Rng rng(6);
  auto raw = rng.randn({8, 10}, torch::kFloat64);
  const double a = nt_xent_loss(normalize_rows(raw), Temperature(0.1)).item<double>();
  const double b = nt_xent_loss(normalize_rows(raw * 37.5), Temperature(0.1)).item<double>();
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(NtXent, RejectsUnnormalizedRows) {
  auto z = torch::ones({4, 3}, torch::kFloat64);
  EXPECT_THROW(nt_xent_loss(z, Temperature()), NotNormalized);
}

TEST(NtXent, RejectsOddRowCount) {
  Rng rng(1);
  EXPECT_THROW(nt_xent_loss(random_units(rng, 3, 4), Temperature()), ShapeMismatch);
}

TEST(NtXent, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  auto raw = rng.randn({4, 5}, torch::kFloat64);
  auto x = raw.clone().requires_grad_(true);
  // The loss is evaluated on normalize_rows(x) so every perturbed point stays
  // a valid input.
  auto loss = nt_xent_loss(normalize_rows(x), Temperature(0.5));
  loss.backward();
  auto grad = x.grad().view(-1);
  auto probe = raw.clone();
  auto f = [&] { return nt_xent_loss(normalize_rows(probe), Temperature(0.5)).item<double>(); };
  for (int64_t i = 0; i < probe.numel(); ++i) {
    const double fd = viewcraft::testing::central_difference(f, probe, i, 1e-6);
    const double g = grad[i].item<double>();
    EXPECT_NEAR(g, fd, 1e-4 * std::max(1.0, std::abs(fd))) << "coordinate " << i;
  }
}

TEST(NtXent, TemperatureMustBePositive) {
  EXPECT_THROW(Temperature(0.0), ConfigInvalid);
  EXPECT_THROW(Temperature(-1.0), ConfigInvalid);
}

TEST(InstDisc, ClosedFormThreeWay) {
  // z = m_0 = e0, negatives e1 and e2 orthogonal: -log(e / (e + 2)).
  auto slots = torch::eye(3, torch::kFloat64);
  MemoryBank bank(slots, 0.5, 2);
  auto z = slots.narrow(0, 0, 1);
  auto idx = torch::tensor({0}, torch::kInt64);
  auto neg = torch::tensor({{1, 2}}, torch::kInt64);
  const double got =
      instdisc_loss_with_negatives(z, idx, bank, neg, Temperature(1.0)).item<double>();
  EXPECT_NEAR(got, -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0)), 1e-6);
  EXPECT_NEAR(got, 0.5514, 1e-4);
}

TEST(InstDisc, OrthogonalEverythingIsLogKPlusOne) {
  auto slots = torch::eye(5, torch::kFloat64).narrow(0, 1, 4);  // e1..e4
  MemoryBank bank(slots, 0.5, 3);
  auto z = torch::eye(5, torch::kFloat64).narrow(0, 0, 1);  // e0
  auto neg = torch::tensor({{1, 2, 3}}, torch::kInt64);
  const double got = instdisc_loss_with_negatives(z, torch::tensor({0}, torch::kInt64), bank, neg,
                                                  Temperature(0.07))
                         .item<double>();
  EXPECT_NEAR(got, std::log(4.0), 1e-6);
}

TEST(InstDisc, FullBankMatchesOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto slots = random_units(rng, 4, 6);
    MemoryBank bank(slots, 0.5, 3);
    auto z = random_units(rng, 4, 6);
    auto idx = rng.randperm(4);
    const double tau = trial % 2 ? 0.07 : 1.0;
    const double got = instdisc_loss(z, idx, bank, Temperature(tau), rng).item<double>();
    std::vector<int64_t> ids;
    std::vector<std::vector<int64_t>> negs;
    for (int64_t i = 0; i < 4; ++i) {
      ids.push_back(idx[i].item<int64_t>());
      std::vector<int64_t> others;
      for (int64_t s = 0; s < 4; ++s) {
        if (s != ids.back()) others.push_back(s);
      }
      negs.push_back(others);
    }
    EXPECT_NEAR(got, instdisc_oracle(to_matrix(z), ids, to_matrix(slots), negs, tau), 1e-6);
  }
}

TEST(InstDisc, SampledNegativesExcludeSelfAndAreDistinct) {
  Rng rng(4);
  MemoryBank bank(50, 8, 0.5, 20, rng);
  auto idx = torch::arange(10, torch::kInt64);
  auto neg = sample_negatives(bank, idx, rng);
  ASSERT_EQ(neg.sizes(), (std::vector<int64_t>{10, 20}));
  for (int64_t i = 0; i < 10; ++i) {
    std::set<int64_t> seen;
    for (int64_t k = 0; k < 20; ++k) {
      const int64_t v = neg[i][k].item<int64_t>();
      EXPECT_NE(v, i);
      EXPECT_GE(v, 0);
      EXPECT_LT(v, 50);
      seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 20u);
  }
}

TEST(InstDisc, IndexOutOfRange) {
  Rng rng(1);
  MemoryBank bank(4, 3, 0.5, 2, rng);
  auto z = random_units(rng, 1, 3).to(torch::kFloat32);
  EXPECT_THROW(instdisc_loss(z, torch::tensor({4}, torch::kInt64), bank, Temperature(), rng),
               IndexOutOfRange);
  EXPECT_THROW(bank.update(z, torch::tensor({-1}, torch::kInt64)), IndexOutOfRange);
}

TEST(MemoryBankUpdate, FixedPoint) {
  Rng rng(2);
  MemoryBank bank(6, 4, 0.5, 3, rng);
  auto before = bank.slots().clone();
  bank.update(before.narrow(0, 2, 2), torch::tensor({2, 3}, torch::kInt64));
  EXPECT_LT(viewcraft::testing::max_abs_diff(bank.slots(), before), 1e-6);
}

TEST(MemoryBankUpdate, RateOneReplaces) {
  Rng rng(2);
  MemoryBank bank(6, 4, 1.0, 3, rng);
  auto z = random_units(rng, 1, 4).to(bank.slots().dtype());
  bank.update(z, torch::tensor({5}, torch::kInt64));
  EXPECT_TRUE(torch::equal(bank.slots()[5], z[0]));
}

TEST(MemoryBankUpdate, HalfRateHandExample) {
  MemoryBank bank(torch::tensor({{1.0, 0.0}, {0.0, 1.0}}, torch::kFloat64), 0.5, 1);
  auto updated = update_bank(bank, torch::tensor({{0.0, 1.0}}, torch::kFloat64),
                             torch::tensor({0}, torch::kInt64));
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(updated.slots()[0][0].item<double>(), r, 1e-12);
  EXPECT_NEAR(updated.slots()[0][1].item<double>(), r, 1e-12);
  EXPECT_TRUE(torch::equal(updated.slots()[1], bank.slots()[1]));
  // update_bank leaves the original untouched.
  EXPECT_EQ(bank.slots()[0][0].item<double>(), 1.0);
}

TEST(MemoryBankUpdate, SlotsStayUnitNorm) {
  Rng rng(13);
  MemoryBank bank(32, 16, 0.5, 8, rng);
  for (int step = 0; step < 300; ++step) {
    auto idx = rng.randperm(32).narrow(0, 0, 8);
    bank.update(rng.randn({8, 16}), idx);
  }
  auto norms = bank.slots().norm(2, 1);
  EXPECT_LT((norms - 1).abs().max().item<double>(), 1e-5);
}

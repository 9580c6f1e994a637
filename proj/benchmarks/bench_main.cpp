#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "viewcraft/encoder.hpp"
#include "viewcraft/objectives.hpp"
#include "viewcraft/perturb.hpp"
#include "viewcraft/viewmaker.hpp"

using namespace viewcraft;

namespace {

void BM_ProjectL1(benchmark::State& state) {
  Rng rng(1);
  auto p = rng.randn({state.range(0), 3, 32, 32});
  PerturbationBudget budget;
  for (auto _ : state) benchmark::DoNotOptimize(project_to_budget(p, budget));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProjectL1)->Arg(1)->Arg(64)->Arg(256);

void BM_NtXent(benchmark::State& state) {
  Rng rng(2);
  auto z = normalize_rows(rng.randn({2 * state.range(0), 128}));
  for (auto _ : state) benchmark::DoNotOptimize(nt_xent_loss(z, Temperature(0.07)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NtXent)->Arg(8)->Arg(64)->Arg(256);

void BM_Dct2d(benchmark::State& state) {
  Rng rng(3);
  auto x = rng.rand({16, 1, state.range(0), state.range(0)});
  for (auto _ : state) benchmark::DoNotOptimize(idct2d(dct2d(x)));
}
BENCHMARK(BM_Dct2d)->Arg(32)->Arg(64)->Arg(112);

void BM_GenerateView(benchmark::State& state) {
  auto vm = build_viewmaker(ViewmakerConfig{}, 4);
  Rng rng(5);
  auto x = rng.rand({state.range(0), 3, 32, 32});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(generate_view(vm, x, rng).view);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateView)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_EncodeSmallResNet18(benchmark::State& state) {
  auto enc = build_encoder(EncoderConfig{}, 6);
  auto x = Rng(7).rand({state.range(0), 3, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(encode(enc, x).embedding);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeSmallResNet18)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
